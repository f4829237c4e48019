//! Flat key-value experiment configuration files.
//!
//! Format: one `key = value` pair per line, `#` comments, a mandatory
//! `schema = 1` line. Unknown and duplicate keys are errors so that config
//! typos fail loudly. All other keys default to the desk-scale experiment.

use std::collections::BTreeMap;

use cdp_core::eval::ExperimentConfig;
use cdp_core::metrics::MetricKind;

use crate::CliError;

pub const CONFIG_SCHEMA: u32 = 1;

const KEYS: &[&str] = &[
    "schema",
    "L",
    "p",
    "n_templates",
    "train",
    "val",
    "test",
    "h",
    "k",
    "border",
    "mu",
    "tune_mu",
    "metrics",
    "seeds",
    "printer_a.blur_sigma",
    "printer_a.dot_gain_gamma",
    "printer_a.noise_sigma",
    "printer_b.blur_sigma",
    "printer_b.dot_gain_gamma",
    "printer_b.noise_sigma",
];

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected 'key = value'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!(
                "config line {}: unknown key '{key}'",
                lineno + 1
            )));
        }
        if pairs.insert(key.clone(), value).is_some() {
            return Err(CliError::Usage(format!(
                "config line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(pairs)
}

fn parse_value<T: std::str::FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match pairs.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
    }
}

/// Parse a config document into an experiment configuration, starting from
/// the desk-scale defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let pairs = parse_pairs(text)?;
    let schema: u32 = parse_value(&pairs, "schema")?
        .ok_or_else(|| CliError::Usage("config is missing the 'schema' key".into()))?;
    if schema != CONFIG_SCHEMA {
        return Err(CliError::Usage(format!(
            "unsupported config schema {schema}, expected {CONFIG_SCHEMA}"
        )));
    }

    let mut cfg = ExperimentConfig::default();
    if let Some(v) = parse_value(&pairs, "L")? {
        cfg.template_size = v;
    }
    if let Some(v) = parse_value(&pairs, "p")? {
        cfg.density = v;
    }
    if let Some(v) = parse_value(&pairs, "n_templates")? {
        cfg.n_templates = v;
    }
    if let Some(v) = parse_value(&pairs, "train")? {
        cfg.train = v;
    }
    if let Some(v) = parse_value(&pairs, "val")? {
        cfg.val = v;
    }
    if let Some(v) = parse_value(&pairs, "test")? {
        cfg.test = v;
    }
    if let Some(v) = parse_value(&pairs, "h")? {
        cfg.h = v;
    }
    if let Some(v) = parse_value(&pairs, "k")? {
        cfg.k = v;
    }
    if let Some(v) = parse_value::<String>(&pairs, "border")? {
        cfg.border_mode = v
            .parse()
            .map_err(|e| CliError::Usage(format!("config key 'border': {e}")))?;
    }
    if let Some(v) = parse_value(&pairs, "mu")? {
        cfg.mu = v;
    }
    if let Some(v) = parse_value(&pairs, "tune_mu")? {
        cfg.tune_mu = v;
    }
    if let Some(raw) = pairs.get("metrics") {
        let metrics: Result<Vec<MetricKind>, _> = raw
            .split(',')
            .map(|s| s.trim().parse::<MetricKind>())
            .collect();
        cfg.metrics = metrics.map_err(|e| CliError::Usage(format!("config key 'metrics': {e}")))?;
    }
    if let Some(raw) = pairs.get("seeds") {
        let seeds: Result<Vec<u64>, _> = raw.split(',').map(|s| s.trim().parse::<u64>()).collect();
        cfg.seeds = seeds.map_err(|e| CliError::Usage(format!("config key 'seeds': {e}")))?;
    }
    if let Some(v) = parse_value(&pairs, "printer_a.blur_sigma")? {
        cfg.printer_a.blur_sigma = v;
    }
    if let Some(v) = parse_value(&pairs, "printer_a.dot_gain_gamma")? {
        cfg.printer_a.dot_gain_gamma = v;
    }
    if let Some(v) = parse_value(&pairs, "printer_a.noise_sigma")? {
        cfg.printer_a.noise_sigma = v;
    }
    if let Some(v) = parse_value(&pairs, "printer_b.blur_sigma")? {
        cfg.printer_b.blur_sigma = v;
    }
    if let Some(v) = parse_value(&pairs, "printer_b.dot_gain_gamma")? {
        cfg.printer_b.dot_gain_gamma = v;
    }
    if let Some(v) = parse_value(&pairs, "printer_b.noise_sigma")? {
        cfg.printer_b.noise_sigma = v;
    }
    // magnification is a single knob shared by both presets
    cfg.printer_a.k = cfg.k;
    cfg.printer_b.k = cfg.k;

    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdp_core::codebook::BorderMode;

    #[test]
    fn defaults_plus_overrides() {
        let cfg = parse_config(
            "# experiment\nschema = 1\nL = 32\nseeds = 5,6\nborder = white_pad\nmetrics = LLS,M-LLS\n",
        )
        .unwrap();
        assert_eq!(cfg.template_size, 32);
        assert_eq!(cfg.seeds, vec![5, 6]);
        assert_eq!(cfg.border_mode, BorderMode::WhitePad);
        assert_eq!(cfg.metrics.len(), 2);
        // untouched keys keep the defaults
        assert_eq!(cfg.n_templates, 100);
        assert_eq!(cfg.k, 3);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(parse_config("L = 32\n").is_err()); // missing schema
        assert!(parse_config("schema = 2\n").is_err());
        assert!(parse_config("schema = 1\nnope = 4\n").is_err());
        assert!(parse_config("schema = 1\nL = 32\nL = 64\n").is_err());
        assert!(parse_config("schema = 1\nL = pony\n").is_err());
        assert!(parse_config("schema = 1\ntrain = 400\n").is_err()); // fails validate()
    }
}
