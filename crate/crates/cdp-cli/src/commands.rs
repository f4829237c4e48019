//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use cdp_core::channel::{make_fake, print_code, ChannelParams, PrintedImage};
use cdp_core::codebook::{train_codebook, BorderMode, Codebook};
use cdp_core::estimator::OtsuMvEstimator;
use cdp_core::eval::{
    run_experiment, stability_csv, stability_study, EvalReport, FakeKind, Printer, StabilityPoint,
};
use cdp_core::metrics::{
    build_mask, hamming_metric, lls_score, masked_hamming, masked_lls, masked_pixel_metric,
    pixel_metric, MetricKind, PixelMetric, Score,
};
use cdp_core::pgm;
use cdp_core::seeding::derive_seed;
use cdp_core::template::{generate_template, Template};
use cdp_core::TemplateEstimator;
use serde_json::json;

use crate::manifest::Manifest;
use crate::svg::{line_plot, Series, PALETTE};
use crate::CliError;

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Sorted list of the .pgm files in a directory.
fn list_pgm(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no .pgm files found",
            dir.display()
        )));
    }
    Ok(files)
}

fn parse_preset(name: &str, seed: u64) -> Result<ChannelParams, CliError> {
    match name {
        "A" | "a" => Ok(ChannelParams::printer_a(seed)),
        "B" | "b" => Ok(ChannelParams::printer_b(seed)),
        other => Err(CliError::Usage(format!(
            "unknown printer preset '{other}' (expected 'A' or 'B')"
        ))),
    }
}

pub struct Output {
    pub json: bool,
}

impl Output {
    fn done(&self, human: String, machine: serde_json::Value) {
        if self.json {
            println!("{machine}");
        } else {
            println!("{human}");
        }
    }
}

pub fn cmd_gen(
    out: &Path,
    n: usize,
    size: usize,
    density: f64,
    seed: u64,
    output: &Output,
) -> Result<(), CliError> {
    ensure_dir(out)?;
    let mut manifest = Manifest::new(
        "gen",
        Some(seed),
        json!({"n": n, "L": size, "p": density, "seed": seed}),
    );
    for i in 0..n {
        let t = generate_template(size, density, derive_seed(seed, i as u64))?;
        let path = out.join(format!("t_{i:04}.pgm"));
        pgm::write_template(&path, &t)?;
        manifest.record_output(&path);
    }
    let manifest_path = manifest.write(out)?;
    output.done(
        format!("wrote {n} templates to {}", out.display()),
        json!({"status": "ok", "templates": n, "manifest": manifest_path}),
    );
    Ok(())
}

pub fn cmd_print(
    input: &Path,
    out: &Path,
    preset: &str,
    seed: u64,
    output: &Output,
) -> Result<(), CliError> {
    let params = parse_preset(preset, seed)?;
    let files = list_pgm(input)?;
    ensure_dir(out)?;
    let mut manifest = Manifest::new(
        "print",
        Some(seed),
        serde_json::to_value(&params).unwrap_or_default(),
    );
    for (i, file) in files.iter().enumerate() {
        manifest.record_input(file)?;
        let template = pgm::read_template(file)?;
        let per_image = params.clone().with_seed(derive_seed(seed, i as u64));
        let image = print_code(&template, &per_image)?;
        let path = out.join(file.file_name().unwrap());
        pgm::write_image(&path, &image, Some(&per_image))?;
        manifest.record_output(&path);
    }
    let manifest_path = manifest.write(out)?;
    output.done(
        format!(
            "printed {} codes on preset {preset} to {}",
            files.len(),
            out.display()
        ),
        json!({"status": "ok", "images": files.len(), "manifest": manifest_path}),
    );
    Ok(())
}

pub fn cmd_attack(
    input: &Path,
    out: &Path,
    reprint: &str,
    seed: u64,
    k_override: Option<usize>,
    output: &Output,
) -> Result<(), CliError> {
    let params = parse_preset(reprint, seed)?;
    let files = list_pgm(input)?;
    ensure_dir(out)?;
    let mut manifest = Manifest::new(
        "attack",
        Some(seed),
        serde_json::to_value(&params).unwrap_or_default(),
    );
    for (i, file) in files.iter().enumerate() {
        manifest.record_input(file)?;
        let image = pgm::read_image(file, k_override)?;
        let per_image = params.clone().with_seed(derive_seed(seed, i as u64));
        let fake = make_fake(&image, &per_image)?;
        let path = out.join(file.file_name().unwrap());
        pgm::write_image(&path, &fake, Some(&per_image))?;
        manifest.record_output(&path);
    }
    let manifest_path = manifest.write(out)?;
    output.done(
        format!(
            "forged {} codes through preset {reprint} to {}",
            files.len(),
            out.display()
        ),
        json!({"status": "ok", "fakes": files.len(), "manifest": manifest_path}),
    );
    Ok(())
}

pub fn cmd_train(
    templates_dir: &Path,
    printed_dir: &Path,
    h: usize,
    border: BorderMode,
    out: &Path,
    output: &Output,
) -> Result<(), CliError> {
    let template_files = list_pgm(templates_dir)?;
    let printed_files = list_pgm(printed_dir)?;
    if template_files.len() != printed_files.len() {
        return Err(CliError::Usage(format!(
            "{} templates but {} printed images; the sets must pair up",
            template_files.len(),
            printed_files.len()
        )));
    }
    let mut manifest = Manifest::new(
        "train",
        None,
        json!({"h": h, "border": border.to_string()}),
    );
    let mut templates = Vec::with_capacity(template_files.len());
    let mut images = Vec::with_capacity(printed_files.len());
    for (t_file, x_file) in template_files.iter().zip(&printed_files) {
        manifest.record_input(t_file)?;
        manifest.record_input(x_file)?;
        let t = pgm::read_template(t_file)?;
        let x = pgm::read_image(x_file, None)?;
        if x.size() % t.size() != 0 {
            return Err(CliError::Usage(format!(
                "{}: image side {} is not a multiple of template side {}",
                x_file.display(),
                x.size(),
                t.size()
            )));
        }
        templates.push(t);
        images.push(x);
    }
    let k = images[0].size() / templates[0].size();
    let pairs: Vec<(&Template, &PrintedImage)> = templates.iter().zip(images.iter()).collect();
    let codebook = train_codebook(&pairs, &OtsuMvEstimator, h, k, border)?;
    fs::write(out, codebook.to_json()?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    manifest.record_output(out);
    let manifest_path = manifest.write(out)?;
    output.done(
        format!(
            "trained codebook over {} pairs: {} neighborhoods, {} symbols -> {}",
            pairs.len(),
            codebook.len(),
            codebook.global().count,
            out.display()
        ),
        json!({
            "status": "ok",
            "pairs": pairs.len(),
            "neighborhoods": codebook.len(),
            "symbols": codebook.global().count,
            "codebook": out,
            "manifest": manifest_path,
        }),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_auth(
    template_path: &Path,
    probe_path: &Path,
    codebook_path: &Path,
    metric: MetricKind,
    threshold: f64,
    mu: f64,
    border: Option<BorderMode>,
    output: &Output,
) -> Result<(), CliError> {
    let template = pgm::read_template(template_path)?;
    let codebook_json = fs::read_to_string(codebook_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", codebook_path.display())))?;
    let codebook = Codebook::from_json(&codebook_json)?;
    let border = border.unwrap_or_else(|| codebook.border_mode());
    let probe = pgm::read_image(probe_path, None)?;
    if probe.size() % template.size() != 0 {
        return Err(CliError::Usage(format!(
            "probe side {} is not a multiple of template side {}",
            probe.size(),
            template.size()
        )));
    }
    let k = probe.size() / template.size();
    let estimate = OtsuMvEstimator.estimate(&probe, k)?;

    let score: Score = match metric {
        MetricKind::Lls => lls_score(&estimate, &template, &codebook, border)?,
        MetricKind::Hamm => hamming_metric(&estimate, &template)?,
        MetricKind::Mse => pixel_metric(&template, &probe, PixelMetric::Mse, k)?,
        MetricKind::Pcor => pixel_metric(&template, &probe, PixelMetric::Pcor, k)?,
        masked => {
            let mask = build_mask(&template, &codebook, mu, border)?;
            match masked {
                MetricKind::MaskedLls => {
                    masked_lls(&estimate, &template, &codebook, &mask, border)?
                }
                MetricKind::MaskedHamm => masked_hamming(&estimate, &template, &mask)?,
                MetricKind::MaskedMse => {
                    masked_pixel_metric(&template, &probe, &mask, PixelMetric::Mse, k)?
                }
                MetricKind::MaskedPcor => {
                    masked_pixel_metric(&template, &probe, &mask, PixelMetric::Pcor, k)?
                }
                _ => unreachable!("base metrics handled above"),
            }
        }
    };
    // thresholds live on the higher-is-original axis
    let decision = if score.oriented() >= threshold {
        "original"
    } else {
        "fake"
    };
    output.done(
        format!(
            "metric={} score={} oriented={} threshold={} decision={decision}",
            metric.id(),
            score.value,
            score.oriented(),
            threshold
        ),
        json!({
            "status": "ok",
            "metric": metric.id(),
            "score": score.value,
            "oriented_score": score.oriented(),
            "threshold": threshold,
            "decision": decision,
            "fallback_count": score.fallback_count,
            "degenerate": score.degenerate,
        }),
    );
    Ok(())
}

fn write_report_files(out: &Path, report: &EvalReport, manifest: &mut Manifest) -> Result<(), CliError> {
    let write = |name: &str, contents: String, manifest: &mut Manifest| -> Result<(), CliError> {
        let path = out.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        manifest.record_output(&path);
        Ok(())
    };
    write("auc_runs.csv", report.runs_csv(), manifest)?;
    write("auc_summary.csv", report.summary_csv(), manifest)?;
    write("roc.csv", report.roc_csv(), manifest)?;
    write("summary.json", report.summary_json()?, manifest)?;
    write(
        "thresholds.json",
        serde_json::to_string_pretty(&report.thresholds)
            .map_err(|e| CliError::Runtime(e.to_string()))?,
        manifest,
    )?;

    // ROC figures for the likelihood and Hamming families
    let plot_metrics = [
        MetricKind::Lls,
        MetricKind::MaskedLls,
        MetricKind::Hamm,
        MetricKind::MaskedHamm,
    ];
    for printer in Printer::ALL {
        for metric in plot_metrics {
            if !report.config.metrics.contains(&metric) {
                continue;
            }
            let series: Vec<Series> = FakeKind::ALL
                .iter()
                .enumerate()
                .filter_map(|(i, fake)| {
                    report
                        .roc
                        .iter()
                        .find(|r| r.original == printer && r.fake == *fake && r.metric == metric)
                        .map(|r| Series {
                            label: format!("f^{fake}"),
                            color: PALETTE[i % PALETTE.len()],
                            points: r.points.iter().map(|p| (p.fpr, p.tpr)).collect(),
                        })
                })
                .collect();
            if series.is_empty() {
                continue;
            }
            let svg = line_plot(
                &format!("ROC, originals {printer}, {}", metric.id()),
                "false positive rate",
                "true positive rate",
                &series,
                Some((0.0, 1.0)),
            );
            let name = format!(
                "roc_{}_{}.svg",
                printer.label().to_lowercase(),
                metric.id().to_lowercase().replace('-', "")
            );
            write(&name, svg, manifest)?;
        }
    }
    Ok(())
}

pub fn cmd_eval(config_path: &Path, out: &Path, output: &Output) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let cfg = crate::config::parse_config(&text)?;
    ensure_dir(out)?;
    let mut manifest = Manifest::new(
        "eval",
        cfg.seeds.first().copied(),
        serde_json::to_value(&cfg).unwrap_or_default(),
    );
    manifest.record_input(config_path)?;
    let report = run_experiment(&cfg)?;
    write_report_files(out, &report, &mut manifest)?;
    let manifest_path = manifest.write(out)?;

    let mut lines = String::new();
    for total in &report.totals {
        lines.push_str(&format!("  {:7} total AUC {:.4}\n", total.metric.id(), total.mean_auc));
    }
    output.done(
        format!("evaluation finished; reports in {}\n{lines}", out.display()),
        json!({
            "status": "ok",
            "out": out,
            "totals": report.totals,
            "manifest": manifest_path,
        }),
    );
    Ok(())
}

pub fn cmd_stability(
    config_path: &Path,
    out: &Path,
    sizes: &[usize],
    n_reference: usize,
    repeats: usize,
    output: &Output,
) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", config_path.display())))?;
    let cfg = crate::config::parse_config(&text)?;
    ensure_dir(out)?;
    let mut manifest = Manifest::new(
        "stability",
        cfg.seeds.first().copied(),
        json!({
            "sizes": sizes,
            "n_reference": n_reference,
            "repeats": repeats,
            "config": serde_json::to_value(&cfg).unwrap_or_default(),
        }),
    );
    manifest.record_input(config_path)?;
    let points = stability_study(sizes, n_reference, repeats, &cfg)?;

    let csv_path = out.join("stability.csv");
    fs::write(&csv_path, stability_csv(&points))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", csv_path.display())))?;
    manifest.record_output(&csv_path);

    let svg = stability_plot(&points);
    let svg_path = out.join("stability.svg");
    fs::write(&svg_path, svg)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", svg_path.display())))?;
    manifest.record_output(&svg_path);
    let manifest_path = manifest.write(out)?;

    let human: String = points
        .iter()
        .map(|p| format!("  size {:4}: d1 = {:.5} ± {:.5}\n", p.size, p.mean_d1, p.std_d1))
        .collect();
    output.done(
        format!("stability study finished; reports in {}\n{human}", out.display()),
        json!({"status": "ok", "out": out, "points": points, "manifest": manifest_path}),
    );
    Ok(())
}

fn stability_plot(points: &[StabilityPoint]) -> String {
    let mean = Series {
        label: "mean d1".into(),
        color: PALETTE[0],
        points: points.iter().map(|p| (p.size as f64, p.mean_d1)).collect(),
    };
    let upper = Series {
        label: "mean + std".into(),
        color: PALETTE[1],
        points: points
            .iter()
            .map(|p| (p.size as f64, p.mean_d1 + p.std_d1))
            .collect(),
    };
    let lower = Series {
        label: "mean - std".into(),
        color: PALETTE[2],
        points: points
            .iter()
            .map(|p| (p.size as f64, (p.mean_d1 - p.std_d1).max(0.0)))
            .collect(),
    };
    line_plot(
        "Codebook variability vs. training-set size",
        "training pairs",
        "average |ΔP|",
        &[mean, upper, lower],
        None,
    )
}
