//! Authentication scores: posterior log-likelihood, baseline pixel metrics,
//! Hamming distance, and their attention-masked variants.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::channel::{upsample_bits, PrintedImage};
use crate::codebook::{admitted_symbols, encode_neighborhood, BorderMode, Codebook};
use crate::error::{Error, Result};
use crate::estimator::EstimatedTemplate;
use crate::grid::BitGrid;
use crate::template::Template;

/// All reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    Lls,
    Mse,
    Pcor,
    Hamm,
    MaskedLls,
    MaskedMse,
    MaskedPcor,
    MaskedHamm,
}

/// Which direction of the score axis points toward originals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    HigherIsOriginal,
    LowerIsOriginal,
}

impl Serialize for MetricKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.id())
    }
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Lls,
        MetricKind::Mse,
        MetricKind::Pcor,
        MetricKind::Hamm,
        MetricKind::MaskedLls,
        MetricKind::MaskedMse,
        MetricKind::MaskedPcor,
        MetricKind::MaskedHamm,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            MetricKind::Lls => "LLS",
            MetricKind::Mse => "MSE",
            MetricKind::Pcor => "PCOR",
            MetricKind::Hamm => "HAMM",
            MetricKind::MaskedLls => "M-LLS",
            MetricKind::MaskedMse => "M-MSE",
            MetricKind::MaskedPcor => "M-PCOR",
            MetricKind::MaskedHamm => "M-HAMM",
        }
    }

    /// Masked variants inherit the orientation of their base metric.
    pub fn orientation(&self) -> Orientation {
        match self.base() {
            MetricKind::Lls | MetricKind::Pcor => Orientation::HigherIsOriginal,
            _ => Orientation::LowerIsOriginal,
        }
    }

    pub fn is_masked(&self) -> bool {
        matches!(
            self,
            MetricKind::MaskedLls
                | MetricKind::MaskedMse
                | MetricKind::MaskedPcor
                | MetricKind::MaskedHamm
        )
    }

    /// The unmasked counterpart (identity for unmasked metrics).
    pub fn base(&self) -> MetricKind {
        match self {
            MetricKind::MaskedLls => MetricKind::Lls,
            MetricKind::MaskedMse => MetricKind::Mse,
            MetricKind::MaskedPcor => MetricKind::Pcor,
            MetricKind::MaskedHamm => MetricKind::Hamm,
            other => *other,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .iter()
            .copied()
            .find(|m| m.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown metric '{s}'")))
    }
}

/// A computed authentication score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub value: f64,
    pub metric: MetricKind,
    /// Number of codebook lookups that hit an unseen neighborhood.
    pub fallback_count: usize,
    /// Set when the score had no usable support (empty mask, zero variance).
    pub degenerate: bool,
}

impl Score {
    fn new(value: f64, metric: MetricKind) -> Self {
        Score {
            value,
            metric,
            fallback_count: 0,
            degenerate: false,
        }
    }

    pub fn orientation(&self) -> Orientation {
        self.metric.orientation()
    }

    /// Project onto a single higher-is-original axis: lower-is-original
    /// scores are negated. Ranking under this transform is exactly the
    /// ranking the metric defines.
    pub fn oriented(&self) -> f64 {
        match self.orientation() {
            Orientation::HigherIsOriginal => self.value,
            Orientation::LowerIsOriginal => -self.value,
        }
    }
}

/// Per-symbol attention mask: keeps symbols whose training-time bit-error
/// probability is below the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    bits: BitGrid,
    mu: f64,
    codebook_hash: u64,
}

impl AttentionMask {
    pub fn from_bits(bits: BitGrid, mu: f64, codebook_hash: u64) -> Self {
        AttentionMask {
            bits,
            mu,
            codebook_hash,
        }
    }

    pub fn bits(&self) -> &BitGrid {
        &self.bits
    }

    pub fn size(&self) -> usize {
        self.bits.size()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn codebook_hash(&self) -> u64 {
        self.codebook_hash
    }

    pub fn kept(&self) -> usize {
        self.bits.count_ones()
    }
}

/// Build the attention mask for a template: m = 1 exactly where
/// P_b(ω) < μ (raw stored probabilities, global fallback for unseen codes).
/// Symbols excluded by the border mode get m = 0. Thresholds above 1 clamp
/// to 1, so only symbols with P_b = 1 are excluded there.
pub fn build_mask(
    t: &Template,
    cb: &Codebook,
    mu: f64,
    border_mode: BorderMode,
) -> Result<AttentionMask> {
    if mu.is_nan() || mu < 0.0 {
        return Err(Error::Parameter(format!(
            "mask threshold must be >= 0, got {mu}"
        )));
    }
    let effective_mu = mu.min(1.0);
    let mut bits = BitGrid::new(t.size());
    for &(i, j) in &admitted_symbols(t.size(), cb.h(), border_mode)? {
        let omega = encode_neighborhood(t.bits(), i, j, cb.h(), border_mode)?;
        if cb.raw_p_b(omega)? < effective_mu {
            bits.set(i, j, 1);
        }
    }
    Ok(AttentionMask::from_bits(bits, mu, cb.content_hash()))
}

fn check_estimate_compat(t_est: &EstimatedTemplate, t: &Template, cb: &Codebook) -> Result<()> {
    if t_est.size() != t.size() {
        return Err(Error::Dimension(format!(
            "estimate side {} but template side {}",
            t_est.size(),
            t.size()
        )));
    }
    if t_est.estimator_id() != cb.estimator_id() {
        return Err(Error::Incompatible(format!(
            "estimate from '{}' scored against a codebook trained with '{}'",
            t_est.estimator_id(),
            cb.estimator_id()
        )));
    }
    Ok(())
}

fn lls_over(
    t_est: &EstimatedTemplate,
    t: &Template,
    cb: &Codebook,
    border_mode: BorderMode,
    mask: Option<&AttentionMask>,
    metric: MetricKind,
) -> Result<Score> {
    check_estimate_compat(t_est, t, cb)?;
    if let Some(m) = mask {
        if m.size() != t.size() {
            return Err(Error::Dimension(format!(
                "mask side {} but template side {}",
                m.size(),
                t.size()
            )));
        }
        if m.codebook_hash() != cb.content_hash() {
            return Err(Error::Incompatible(
                "attention mask was built from a different codebook".into(),
            ));
        }
    }
    let mut sum = 0.0;
    let mut fallbacks = 0usize;
    let mut terms = 0usize;
    for &(i, j) in &admitted_symbols(t.size(), cb.h(), border_mode)? {
        if let Some(m) = mask {
            if m.bits().get(i, j) == 0 {
                continue;
            }
        }
        let omega = encode_neighborhood(t.bits(), i, j, cb.h(), border_mode)?;
        let q = cb.query(omega)?;
        if q.fallback {
            fallbacks += 1;
        }
        // P(estimate = observed bit | ω) = 1 - |bit - P(ω)|
        let prob = if t_est.bits().get(i, j) == 1 {
            q.p
        } else {
            1.0 - q.p
        };
        sum += prob.ln();
        terms += 1;
    }
    let mut score = Score::new(sum, metric);
    score.fallback_count = fallbacks;
    if terms == 0 {
        score.degenerate = true;
    }
    Ok(score)
}

/// Posterior log-likelihood of an estimated template under a codebook:
/// Σ log(1 − |t̃ − P(ω)|) over the admitted symbols, with clamped
/// probabilities from the codebook query.
pub fn lls_score(
    t_est: &EstimatedTemplate,
    t: &Template,
    cb: &Codebook,
    border_mode: BorderMode,
) -> Result<Score> {
    lls_over(t_est, t, cb, border_mode, None, MetricKind::Lls)
}

/// Log-likelihood restricted to mask = 1 symbols. Stays an unnormalized sum
/// like the unmasked score, so an all-ones mask reproduces it exactly.
pub fn masked_lls(
    t_est: &EstimatedTemplate,
    t: &Template,
    cb: &Codebook,
    mask: &AttentionMask,
    border_mode: BorderMode,
) -> Result<Score> {
    lls_over(
        t_est,
        t,
        cb,
        border_mode,
        Some(mask),
        MetricKind::MaskedLls,
    )
}

/// Pixel-domain metric family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelMetric {
    Mse,
    Pcor,
}

fn pixel_metric_over(
    t: &Template,
    y: &PrintedImage,
    kind: PixelMetric,
    k: usize,
    mask: Option<&AttentionMask>,
) -> Result<Score> {
    if y.size() != t.size() * k {
        return Err(Error::Dimension(format!(
            "probe side {} does not match template side {} at k={k}",
            y.size(),
            t.size()
        )));
    }
    let metric = match (kind, mask.is_some()) {
        (PixelMetric::Mse, false) => MetricKind::Mse,
        (PixelMetric::Mse, true) => MetricKind::MaskedMse,
        (PixelMetric::Pcor, false) => MetricKind::Pcor,
        (PixelMetric::Pcor, true) => MetricKind::MaskedPcor,
    };
    if let Some(m) = mask {
        if m.size() != t.size() {
            return Err(Error::Dimension(format!(
                "mask side {} but template side {}",
                m.size(),
                t.size()
            )));
        }
    }
    // black symbol renders as intensity 0.0, white as 1.0
    let reference = upsample_bits(t.bits(), k, 0.0, 1.0);
    let n = y.size();

    match kind {
        PixelMetric::Mse => {
            let mut sum = 0.0;
            let mut used = 0usize;
            for r in 0..n {
                for c in 0..n {
                    if let Some(m) = mask {
                        if m.bits().get(r / k, c / k) == 0 {
                            continue;
                        }
                    }
                    let d = reference[r * n + c] - y.get(r, c);
                    sum += d * d;
                    used += 1;
                }
            }
            if used == 0 {
                let mut s = Score::new(0.0, metric);
                s.degenerate = true;
                return Ok(s);
            }
            Ok(Score::new(sum / used as f64, metric))
        }
        PixelMetric::Pcor => {
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            let mut used = 0usize;
            for r in 0..n {
                for c in 0..n {
                    if let Some(m) = mask {
                        if m.bits().get(r / k, c / k) == 0 {
                            continue;
                        }
                    }
                    let a = reference[r * n + c];
                    let b = y.get(r, c);
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                    used += 1;
                }
            }
            if used == 0 {
                let mut s = Score::new(0.0, metric);
                s.degenerate = true;
                return Ok(s);
            }
            let nf = used as f64;
            let var_x = sxx - sx * sx / nf;
            let var_y = syy - sy * sy / nf;
            if var_x <= 0.0 || var_y <= 0.0 {
                let mut s = Score::new(0.0, metric);
                s.degenerate = true;
                return Ok(s);
            }
            let cov = sxy - sx * sy / nf;
            Ok(Score::new(cov / (var_x * var_y).sqrt(), metric))
        }
    }
}

/// MSE or Pearson correlation between the probe pixels and the template
/// upsampled nearest-neighbor to the pixel grid.
pub fn pixel_metric(t: &Template, y: &PrintedImage, kind: PixelMetric, k: usize) -> Result<Score> {
    pixel_metric_over(t, y, kind, k, None)
}

/// Pixel metric restricted to the mask (upsampled nearest-neighbor);
/// MSE renormalizes by the number of unmasked pixels.
pub fn masked_pixel_metric(
    t: &Template,
    y: &PrintedImage,
    mask: &AttentionMask,
    kind: PixelMetric,
    k: usize,
) -> Result<Score> {
    pixel_metric_over(t, y, kind, k, Some(mask))
}

/// Fraction of symbols where the estimate disagrees with the template.
pub fn hamming_metric(t_est: &EstimatedTemplate, t: &Template) -> Result<Score> {
    let differing = t_est.bits().hamming(t.bits())?;
    let total = t.size() * t.size();
    Ok(Score::new(
        differing as f64 / total as f64,
        MetricKind::Hamm,
    ))
}

/// Hamming distance over mask = 1 symbols, normalized by the mask size.
pub fn masked_hamming(
    t_est: &EstimatedTemplate,
    t: &Template,
    mask: &AttentionMask,
) -> Result<Score> {
    if t_est.size() != t.size() || mask.size() != t.size() {
        return Err(Error::Dimension(format!(
            "estimate side {}, template side {}, mask side {} must all match",
            t_est.size(),
            t.size(),
            mask.size()
        )));
    }
    let mut differing = 0usize;
    let mut used = 0usize;
    for r in 0..t.size() {
        for c in 0..t.size() {
            if mask.bits().get(r, c) == 0 {
                continue;
            }
            used += 1;
            if t_est.bits().get(r, c) != t.get(r, c) {
                differing += 1;
            }
        }
    }
    if used == 0 {
        let mut s = Score::new(0.0, MetricKind::MaskedHamm);
        s.degenerate = true;
        return Ok(s);
    }
    Ok(Score::new(
        differing as f64 / used as f64,
        MetricKind::MaskedHamm,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ideal_print, SourceId};
    use crate::codebook::{train_codebook, Codebook};
    use crate::estimator::BscEstimator;
    use crate::template::generate_template;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Stub codebook with P(ω) = num/denom for all 512 3×3 codes.
    fn uniform_codebook(num: u64, denom: u64) -> Codebook {
        Codebook::from_entries(
            3,
            1,
            "bsc-stub",
            BorderMode::Interior,
            (0u64..512).map(|c| (c, denom, num)),
        )
        .unwrap()
    }

    fn estimate_of(t: &Template) -> EstimatedTemplate {
        EstimatedTemplate::new(t.bits().clone(), "bsc-stub")
    }

    fn all_ones_mask(t: &Template, cb: &Codebook, border_mode: BorderMode) -> AttentionMask {
        // mu above every stored P_b keeps every admitted symbol
        build_mask(t, cb, 1.0, border_mode).unwrap()
    }

    #[test]
    fn lls_uniform_posterior() {
        let t = generate_template(4, 0.5, 1).unwrap();
        let cb = uniform_codebook(1, 2);
        let est = estimate_of(&t);
        let score = lls_score(&est, &t, &cb, BorderMode::Interior).unwrap();
        // 4 interior symbols, each log(0.5)
        assert!((score.value - 4.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((score.value + 2.772589).abs() < 1e-5);
        assert_eq!(score.fallback_count, 0);
    }

    #[test]
    fn lls_clamp_boundary() {
        let t = generate_template(6, 1.0, 2).unwrap(); // all black
        let cb = uniform_codebook(10, 10); // P = 1.0 everywhere, clamped
        let est = estimate_of(&t);
        let score = lls_score(&est, &t, &cb, BorderMode::Interior).unwrap();
        let n = 16.0; // (6-2)^2 admitted symbols
        assert!((score.value - n * (0.9999f64).ln()).abs() < 1e-12);
        assert!(score.value < 0.0);
    }

    #[test]
    fn lls_counts_fallbacks() {
        let t = generate_template(5, 0.5, 3).unwrap();
        // single-entry codebook: almost every window falls back
        let cb = Codebook::from_entries(3, 1, "bsc-stub", BorderMode::Interior, [(0u64, 4u64, 1u64)])
            .unwrap();
        let est = estimate_of(&t);
        let score = lls_score(&est, &t, &cb, BorderMode::Interior).unwrap();
        assert!(score.fallback_count > 0);
    }

    #[test]
    fn lls_rejects_estimator_mismatch() {
        let t = generate_template(5, 0.5, 3).unwrap();
        let cb = uniform_codebook(1, 2);
        let est = EstimatedTemplate::new(t.bits().clone(), "otsu-mv");
        assert!(matches!(
            lls_score(&est, &t, &cb, BorderMode::Interior),
            Err(Error::Incompatible(_))
        ));
    }

    /// Brute-force oracle: product of per-symbol probabilities, then one log.
    #[test]
    fn lls_matches_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for round in 0..25u64 {
            let t = generate_template(8, 0.5, 4000 + round).unwrap();
            let cb = Codebook::from_entries(
                3,
                1,
                "bsc-stub",
                BorderMode::Interior,
                (0u64..512).map(|c| {
                    let denom = 1000;
                    (c, denom, rng.random_range(0..=denom))
                }),
            )
            .unwrap();
            // estimate = template with random flips
            let mut bits = t.bits().clone();
            for r in 0..8 {
                for c in 0..8 {
                    if rng.random::<f64>() < 0.3 {
                        bits.set(r, c, 1 - bits.get(r, c));
                    }
                }
            }
            let est = EstimatedTemplate::new(bits, "bsc-stub");

            let fast = lls_score(&est, &t, &cb, BorderMode::Interior).unwrap();

            let mut product = 1.0f64;
            for i in 1..7 {
                for j in 1..7 {
                    let omega =
                        encode_neighborhood(t.bits(), i, j, 3, BorderMode::Interior).unwrap();
                    let p = cb.query(omega).unwrap().p;
                    let t_bit = est.bits().get(i, j) as f64;
                    product *= 1.0 - (t_bit - p).abs();
                }
            }
            assert!(
                (fast.value - product.ln()).abs() < 1e-9,
                "round {round}: {} vs {}",
                fast.value,
                product.ln()
            );
        }
    }

    #[test]
    fn mask_thresholds() {
        let t = generate_template(8, 0.5, 9).unwrap();
        let cb = uniform_codebook(1, 10); // P_b = 0.1 or 0.9 depending on center
        // mu = 0 keeps nothing
        let m = build_mask(&t, &cb, 0.0, BorderMode::Interior).unwrap();
        assert_eq!(m.kept(), 0);
        // negative mu is a parameter error
        assert!(build_mask(&t, &cb, -0.1, BorderMode::Interior).is_err());
        // border symbols are never kept in interior mode
        let m = build_mask(&t, &cb, 1.0, BorderMode::Interior).unwrap();
        for i in 0..8 {
            assert_eq!(m.bits().get(0, i), 0);
            assert_eq!(m.bits().get(7, i), 0);
        }
        assert_eq!(m.kept(), 36);
    }

    #[test]
    fn mask_mu_above_one_excludes_only_certain_flips() {
        // P_b = 1.0 for codes with center bit 0 (always estimated black)
        let cb = Codebook::from_entries(
            3,
            1,
            "bsc-stub",
            BorderMode::Interior,
            (0u64..512).map(|c| (c, 10u64, 10u64)),
        )
        .unwrap();
        let t = generate_template(8, 0.5, 10).unwrap();
        let m = build_mask(&t, &cb, 1.5, BorderMode::Interior).unwrap();
        for i in 1..7 {
            for j in 1..7 {
                let expected = u8::from(t.get(i, j) == 1); // P_b = 0 iff center black
                assert_eq!(m.bits().get(i, j), expected, "symbol ({i},{j})");
            }
        }
    }

    /// Under a BSC stub at q = 0.1 every trained P_b concentrates near 0.1,
    /// so a mu = 0.2 mask admits every interior symbol.
    #[test]
    fn bsc_mask_admits_everything() {
        let estimator = BscEstimator::new(0.1, 77).unwrap();
        let pairs: Vec<_> = (0..50u64)
            .map(|i| {
                let t = generate_template(64, 0.5, 800 + i).unwrap();
                let img = ideal_print(t.bits(), 1).unwrap();
                (t, img)
            })
            .collect();
        let refs: Vec<_> = pairs.iter().map(|(t, x)| (t, x)).collect();
        let cb = train_codebook(&refs, &estimator, 3, 1, BorderMode::Interior).unwrap();
        let t = generate_template(16, 0.5, 999).unwrap();
        let mask = build_mask(&t, &cb, 0.2, BorderMode::Interior).unwrap();
        assert_eq!(mask.kept(), 14 * 14);
    }

    #[test]
    fn pixel_metric_identity_and_complement() {
        let t = generate_template(4, 0.5, 20).unwrap();
        let ideal = ideal_print(t.bits(), 3).unwrap();
        let mse = pixel_metric(&t, &ideal, PixelMetric::Mse, 3).unwrap();
        assert_eq!(mse.value, 0.0);
        let pcor = pixel_metric(&t, &ideal, PixelMetric::Pcor, 3).unwrap();
        assert!((pcor.value - 1.0).abs() < 1e-12);

        let complement = ideal_print(&t.bits().complement(), 3).unwrap();
        let anti = pixel_metric(&t, &complement, PixelMetric::Pcor, 3).unwrap();
        assert!((anti.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pixel_metric_zero_variance_is_degenerate() {
        let t = generate_template(4, 1.0, 21).unwrap(); // constant template
        let probe = ideal_print(generate_template(4, 0.5, 22).unwrap().bits(), 2).unwrap();
        let s = pixel_metric(&t, &probe, PixelMetric::Pcor, 2).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.value, 0.0);
    }

    /// Direct-formula oracle on random instances.
    #[test]
    fn pixel_metric_matches_formula_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for round in 0..20u64 {
            let t = generate_template(4, 0.5, 5000 + round).unwrap();
            let n = 12usize;
            let pixels: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
            let y = PrintedImage::from_pixels(n, 3, pixels.clone(), SourceId::Synthetic).unwrap();

            let up = upsample_bits(t.bits(), 3, 0.0, 1.0);
            let mse_expected: f64 = up
                .iter()
                .zip(&pixels)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / (n * n) as f64;
            let mse = pixel_metric(&t, &y, PixelMetric::Mse, 3).unwrap();
            assert!((mse.value - mse_expected).abs() < 1e-12);

            let mean_x = up.iter().sum::<f64>() / (n * n) as f64;
            let mean_y = pixels.iter().sum::<f64>() / (n * n) as f64;
            let cov: f64 = up
                .iter()
                .zip(&pixels)
                .map(|(a, b)| (a - mean_x) * (b - mean_y))
                .sum();
            let vx: f64 = up.iter().map(|a| (a - mean_x) * (a - mean_x)).sum();
            let vy: f64 = pixels.iter().map(|b| (b - mean_y) * (b - mean_y)).sum();
            let pcor_expected = cov / (vx * vy).sqrt();
            let pcor = pixel_metric(&t, &y, PixelMetric::Pcor, 3).unwrap();
            assert!((pcor.value - pcor_expected).abs() < 1e-9);
        }
    }

    #[test]
    fn hamming_examples() {
        let t = generate_template(8, 0.5, 30).unwrap();
        let same = estimate_of(&t);
        assert_eq!(hamming_metric(&same, &t).unwrap().value, 0.0);
        let complement = EstimatedTemplate::new(t.bits().complement(), "bsc-stub");
        assert_eq!(hamming_metric(&complement, &t).unwrap().value, 1.0);

        let mut one_flip = t.bits().clone();
        one_flip.set(3, 3, 1 - one_flip.get(3, 3));
        let est = EstimatedTemplate::new(one_flip, "bsc-stub");
        assert!((hamming_metric(&est, &t).unwrap().value - 1.0 / 64.0).abs() < 1e-15);

        let small = EstimatedTemplate::new(BitGrid::new(4), "bsc-stub");
        assert!(hamming_metric(&small, &t).is_err());
    }

    #[test]
    fn all_ones_mask_reproduces_unmasked_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let t = generate_template(8, 0.5, 40).unwrap();
        let cb = uniform_codebook(3, 10);
        // estimate with a few flips
        let mut bits = t.bits().clone();
        for r in 0..8 {
            for c in 0..8 {
                if rng.random::<f64>() < 0.2 {
                    bits.set(r, c, 1 - bits.get(r, c));
                }
            }
        }
        let est = EstimatedTemplate::new(bits, "bsc-stub");
        let probe_pixels: Vec<f64> = (0..576).map(|_| rng.random::<f64>()).collect();
        let y = PrintedImage::from_pixels(24, 3, probe_pixels, SourceId::Synthetic).unwrap();

        // white_pad admits every symbol, so mu=1 yields an all-ones mask
        let mask = all_ones_mask(&t, &cb, BorderMode::WhitePad);
        assert_eq!(mask.kept(), 64);

        let lls_all = lls_score(&est, &t, &cb, BorderMode::WhitePad).unwrap();
        let mlls = masked_lls(&est, &t, &cb, &mask, BorderMode::WhitePad).unwrap();
        assert_eq!(lls_all.value, mlls.value);

        let mse = pixel_metric(&t, &y, PixelMetric::Mse, 3).unwrap();
        let mmse = masked_pixel_metric(&t, &y, &mask, PixelMetric::Mse, 3).unwrap();
        assert_eq!(mse.value, mmse.value);

        let pcor = pixel_metric(&t, &y, PixelMetric::Pcor, 3).unwrap();
        let mpcor = masked_pixel_metric(&t, &y, &mask, PixelMetric::Pcor, 3).unwrap();
        assert_eq!(pcor.value, mpcor.value);

        let hamm = hamming_metric(&est, &t).unwrap();
        let mhamm = masked_hamming(&est, &t, &mask).unwrap();
        assert_eq!(hamm.value, mhamm.value);
    }

    #[test]
    fn all_zero_mask_is_degenerate() {
        let t = generate_template(6, 0.5, 50).unwrap();
        let cb = uniform_codebook(2, 10);
        let mask = build_mask(&t, &cb, 0.0, BorderMode::Interior).unwrap();
        let est = estimate_of(&t);
        let y = ideal_print(t.bits(), 2).unwrap();

        assert!(masked_lls(&est, &t, &cb, &mask, BorderMode::Interior)
            .unwrap()
            .degenerate);
        assert!(
            masked_pixel_metric(&t, &y, &mask, PixelMetric::Mse, 2)
                .unwrap()
                .degenerate
        );
        assert!(masked_hamming(&est, &t, &mask).unwrap().degenerate);
    }

    /// Random-mask oracle: masked metrics equal their direct masked-sum
    /// evaluation.
    #[test]
    fn masked_metrics_match_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        for round in 0..10u64 {
            let t = generate_template(6, 0.5, 6000 + round).unwrap();
            let cb = uniform_codebook(4, 10);
            let mut mask_bits = BitGrid::new(6);
            for r in 0..6 {
                for c in 0..6 {
                    if rng.random::<bool>() {
                        mask_bits.set(r, c, 1);
                    }
                }
            }
            let mask = AttentionMask::from_bits(mask_bits.clone(), 0.5, cb.content_hash());
            let pixels: Vec<f64> = (0..144).map(|_| rng.random::<f64>()).collect();
            let y = PrintedImage::from_pixels(12, 2, pixels.clone(), SourceId::Synthetic).unwrap();

            let mmse = masked_pixel_metric(&t, &y, &mask, PixelMetric::Mse, 2).unwrap();
            let up = upsample_bits(t.bits(), 2, 0.0, 1.0);
            let mut sum = 0.0;
            let mut used = 0usize;
            for r in 0..12 {
                for c in 0..12 {
                    if mask_bits.get(r / 2, c / 2) == 1 {
                        let d = up[r * 12 + c] - pixels[r * 12 + c];
                        sum += d * d;
                        used += 1;
                    }
                }
            }
            if used > 0 {
                assert!((mmse.value - sum / used as f64).abs() < 1e-12);
            }

            let mut est_bits = t.bits().clone();
            for r in 0..6 {
                for c in 0..6 {
                    if rng.random::<f64>() < 0.3 {
                        est_bits.set(r, c, 1 - est_bits.get(r, c));
                    }
                }
            }
            let est = EstimatedTemplate::new(est_bits.clone(), "bsc-stub");
            let mhamm = masked_hamming(&est, &t, &mask).unwrap();
            let mut diff = 0usize;
            let mut used = 0usize;
            for r in 0..6 {
                for c in 0..6 {
                    if mask_bits.get(r, c) == 1 {
                        used += 1;
                        if est_bits.get(r, c) != t.get(r, c) {
                            diff += 1;
                        }
                    }
                }
            }
            if used > 0 {
                assert!((mhamm.value - diff as f64 / used as f64).abs() < 1e-15);
            }
        }
    }

    /// Flipping one estimated symbol from agreeing with a confident
    /// prediction to disagreeing strictly decreases the likelihood.
    #[test]
    fn lls_monotone_under_single_flip() {
        let t = generate_template(5, 1.0, 60).unwrap(); // all black
        let cb = uniform_codebook(9, 10); // P = 0.9 > 0.5
        let agree = estimate_of(&t);
        let s_agree = lls_score(&agree, &t, &cb, BorderMode::Interior).unwrap();
        let mut flipped_bits = t.bits().clone();
        flipped_bits.set(2, 2, 0);
        let disagree = EstimatedTemplate::new(flipped_bits, "bsc-stub");
        let s_disagree = lls_score(&disagree, &t, &cb, BorderMode::Interior).unwrap();
        assert!(s_disagree.value < s_agree.value);
    }

    #[test]
    fn lls_is_never_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        for round in 0..20u64 {
            let t = generate_template(6, 0.5, 7000 + round).unwrap();
            let cb = Codebook::from_entries(
                3,
                1,
                "bsc-stub",
                BorderMode::Interior,
                (0u64..512).map(|c| (c, 100, rng.random_range(0..=100u64))),
            )
            .unwrap();
            let mut bits = t.bits().clone();
            for r in 0..6 {
                for c in 0..6 {
                    if rng.random::<bool>() {
                        bits.set(r, c, 1 - bits.get(r, c));
                    }
                }
            }
            let est = EstimatedTemplate::new(bits, "bsc-stub");
            for mode in [BorderMode::Interior, BorderMode::WhitePad] {
                let s = lls_score(&est, &t, &cb, mode).unwrap();
                assert!(s.value <= 0.0);
            }
        }
    }

    #[test]
    fn score_orientation_axis() {
        let hamm = Score::new(0.25, MetricKind::Hamm);
        assert_eq!(hamm.oriented(), -0.25);
        let lls = Score::new(-3.0, MetricKind::Lls);
        assert_eq!(lls.oriented(), -3.0);
        assert_eq!(MetricKind::MaskedMse.orientation(), Orientation::LowerIsOriginal);
        assert_eq!(MetricKind::MaskedPcor.orientation(), Orientation::HigherIsOriginal);
        assert_eq!("m-lls".parse::<MetricKind>().unwrap(), MetricKind::MaskedLls);
        assert!("nope".parse::<MetricKind>().is_err());
    }
}
