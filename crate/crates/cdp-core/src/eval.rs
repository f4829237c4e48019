//! Evaluation protocol: ROC/AUC over originals vs. four fake types on two
//! printers, randomized runs, validation-driven threshold and mask-threshold
//! selection, and the codebook-stability study.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::channel::{make_fake, print_batch, ChannelParams, PrintedImage};
use crate::codebook::{codebook_distance, train_from_estimates, BorderMode, Codebook};
use crate::error::{Error, Result};
use crate::estimator::{EstimatedTemplate, OtsuMvEstimator, TemplateEstimator};
use crate::metrics::{
    build_mask, hamming_metric, lls_score, masked_hamming, masked_lls, masked_pixel_metric,
    pixel_metric, AttentionMask, MetricKind, PixelMetric,
};
use crate::seeding::{derive_seed, derive_seed_tagged};
use crate::template::{generate_template, Template};

// ---------------------------------------------------------------------------
// ROC / AUC primitives
// ---------------------------------------------------------------------------

/// Scores at or below this total size use exact pair counting; larger sets
/// switch to the rank-sum formula.
const PAIR_COUNT_LIMIT: usize = 10_000;

fn validate_scores(originals: &[f64], fakes: &[f64]) -> Result<()> {
    if originals.is_empty() || fakes.is_empty() {
        return Err(Error::Empty(
            "AUC needs at least one original and one fake score".into(),
        ));
    }
    if originals.iter().chain(fakes).any(|v| v.is_nan()) {
        return Err(Error::Parameter("scores must not be NaN".into()));
    }
    Ok(())
}

/// Probability that a random original outscores a random fake, ties counted
/// half. Scores must share the higher-is-original orientation.
pub fn auc(originals: &[f64], fakes: &[f64]) -> Result<f64> {
    validate_scores(originals, fakes)?;
    let n = originals.len();
    let m = fakes.len();
    if n + m <= PAIR_COUNT_LIMIT {
        let mut wins = 0u64;
        let mut ties = 0u64;
        for &o in originals {
            for &f in fakes {
                if o > f {
                    wins += 1;
                } else if o == f {
                    ties += 1;
                }
            }
        }
        Ok((wins as f64 + 0.5 * ties as f64) / (n as f64 * m as f64))
    } else {
        // Mann-Whitney U via average ranks; exact for ties
        let mut all: Vec<(f64, bool)> = originals
            .iter()
            .map(|&v| (v, true))
            .chain(fakes.iter().map(|&v| (v, false)))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN rejected above"));
        let mut rank_sum = 0.0f64;
        let mut i = 0usize;
        while i < all.len() {
            let mut j = i;
            while j < all.len() && all[j].0 == all[i].0 {
                j += 1;
            }
            let avg_rank = (i + 1 + j) as f64 / 2.0;
            for item in &all[i..j] {
                if item.1 {
                    rank_sum += avg_rank;
                }
            }
            i = j;
        }
        let u = rank_sum - (n as f64 * (n as f64 + 1.0)) / 2.0;
        Ok(u / (n as f64 * m as f64))
    }
}

/// One operating point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve with a point at every distinct threshold, FPR ascending.
/// Classification rule: original if score ≥ threshold.
pub fn roc_curve(originals: &[f64], fakes: &[f64]) -> Result<Vec<RocPoint>> {
    validate_scores(originals, fakes)?;
    let mut thresholds: Vec<f64> = originals.iter().chain(fakes).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).expect("NaN rejected above"));
    thresholds.dedup();

    let mut orig_sorted = originals.to_vec();
    orig_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut fake_sorted = fakes.to_vec();
    fake_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut oi = 0usize;
    let mut fi = 0usize;
    for &thr in &thresholds {
        while oi < orig_sorted.len() && orig_sorted[oi] >= thr {
            oi += 1;
        }
        while fi < fake_sorted.len() && fake_sorted[fi] >= thr {
            fi += 1;
        }
        points.push(RocPoint {
            threshold: thr,
            fpr: fi as f64 / fakes.len() as f64,
            tpr: oi as f64 / originals.len() as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Decision-threshold selection rule on the validation scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Threshold minimizing |FPR - FNR|.
    Eer,
    /// Max-TPR threshold with FPR at most the given bound.
    TprAtFpr(f64),
}

/// Pick a decision threshold from validation scores (higher-is-original
/// axis). Candidates are the midpoints between adjacent distinct scores plus
/// one point below and above everything; ties resolve toward the lower-FPR
/// (more conservative) candidate.
pub fn select_threshold(
    val_originals: &[f64],
    val_fakes: &[f64],
    rule: ThresholdRule,
) -> Result<f64> {
    validate_scores(val_originals, val_fakes)?;
    if let ThresholdRule::TprAtFpr(alpha) = rule {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Parameter(format!(
                "FPR bound must lie in [0,1], got {alpha}"
            )));
        }
    }
    let mut values: Vec<f64> = val_originals.iter().chain(val_fakes).copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let mut candidates = Vec::with_capacity(values.len() + 1);
    candidates.push(values[0] - 1.0);
    for w in values.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(values[values.len() - 1] + 1.0);

    let rates = |thr: f64| {
        let tpr = val_originals.iter().filter(|&&v| v >= thr).count() as f64
            / val_originals.len() as f64;
        let fpr = val_fakes.iter().filter(|&&v| v >= thr).count() as f64 / val_fakes.len() as f64;
        (fpr, tpr)
    };

    let mut best: Option<(f64, f64, f64)> = None; // (objective, fpr, threshold)
    for &thr in &candidates {
        let (fpr, tpr) = rates(thr);
        let objective = match rule {
            ThresholdRule::Eer => (fpr - (1.0 - tpr)).abs(),
            ThresholdRule::TprAtFpr(alpha) => {
                if fpr > alpha {
                    continue;
                }
                -tpr // maximize TPR
            }
        };
        let replace = match &best {
            None => true,
            Some((obj, bf, bt)) => {
                objective < *obj
                    || (objective == *obj && fpr < *bf)
                    || (objective == *obj && fpr == *bf && thr > *bt)
            }
        };
        if replace {
            best = Some((objective, fpr, thr));
        }
    }
    best.map(|(_, _, thr)| thr)
        .ok_or_else(|| Error::Parameter("no feasible threshold candidate".into()))
}

// ---------------------------------------------------------------------------
// Experiment grid
// ---------------------------------------------------------------------------

/// The two simulated presses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Printer {
    A,
    B,
}

impl Printer {
    pub const ALL: [Printer; 2] = [Printer::A, Printer::B];

    pub fn label(&self) -> &'static str {
        match self {
            Printer::A => "A",
            Printer::B => "B",
        }
    }
}

impl fmt::Display for Printer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Fake lineage `reprint/source`: estimated from a `source`-printer original
/// and reprinted on the `reprint` printer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct FakeKind {
    pub reprint: Printer,
    pub source: Printer,
}

impl FakeKind {
    pub const ALL: [FakeKind; 4] = [
        FakeKind {
            reprint: Printer::A,
            source: Printer::A,
        },
        FakeKind {
            reprint: Printer::A,
            source: Printer::B,
        },
        FakeKind {
            reprint: Printer::B,
            source: Printer::A,
        },
        FakeKind {
            reprint: Printer::B,
            source: Printer::B,
        },
    ];

    pub fn label(&self) -> String {
        format!("{}/{}", self.reprint, self.source)
    }
}

impl fmt::Display for FakeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.reprint, self.source)
    }
}

impl Serialize for FakeKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

/// Full configuration of one evaluation experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// Template side length L.
    pub template_size: usize,
    /// Black-symbol probability.
    pub density: f64,
    pub n_templates: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub printer_a: ChannelParams,
    pub printer_b: ChannelParams,
    pub metrics: Vec<MetricKind>,
    pub h: usize,
    pub k: usize,
    pub border_mode: BorderMode,
    /// Attention-mask threshold used when tuning is off.
    pub mu: f64,
    /// Select μ per (printer, masked metric) on the validation split,
    /// falling back to the unmasked metric when masking shows no gain.
    pub tune_mu: bool,
    /// One experiment run per seed.
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: fast-CI template size, the 100-template
    /// 20/20/60 split, three runs.
    fn default() -> Self {
        ExperimentConfig {
            template_size: 64,
            density: 0.5,
            n_templates: 100,
            train: 20,
            val: 20,
            test: 60,
            printer_a: ChannelParams::printer_a(0),
            printer_b: ChannelParams::printer_b(0),
            metrics: MetricKind::ALL.to_vec(),
            h: 3,
            k: 3,
            border_mode: BorderMode::Interior,
            mu: 0.25,
            tune_mu: true,
            seeds: vec![1, 2, 3],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_templates == 0 {
            return Err(Error::Parameter("n_templates must be >= 1".into()));
        }
        if self.train == 0 || self.test == 0 {
            return Err(Error::Parameter(
                "train and test splits must be non-empty".into(),
            ));
        }
        if self.train + self.val + self.test > self.n_templates {
            return Err(Error::Parameter(format!(
                "splits {}+{}+{} exceed n_templates {}",
                self.train, self.val, self.test, self.n_templates
            )));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Parameter(format!(
                "density must lie in [0,1], got {}",
                self.density
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("at least one run seed required".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Parameter("at least one metric required".into()));
        }
        if self.mu.is_nan() || self.mu < 0.0 {
            return Err(Error::Parameter(format!("mu must be >= 0, got {}", self.mu)));
        }
        if self.printer_a.k != self.k || self.printer_b.k != self.k {
            return Err(Error::Parameter(
                "printer presets must match the configured magnification k".into(),
            ));
        }
        self.printer_a.validate()?;
        self.printer_b.validate()?;
        if self.tune_mu && self.val == 0 {
            return Err(Error::Parameter(
                "mu tuning needs a non-empty validation split".into(),
            ));
        }
        Ok(())
    }

    fn printer(&self, p: Printer) -> &ChannelParams {
        match p {
            Printer::A => &self.printer_a,
            Printer::B => &self.printer_b,
        }
    }
}

// seed-stream tags, one per pipeline stage
const TAG_TEMPLATE: u64 = 1;
const TAG_SPLIT: u64 = 2;
const TAG_PRINT: u64 = 3;
const TAG_FAKE: u64 = 4;
const TAG_STABILITY_PRINT: u64 = 5;
const TAG_STABILITY_DRAW: u64 = 6;

/// AUC of one (original printer, fake kind, metric) cell in one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellAuc {
    pub original: Printer,
    pub fake: FakeKind,
    pub metric: MetricKind,
    pub auc: f64,
}

/// All cells of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub cells: Vec<CellAuc>,
}

/// Mean and spread of one cell over the runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub original: Printer,
    pub fake: FakeKind,
    pub metric: MetricKind,
    pub mean_auc: f64,
    pub std_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrinterAverage {
    pub original: Printer,
    pub metric: MetricKind,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTotal {
    pub metric: MetricKind,
    pub mean_auc: f64,
}

/// μ selected for a masked metric in one run on one printer; `None` means
/// masking showed no validation gain and the metric fell back to its base.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuRecord {
    pub seed: u64,
    pub original: Printer,
    pub metric: MetricKind,
    pub mu: Option<f64>,
}

/// Validation-selected decision threshold (higher-is-original axis).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRecord {
    pub original: Printer,
    pub metric: MetricKind,
    pub rule: String,
    /// Compare `score.oriented() >= threshold` to accept as original.
    pub threshold: f64,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocRecord {
    pub original: Printer,
    pub fake: FakeKind,
    pub metric: MetricKind,
    pub points: Vec<RocPoint>,
}

/// Aggregated experiment output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
    pub printer_averages: Vec<PrinterAverage>,
    pub totals: Vec<MetricTotal>,
    pub chosen_mu: Vec<MuRecord>,
    /// Thresholds from the first run's validation split.
    pub thresholds: Vec<ThresholdRecord>,
    /// ROC curves from the first run.
    pub roc: Vec<RocRecord>,
}

impl EvalReport {
    /// One CSV row per run × cell × metric.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run_seed,original,fake,metric,auc\n");
        for run in &self.runs {
            for cell in &run.cells {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    run.seed,
                    cell.original,
                    cell.fake,
                    cell.metric.id(),
                    cell.auc
                ));
            }
        }
        out
    }

    /// Aggregated table: one row per cell plus printer averages and totals.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("original,fake,metric,mean_auc,std_auc\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                cell.original,
                cell.fake,
                cell.metric.id(),
                cell.mean_auc,
                cell.std_auc
            ));
        }
        for avg in &self.printer_averages {
            out.push_str(&format!(
                "{},average,{},{},\n",
                avg.original,
                avg.metric.id(),
                avg.mean_auc
            ));
        }
        for total in &self.totals {
            out.push_str(&format!(",total,{},{},\n", total.metric.id(), total.mean_auc));
        }
        out
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("original,fake,metric,threshold,fpr,tpr\n");
        for rec in &self.roc {
            for p in &rec.points {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    rec.original,
                    rec.fake,
                    rec.metric.id(),
                    p.threshold,
                    p.fpr,
                    p.tpr
                ));
            }
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn total_for(&self, metric: MetricKind) -> Option<f64> {
        self.totals
            .iter()
            .find(|t| t.metric == metric)
            .map(|t| t.mean_auc)
    }
}

/// Per-probe metric scores, raw orientation.
type ScoreRow = BTreeMap<MetricKind, f64>;

struct PrinterRowContext<'a> {
    cfg: &'a ExperimentConfig,
    templates: &'a [Template],
    codebook: &'a Codebook,
    originals: &'a [PrintedImage],
    original_estimates: &'a [EstimatedTemplate],
    fakes: &'a BTreeMap<FakeKind, Vec<PrintedImage>>,
    fake_estimates: &'a BTreeMap<FakeKind, Vec<EstimatedTemplate>>,
}

impl<'a> PrinterRowContext<'a> {
    /// Base (unmasked) metric value of one probe.
    fn base_score(
        &self,
        metric: MetricKind,
        idx: usize,
        probe: &PrintedImage,
        estimate: &EstimatedTemplate,
    ) -> Result<f64> {
        let t = &self.templates[idx];
        Ok(match metric {
            MetricKind::Lls => lls_score(estimate, t, self.codebook, self.cfg.border_mode)?.value,
            MetricKind::Hamm => hamming_metric(estimate, t)?.value,
            MetricKind::Mse => pixel_metric(t, probe, PixelMetric::Mse, self.cfg.k)?.value,
            MetricKind::Pcor => pixel_metric(t, probe, PixelMetric::Pcor, self.cfg.k)?.value,
            masked => {
                return Err(Error::Parameter(format!(
                    "{} is not a base metric",
                    masked.id()
                )))
            }
        })
    }

    /// Masked metric value of one probe under a concrete mask.
    fn masked_score(
        &self,
        metric: MetricKind,
        idx: usize,
        probe: &PrintedImage,
        estimate: &EstimatedTemplate,
        mask: &AttentionMask,
    ) -> Result<f64> {
        let t = &self.templates[idx];
        Ok(match metric {
            MetricKind::MaskedLls => {
                masked_lls(estimate, t, self.codebook, mask, self.cfg.border_mode)?.value
            }
            MetricKind::MaskedHamm => masked_hamming(estimate, t, mask)?.value,
            MetricKind::MaskedMse => {
                masked_pixel_metric(t, probe, mask, PixelMetric::Mse, self.cfg.k)?.value
            }
            MetricKind::MaskedPcor => {
                masked_pixel_metric(t, probe, mask, PixelMetric::Pcor, self.cfg.k)?.value
            }
            base => {
                return Err(Error::Parameter(format!(
                    "{} is not a masked metric",
                    base.id()
                )))
            }
        })
    }

    /// Score every configured metric for the probes of the given template
    /// indices, with masked metrics resolved through `mu_choice`.
    fn score_set<'p>(
        &self,
        indices: &[usize],
        probe_of: impl Fn(usize) -> (&'p PrintedImage, &'p EstimatedTemplate) + Sync,
        mu_choice: &BTreeMap<MetricKind, Option<f64>>,
        masks: &BTreeMap<(usize, u64), AttentionMask>,
    ) -> Result<Vec<ScoreRow>>
    where
        'a: 'p,
    {
        indices
            .par_iter()
            .map(|&idx| {
                let (probe, estimate) = probe_of(idx);
                let mut row = ScoreRow::new();
                for &metric in &self.cfg.metrics {
                    let value = if metric.is_masked() {
                        match mu_choice.get(&metric).copied().flatten() {
                            None => self.base_score(metric.base(), idx, probe, estimate)?,
                            Some(mu) => {
                                let mask = masks
                                    .get(&(idx, mu.to_bits()))
                                    .expect("mask precomputed for every (index, mu)");
                                self.masked_score(metric, idx, probe, estimate, mask)?
                            }
                        }
                    } else {
                        self.base_score(metric, idx, probe, estimate)?
                    };
                    row.insert(metric, value);
                }
                Ok(row)
            })
            .collect()
    }
}

fn oriented(metric: MetricKind, value: f64) -> f64 {
    match metric.orientation() {
        crate::metrics::Orientation::HigherIsOriginal => value,
        crate::metrics::Orientation::LowerIsOriginal => -value,
    }
}

fn collect_oriented(rows: &[ScoreRow], metric: MetricKind) -> Vec<f64> {
    rows.iter()
        .map(|row| oriented(metric, row[&metric]))
        .collect()
}

/// μ candidates scanned by the validation grid search, identity (no mask)
/// first, then from the least to the most aggressive mask.
fn mu_candidates() -> Vec<Option<f64>> {
    let mut c: Vec<Option<f64>> = vec![None];
    for i in (1..=10).rev() {
        c.push(Some(i as f64 * 0.05));
    }
    c
}

/// Build masks for every (template index, μ) pair that scoring will need.
fn build_masks(
    cfg: &ExperimentConfig,
    templates: &[Template],
    codebook: &Codebook,
    indices: &[usize],
    mus: &[f64],
) -> Result<BTreeMap<(usize, u64), AttentionMask>> {
    let jobs: Vec<(usize, f64)> = indices
        .iter()
        .flat_map(|&idx| mus.iter().map(move |&mu| (idx, mu)))
        .collect();
    let built: Vec<((usize, u64), AttentionMask)> = jobs
        .par_iter()
        .map(|&(idx, mu)| {
            build_mask(&templates[idx], codebook, mu, cfg.border_mode)
                .map(|m| ((idx, mu.to_bits()), m))
        })
        .collect::<Result<_>>()?;
    Ok(built.into_iter().collect())
}

/// Run the full grid experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate()?;

    let mut runs = Vec::with_capacity(cfg.seeds.len());
    let mut chosen_mu_records = Vec::new();
    let mut thresholds = Vec::new();
    let mut roc_records = Vec::new();

    for (run_idx, &run_seed) in cfg.seeds.iter().enumerate() {
        let run = run_one(
            cfg,
            run_seed,
            run_idx == 0,
            &mut chosen_mu_records,
            &mut thresholds,
            &mut roc_records,
        )?;
        runs.push(run);
    }

    // aggregate over runs
    let mut cells = Vec::new();
    for original in Printer::ALL {
        for fake in FakeKind::ALL {
            for &metric in &cfg.metrics {
                let values: Vec<f64> = runs
                    .iter()
                    .flat_map(|r| {
                        r.cells.iter().filter_map(move |c| {
                            (c.original == original && c.fake == fake && c.metric == metric)
                                .then_some(c.auc)
                        })
                    })
                    .collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let std = if values.len() > 1 {
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (values.len() - 1) as f64;
                    var.sqrt()
                } else {
                    0.0
                };
                cells.push(CellSummary {
                    original,
                    fake,
                    metric,
                    mean_auc: mean,
                    std_auc: std,
                });
            }
        }
    }

    let mut printer_averages = Vec::new();
    for original in Printer::ALL {
        for &metric in &cfg.metrics {
            let values: Vec<f64> = cells
                .iter()
                .filter(|c| c.original == original && c.metric == metric)
                .map(|c| c.mean_auc)
                .collect();
            printer_averages.push(PrinterAverage {
                original,
                metric,
                mean_auc: values.iter().sum::<f64>() / values.len() as f64,
            });
        }
    }
    let mut totals = Vec::new();
    for &metric in &cfg.metrics {
        let values: Vec<f64> = cells
            .iter()
            .filter(|c| c.metric == metric)
            .map(|c| c.mean_auc)
            .collect();
        totals.push(MetricTotal {
            metric,
            mean_auc: values.iter().sum::<f64>() / values.len() as f64,
        });
    }

    Ok(EvalReport {
        config: cfg.clone(),
        runs,
        cells,
        printer_averages,
        totals,
        chosen_mu: chosen_mu_records,
        thresholds,
        roc: roc_records,
    })
}

fn run_one(
    cfg: &ExperimentConfig,
    run_seed: u64,
    first_run: bool,
    chosen_mu_records: &mut Vec<MuRecord>,
    thresholds: &mut Vec<ThresholdRecord>,
    roc_records: &mut Vec<RocRecord>,
) -> Result<RunRecord> {
    // dataset
    let templates: Vec<Template> = (0..cfg.n_templates)
        .into_par_iter()
        .map(|i| {
            generate_template(
                cfg.template_size,
                cfg.density,
                derive_seed_tagged(run_seed, TAG_TEMPLATE, i as u64),
            )
        })
        .collect::<Result<_>>()?;

    // randomized split
    let mut indices: Vec<usize> = (0..cfg.n_templates).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run_seed, TAG_SPLIT));
    indices.shuffle(&mut rng);
    let train_idx = indices[..cfg.train].to_vec();
    let val_idx = indices[cfg.train..cfg.train + cfg.val].to_vec();
    let test_idx = indices[cfg.train + cfg.val..cfg.train + cfg.val + cfg.test].to_vec();

    // originals and their estimates, per printer
    let estimator = OtsuMvEstimator;
    let mut originals: BTreeMap<Printer, Vec<PrintedImage>> = BTreeMap::new();
    let mut original_estimates: BTreeMap<Printer, Vec<EstimatedTemplate>> = BTreeMap::new();
    for printer in Printer::ALL {
        let params = cfg
            .printer(printer)
            .clone()
            .with_seed(derive_seed_tagged(run_seed, TAG_PRINT, printer as u64));
        let images = print_batch(&templates, &params)?;
        let estimates: Vec<EstimatedTemplate> = images
            .par_iter()
            .map(|img| estimator.estimate(img, cfg.k))
            .collect::<Result<_>>()?;
        originals.insert(printer, images);
        original_estimates.insert(printer, estimates);
    }

    // the four fake types and their estimates
    let mut fakes: BTreeMap<FakeKind, Vec<PrintedImage>> = BTreeMap::new();
    let mut fake_estimates: BTreeMap<FakeKind, Vec<EstimatedTemplate>> = BTreeMap::new();
    for (combo, fake_kind) in FakeKind::ALL.into_iter().enumerate() {
        let reprint = cfg.printer(fake_kind.reprint).clone();
        let source_images = &originals[&fake_kind.source];
        let images: Vec<PrintedImage> = source_images
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let per_image = reprint.clone().with_seed(derive_seed_tagged(
                    run_seed,
                    TAG_FAKE + combo as u64,
                    i as u64,
                ));
                make_fake(x, &per_image)
            })
            .collect::<Result<_>>()?;
        let estimates: Vec<EstimatedTemplate> = images
            .par_iter()
            .map(|img| estimator.estimate(img, cfg.k))
            .collect::<Result<_>>()?;
        fakes.insert(fake_kind, images);
        fake_estimates.insert(fake_kind, estimates);
    }

    // per-printer codebooks from the train split
    let mut codebooks: BTreeMap<Printer, Codebook> = BTreeMap::new();
    for printer in Printer::ALL {
        let ests = &original_estimates[&printer];
        let pairs: Vec<(&Template, &EstimatedTemplate)> = train_idx
            .iter()
            .map(|&i| (&templates[i], &ests[i]))
            .collect();
        let cb = train_from_estimates(
            &pairs,
            cfg.h,
            cfg.k,
            cfg.border_mode,
            cfg.printer(printer).content_hash(),
        )?;
        codebooks.insert(printer, cb);
    }

    // score and aggregate per printer row
    let mut cells = Vec::new();
    for printer in Printer::ALL {
        let ctx = PrinterRowContext {
            cfg,
            templates: &templates,
            codebook: &codebooks[&printer],
            originals: &originals[&printer],
            original_estimates: &original_estimates[&printer],
            fakes: &fakes,
            fake_estimates: &fake_estimates,
        };

        // masked-metric μ selection on the validation split
        let masked_metrics: Vec<MetricKind> =
            cfg.metrics.iter().copied().filter(MetricKind::is_masked).collect();
        let mu_choice: BTreeMap<MetricKind, Option<f64>> = if cfg.tune_mu {
            tune_mu_on_validation(&ctx, &val_idx, &masked_metrics)?
        } else {
            masked_metrics
                .iter()
                .map(|&m| (m, Some(cfg.mu)))
                .collect()
        };
        for &metric in &masked_metrics {
            chosen_mu_records.push(MuRecord {
                seed: run_seed,
                original: printer,
                metric,
                mu: mu_choice.get(&metric).copied().flatten(),
            });
        }

        // masks needed on the scoring splits
        let needed_mus: Vec<f64> = {
            let mut v: Vec<f64> = mu_choice.values().filter_map(|m| *m).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            v
        };
        let mut score_indices = test_idx.clone();
        if first_run {
            score_indices.extend(&val_idx); // thresholds need val scores
        }
        let masks = build_masks(cfg, &templates, &codebooks[&printer], &score_indices, &needed_mus)?;

        let orig_rows = ctx.score_set(
            &test_idx,
            |i| (&ctx.originals[i], &ctx.original_estimates[i]),
            &mu_choice,
            &masks,
        )?;
        for fake_kind in FakeKind::ALL {
            let fake_rows = ctx.score_set(
                &test_idx,
                |i| (&ctx.fakes[&fake_kind][i], &ctx.fake_estimates[&fake_kind][i]),
                &mu_choice,
                &masks,
            )?;
            for &metric in &cfg.metrics {
                let orig_scores = collect_oriented(&orig_rows, metric);
                let fake_scores = collect_oriented(&fake_rows, metric);
                cells.push(CellAuc {
                    original: printer,
                    fake: fake_kind,
                    metric,
                    auc: auc(&orig_scores, &fake_scores)?,
                });
                if first_run {
                    roc_records.push(RocRecord {
                        original: printer,
                        fake: fake_kind,
                        metric,
                        points: roc_curve(&orig_scores, &fake_scores)?,
                    });
                }
            }
        }

        // validation thresholds (first run only): originals vs pooled fakes
        if first_run && !val_idx.is_empty() {
            let val_orig_rows = ctx.score_set(
                &val_idx,
                |i| (&ctx.originals[i], &ctx.original_estimates[i]),
                &mu_choice,
                &masks,
            )?;
            let mut val_fake_rows = Vec::new();
            for fake_kind in FakeKind::ALL {
                val_fake_rows.extend(ctx.score_set(
                    &val_idx,
                    |i| (&ctx.fakes[&fake_kind][i], &ctx.fake_estimates[&fake_kind][i]),
                    &mu_choice,
                    &masks,
                )?);
            }
            for &metric in &cfg.metrics {
                let orig_scores = collect_oriented(&val_orig_rows, metric);
                let fake_scores = collect_oriented(&val_fake_rows, metric);
                thresholds.push(ThresholdRecord {
                    original: printer,
                    metric,
                    rule: "eer".into(),
                    threshold: select_threshold(&orig_scores, &fake_scores, ThresholdRule::Eer)?,
                    mu: if metric.is_masked() {
                        mu_choice.get(&metric).copied().flatten()
                    } else {
                        None
                    },
                });
            }
        }
    }

    Ok(RunRecord {
        seed: run_seed,
        cells,
    })
}

/// Grid-search μ per masked metric on the validation split: originals vs
/// the pooled four fake types, identity (no mask) included as a candidate.
fn tune_mu_on_validation(
    ctx: &PrinterRowContext<'_>,
    val_idx: &[usize],
    masked_metrics: &[MetricKind],
) -> Result<BTreeMap<MetricKind, Option<f64>>> {
    if masked_metrics.is_empty() {
        return Ok(BTreeMap::new());
    }
    let candidates = mu_candidates();
    let candidate_mus: Vec<f64> = candidates.iter().filter_map(|c| *c).collect();
    let masks = build_masks(ctx.cfg, ctx.templates, ctx.codebook, val_idx, &candidate_mus)?;

    // per-candidate scores for originals and pooled fakes
    let mut choice = BTreeMap::new();
    for &metric in masked_metrics {
        let mut best: Option<(f64, Option<f64>)> = None;
        for &candidate in &candidates {
            let score_probe = |probe: &PrintedImage,
                               estimate: &EstimatedTemplate,
                               idx: usize|
             -> Result<f64> {
                match candidate {
                    None => ctx.base_score(metric.base(), idx, probe, estimate),
                    Some(mu) => {
                        let mask = masks
                            .get(&(idx, mu.to_bits()))
                            .expect("validation masks precomputed");
                        ctx.masked_score(metric, idx, probe, estimate, mask)
                    }
                }
            };
            let mut orig = Vec::with_capacity(val_idx.len());
            for &i in val_idx {
                let v = score_probe(&ctx.originals[i], &ctx.original_estimates[i], i)?;
                orig.push(oriented(metric, v));
            }
            let mut fake = Vec::with_capacity(val_idx.len() * FakeKind::ALL.len());
            for fake_kind in FakeKind::ALL {
                for &i in val_idx {
                    let v = score_probe(
                        &ctx.fakes[&fake_kind][i],
                        &ctx.fake_estimates[&fake_kind][i],
                        i,
                    )?;
                    fake.push(oriented(metric, v));
                }
            }
            let val_auc = auc(&orig, &fake)?;
            // strict improvement only: ties keep the earlier (less
            // aggressive) candidate, with the identity first
            if best.is_none_or(|(b, _)| val_auc > b) {
                best = Some((val_auc, candidate));
            }
        }
        choice.insert(metric, best.expect("at least one candidate").1);
    }
    Ok(choice)
}

// ---------------------------------------------------------------------------
// Stability study
// ---------------------------------------------------------------------------

/// One point of the codebook stability curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub size: usize,
    pub mean_d1: f64,
    pub std_d1: f64,
    pub draws: usize,
}

/// Render the stability curve as CSV.
pub fn stability_csv(points: &[StabilityPoint]) -> String {
    let mut out = String::from("size,mean_d1,std_d1,draws\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.size, p.mean_d1, p.std_d1, p.draws
        ));
    }
    out
}

/// Measure codebook variability against training-set size: for each size,
/// draw `repeats` random subsets of the printer-A corpus, train a codebook
/// on each and average the prediction distance to the reference codebook
/// trained on all `n_reference` pairs.
pub fn stability_study(
    sizes: &[usize],
    n_reference: usize,
    repeats: usize,
    cfg: &ExperimentConfig,
) -> Result<Vec<StabilityPoint>> {
    if sizes.is_empty() {
        return Err(Error::Empty("at least one subset size required".into()));
    }
    if repeats == 0 {
        return Err(Error::Parameter("repeats must be >= 1".into()));
    }
    if n_reference == 0 {
        return Err(Error::Parameter("n_reference must be >= 1".into()));
    }
    if let Some(&too_big) = sizes.iter().find(|&&s| s == 0 || s > n_reference) {
        return Err(Error::Parameter(format!(
            "subset size {too_big} outside 1..={n_reference}"
        )));
    }
    let base_seed = *cfg
        .seeds
        .first()
        .ok_or_else(|| Error::Parameter("at least one seed required".into()))?;

    // corpus: templates, printer-A prints, estimates
    let estimator = OtsuMvEstimator;
    let params = cfg.printer_a.clone();
    let channel_hash = params.content_hash();
    let pairs: Vec<(Template, EstimatedTemplate)> = (0..n_reference)
        .into_par_iter()
        .map(|i| {
            let t = generate_template(
                cfg.template_size,
                cfg.density,
                derive_seed_tagged(base_seed, TAG_TEMPLATE, i as u64),
            )?;
            let per_image = params
                .clone()
                .with_seed(derive_seed_tagged(base_seed, TAG_STABILITY_PRINT, i as u64));
            let x = crate::channel::print_code(&t, &per_image)?;
            let e = estimator.estimate(&x, cfg.k)?;
            Ok((t, e))
        })
        .collect::<Result<_>>()?;

    let all_refs: Vec<(&Template, &EstimatedTemplate)> =
        pairs.iter().map(|(t, e)| (t, e)).collect();
    let reference =
        train_from_estimates(&all_refs, cfg.h, cfg.k, cfg.border_mode, channel_hash)?;

    let mut points = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let distances: Vec<f64> = (0..repeats)
            .into_par_iter()
            .map(|rep| {
                let draw_seed = derive_seed_tagged(
                    base_seed,
                    TAG_STABILITY_DRAW,
                    (size as u64) << 20 | rep as u64,
                );
                let mut idx: Vec<usize> = (0..n_reference).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
                idx.shuffle(&mut rng);
                idx.truncate(size);
                let subset: Vec<(&Template, &EstimatedTemplate)> =
                    idx.iter().map(|&i| (&pairs[i].0, &pairs[i].1)).collect();
                let cb =
                    train_from_estimates(&subset, cfg.h, cfg.k, cfg.border_mode, channel_hash)?;
                codebook_distance(&cb, &reference)
            })
            .collect::<Result<_>>()?;
        let mean = distances.iter().sum::<f64>() / distances.len() as f64;
        let std = if distances.len() > 1 {
            (distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
                / (distances.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        points.push(StabilityPoint {
            size,
            mean_d1: mean,
            std_d1: std,
            draws: repeats,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.7], &[0.5, 0.7]).unwrap(), 0.5);
        // 3 of 4 pairs correctly ordered, verified by hand
        assert_eq!(auc(&[0.8, 0.4], &[0.6, 0.2]).unwrap(), 0.75);
        assert!(auc(&[], &[0.1]).is_err());
        assert!(auc(&[0.1], &[f64::NAN]).is_err());
    }

    #[test]
    fn auc_rank_path_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // force the rank-based path with > 10_000 scores
        let originals: Vec<f64> = (0..6000).map(|_| (rng.random::<f64>() * 8.0).round()).collect();
        let fakes: Vec<f64> = (0..6000).map(|_| (rng.random::<f64>() * 8.0).round() - 0.5).collect();
        let fast = auc(&originals, &fakes).unwrap();
        let mut wins = 0u64;
        let mut ties = 0u64;
        for &o in &originals {
            for &f in &fakes {
                if o > f {
                    wins += 1;
                } else if o == f {
                    ties += 1;
                }
            }
        }
        let brute = (wins as f64 + 0.5 * ties as f64) / (6000.0 * 6000.0);
        assert!((fast - brute).abs() < 1e-12);
    }

    #[test]
    fn roc_endpoints_and_area() {
        let points = roc_curve(&[0.9, 0.8], &[0.2, 0.1]).unwrap();
        assert_eq!(points.first().unwrap().fpr, 0.0);
        assert_eq!(points.first().unwrap().tpr, 0.0);
        assert_eq!(points.last().unwrap().fpr, 1.0);
        assert_eq!(points.last().unwrap().tpr, 1.0);
        // perfect separation passes through (0, 1)
        assert!(points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(roc_area(&points), 1.0);

        let diag = roc_curve(&[0.3, 0.6], &[0.3, 0.6]).unwrap();
        for p in &diag {
            assert_eq!(p.fpr, p.tpr);
        }
        assert!((roc_area(&diag) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn threshold_selection_gap_midpoint() {
        let thr = select_threshold(&[0.8, 0.9], &[0.1, 0.2], ThresholdRule::Eer).unwrap();
        assert!((thr - 0.5).abs() < 1e-12);
        // identical distributions: the EER sits near 0.5 FPR
        let vals: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let thr = select_threshold(&vals, &vals, ThresholdRule::Eer).unwrap();
        let fpr = vals.iter().filter(|&&v| v >= thr).count() as f64 / vals.len() as f64;
        assert!((fpr - 0.5).abs() <= 0.05);
    }

    #[test]
    fn threshold_selection_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let originals: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            let fakes: Vec<f64> = (0..50).map(|_| rng.random::<f64>() - 0.2).collect();
            let thr = select_threshold(&originals, &fakes, ThresholdRule::Eer).unwrap();
            let objective = |t: f64| {
                let tpr =
                    originals.iter().filter(|&&v| v >= t).count() as f64 / originals.len() as f64;
                let fpr = fakes.iter().filter(|&&v| v >= t).count() as f64 / fakes.len() as f64;
                (fpr - (1.0 - tpr)).abs()
            };
            // exhaustive scan over a fine grid plus all observed midpoints
            let mut all: Vec<f64> = originals.iter().chain(&fakes).copied().collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut best = f64::INFINITY;
            for w in all.windows(2) {
                best = best.min(objective((w[0] + w[1]) / 2.0));
            }
            best = best.min(objective(all[0] - 1.0));
            best = best.min(objective(all[all.len() - 1] + 1.0));
            assert!(
                (objective(thr) - best).abs() < 1e-12,
                "selected {} with objective {}, scan best {}",
                thr,
                objective(thr),
                best
            );
        }
    }

    #[test]
    fn threshold_tpr_at_fpr_rule() {
        let originals = [0.9, 0.8, 0.7, 0.3];
        let fakes = [0.6, 0.4, 0.2, 0.1];
        let thr = select_threshold(&originals, &fakes, ThresholdRule::TprAtFpr(0.0)).unwrap();
        let fpr = fakes.iter().filter(|&&v| v >= thr).count() as f64 / 4.0;
        let tpr = originals.iter().filter(|&&v| v >= thr).count() as f64 / 4.0;
        assert_eq!(fpr, 0.0);
        assert_eq!(tpr, 0.75); // 0.9, 0.8, 0.7 pass; 0.3 sits below 0.6
        assert!(select_threshold(&originals, &fakes, ThresholdRule::TprAtFpr(1.5)).is_err());
    }

    proptest! {
        /// auc(A,B) + auc(B,A) = 1 including ties.
        #[test]
        fn auc_swap_complement(
            a in proptest::collection::vec(0u8..6, 1..30),
            b in proptest::collection::vec(0u8..6, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let forward = auc(&a, &b).unwrap();
            let backward = auc(&b, &a).unwrap();
            prop_assert!((forward + backward - 1.0).abs() < 1e-12);
        }

        /// AUC is invariant under strictly increasing affine transforms.
        #[test]
        fn auc_monotone_invariance(
            a in proptest::collection::vec(-100i32..100, 1..30),
            b in proptest::collection::vec(-100i32..100, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let direct = auc(&a, &b).unwrap();
            let ta: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
            let tb: Vec<f64> = b.iter().map(|v| 2.0 * v + 3.0).collect();
            prop_assert_eq!(direct, auc(&ta, &tb).unwrap());
        }

        /// Trapezoidal ROC area equals pair counting.
        #[test]
        fn roc_area_equals_auc(
            a in proptest::collection::vec(0u8..10, 1..40),
            b in proptest::collection::vec(0u8..10, 1..40),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let area = roc_area(&roc_curve(&a, &b).unwrap());
            prop_assert!((area - auc(&a, &b).unwrap()).abs() < 1e-12);
        }
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            template_size: 16,
            n_templates: 8,
            train: 3,
            val: 2,
            test: 3,
            seeds: vec![11],
            tune_mu: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_config();
        assert!(cfg.validate().is_ok());
        cfg.train = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.printer_a.k = 5;
        assert!(cfg.validate().is_err());
    }

    /// A noiseless, nearly blur-free channel is clonable: fakes reproduce
    /// originals bit-exactly and every AUC collapses to 0.5.
    #[test]
    fn clonable_channel_has_no_detection_power() {
        let ideal = ChannelParams {
            k: 3,
            blur_sigma: 0.05,
            dot_gain_gamma: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        };
        let cfg = ExperimentConfig {
            printer_a: ideal.clone(),
            printer_b: ChannelParams {
                blur_sigma: 0.06,
                ..ideal
            },
            ..tiny_config()
        };
        let report = run_experiment(&cfg).unwrap();
        for cell in &report.cells {
            assert_eq!(
                cell.mean_auc, 0.5,
                "cell {}/{}/{} should be chance",
                cell.original,
                cell.fake,
                cell.metric.id()
            );
        }
    }

    #[test]
    fn report_totals_match_recomputation() {
        let report = run_experiment(&tiny_config()).unwrap();
        for total in &report.totals {
            let cells: Vec<f64> = report
                .cells
                .iter()
                .filter(|c| c.metric == total.metric)
                .map(|c| c.mean_auc)
                .collect();
            assert_eq!(cells.len(), 8);
            let mean = cells.iter().sum::<f64>() / 8.0;
            assert!((total.mean_auc - mean).abs() < 1e-15);
        }
        // printer averages cover 4 cells each
        for avg in &report.printer_averages {
            let cells: Vec<f64> = report
                .cells
                .iter()
                .filter(|c| c.original == avg.original && c.metric == avg.metric)
                .map(|c| c.mean_auc)
                .collect();
            assert_eq!(cells.len(), 4);
            let mean = cells.iter().sum::<f64>() / 4.0;
            assert!((avg.mean_auc - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.summary_json().unwrap(), b.summary_json().unwrap());
        assert_eq!(a.runs_csv(), b.runs_csv());
        assert_eq!(a.roc_csv(), b.roc_csv());
    }

    #[test]
    fn stability_full_subset_distance_is_zero() {
        let cfg = ExperimentConfig {
            seeds: vec![5],
            ..tiny_config()
        };
        let points = stability_study(&[2, 6], 6, 3, &cfg).unwrap();
        assert_eq!(points.len(), 2);
        let full = points.iter().find(|p| p.size == 6).unwrap();
        assert_eq!(full.mean_d1, 0.0);
        assert_eq!(full.std_d1, 0.0);
        let partial = points.iter().find(|p| p.size == 2).unwrap();
        assert!(partial.mean_d1 > 0.0);
    }

    #[test]
    fn stability_rejects_bad_sizes() {
        let cfg = tiny_config();
        assert!(stability_study(&[], 6, 3, &cfg).is_err());
        assert!(stability_study(&[10], 6, 3, &cfg).is_err());
        assert!(stability_study(&[0], 6, 3, &cfg).is_err());
        assert!(stability_study(&[2], 6, 0, &cfg).is_err());
    }
}
