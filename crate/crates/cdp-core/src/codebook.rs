//! Neighborhood-probability codebook: training, query, merge and distance.
//!
//! For every h×h template neighborhood pattern ω the codebook stores how the
//! print-acquire-estimate channel behaved at symbols with that context: the
//! positive probability P(ω) = P(estimated symbol is black | ω) and the
//! bit-flip probability P_b(ω) = P(estimate differs from template | ω).
//! Statistics are kept as integer (count, sum) pairs so that merging partial
//! codebooks is exact and order-independent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::PrintedImage;
use crate::error::{Error, Result};
use crate::estimator::{EstimatedTemplate, TemplateEstimator};
use crate::grid::BitGrid;
use crate::seeding::Fnv1a;
use crate::template::{interior_index, Template};

/// Default clamp applied to probabilities at query time. Keeps the
/// log-likelihood finite when an empirical probability saturates at 0 or 1
/// and a probe disagrees with it.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Codebook file schema version.
pub const CODEBOOK_VERSION: u32 = 1;

/// How symbols near the template border are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderMode {
    /// Only symbols whose full h×h window lies inside the template.
    Interior,
    /// Every symbol; the window reads white (0) outside the template,
    /// matching a print surrounded by white paper.
    WhitePad,
}

impl fmt::Display for BorderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BorderMode::Interior => write!(f, "interior"),
            BorderMode::WhitePad => write!(f, "white_pad"),
        }
    }
}

impl FromStr for BorderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(BorderMode::Interior),
            "white_pad" | "white-pad" => Ok(BorderMode::WhitePad),
            other => Err(Error::Parameter(format!(
                "unknown border mode '{other}' (expected 'interior' or 'white_pad')"
            ))),
        }
    }
}

/// Bijective integer code of an h×h bit window: row-major scan with the
/// top-left bit most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborhoodCode {
    code: u64,
    h: usize,
}

impl NeighborhoodCode {
    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn h(&self) -> usize {
        self.h
    }

    /// The window's center bit, i.e. the template symbol itself.
    pub fn center_bit(&self) -> u8 {
        ((self.code >> ((self.h * self.h - 1) / 2)) & 1) as u8
    }

    /// Reconstruct the h×h window from the code.
    pub fn window(&self) -> BitGrid {
        let mut bits = BitGrid::new(self.h);
        for r in 0..self.h {
            for c in 0..self.h {
                let shift = self.h * self.h - 1 - (r * self.h + c);
                bits.set(r, c, ((self.code >> shift) & 1) as u8);
            }
        }
        bits
    }
}

fn validate_h(h: usize) -> Result<()> {
    if h.is_multiple_of(2) || h == 0 {
        return Err(Error::Parameter(format!(
            "neighborhood size must be odd, got {h}"
        )));
    }
    if h * h > 63 {
        return Err(Error::Parameter(format!(
            "neighborhood size {h} exceeds the 63-bit code space"
        )));
    }
    Ok(())
}

/// Encode the h×h neighborhood of symbol (i, j).
pub fn encode_neighborhood(
    bits: &BitGrid,
    i: usize,
    j: usize,
    h: usize,
    border_mode: BorderMode,
) -> Result<NeighborhoodCode> {
    validate_h(h)?;
    let size = bits.size();
    if i >= size || j >= size {
        return Err(Error::Parameter(format!(
            "symbol ({i},{j}) outside a {size}x{size} template"
        )));
    }
    let margin = (h / 2) as isize;
    if border_mode == BorderMode::Interior {
        let m = h / 2;
        if i < m || j < m || i + m >= size || j + m >= size {
            return Err(Error::Parameter(format!(
                "symbol ({i},{j}) has no full {h}x{h} window inside a {size}x{size} template"
            )));
        }
    }
    let mut code = 0u64;
    for dr in -margin..=margin {
        for dc in -margin..=margin {
            let r = i as isize + dr;
            let c = j as isize + dc;
            let bit = if r < 0 || c < 0 || r >= size as isize || c >= size as isize {
                0
            } else {
                bits.get(r as usize, c as usize)
            };
            code = (code << 1) | u64::from(bit);
        }
    }
    Ok(NeighborhoodCode { code, h })
}

/// Accumulated per-neighborhood statistics: `black_sum` counts estimated
/// black symbols, `flip_sum` counts estimate/template disagreements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CodeStats {
    pub count: u64,
    pub black_sum: u64,
    pub flip_sum: u64,
}

impl CodeStats {
    /// Positive posterior probability P(ω).
    pub fn p(&self) -> f64 {
        if self.count == 0 {
            0.5
        } else {
            self.black_sum as f64 / self.count as f64
        }
    }

    /// Bit-flip probability P_b(ω).
    pub fn p_b(&self) -> f64 {
        if self.count == 0 {
            0.5
        } else {
            self.flip_sum as f64 / self.count as f64
        }
    }

    fn add(&mut self, other: &CodeStats) {
        self.count += other.count;
        self.black_sum += other.black_sum;
        self.flip_sum += other.flip_sum;
    }
}

/// Clamped probabilities returned by a codebook lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    pub p: f64,
    pub p_b: f64,
    /// Set when ω was never observed and the global statistics were used.
    pub fallback: bool,
}

/// Learned channel statistics for one (printer, estimator, border, h, k)
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    h: usize,
    k: usize,
    estimator_id: String,
    border_mode: BorderMode,
    epsilon: f64,
    /// Physics hash of the channel the training originals came from.
    channel_hash: u64,
    global: CodeStats,
    entries: BTreeMap<u64, CodeStats>,
}

impl Codebook {
    /// Empty codebook with the given configuration (merge identity).
    pub fn empty(
        h: usize,
        k: usize,
        estimator_id: impl Into<String>,
        border_mode: BorderMode,
        channel_hash: u64,
    ) -> Result<Self> {
        validate_h(h)?;
        if k == 0 {
            return Err(Error::Parameter("magnification k must be >= 1".into()));
        }
        Ok(Codebook {
            h,
            k,
            estimator_id: estimator_id.into(),
            border_mode,
            epsilon: DEFAULT_EPSILON,
            channel_hash,
            global: CodeStats::default(),
            entries: BTreeMap::new(),
        })
    }

    /// Build a codebook directly from per-code statistics. The flip sums are
    /// derived from the center-bit identity (P_b = P when the center is
    /// white, 1-P when black), which every consistently trained codebook
    /// satisfies by construction.
    pub fn from_entries(
        h: usize,
        k: usize,
        estimator_id: impl Into<String>,
        border_mode: BorderMode,
        entries: impl IntoIterator<Item = (u64, u64, u64)>,
    ) -> Result<Self> {
        let mut cb = Codebook::empty(h, k, estimator_id, border_mode, 0)?;
        for (code, count, black_sum) in entries {
            if black_sum > count {
                return Err(Error::Parameter(format!(
                    "code {code}: black_sum {black_sum} exceeds count {count}"
                )));
            }
            let nc = NeighborhoodCode { code, h };
            let flip_sum = if nc.center_bit() == 1 {
                count - black_sum
            } else {
                black_sum
            };
            let stats = CodeStats {
                count,
                black_sum,
                flip_sum,
            };
            cb.global.add(&stats);
            cb.entries
                .entry(code)
                .and_modify(|e| e.add(&stats))
                .or_insert(stats);
        }
        Ok(cb)
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn estimator_id(&self) -> &str {
        &self.estimator_id
    }

    pub fn border_mode(&self) -> BorderMode {
        self.border_mode
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn channel_hash(&self) -> u64 {
        self.channel_hash
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn global(&self) -> &CodeStats {
        &self.global
    }

    pub fn entries(&self) -> impl Iterator<Item = (NeighborhoodCode, &CodeStats)> {
        self.entries.iter().map(|(&code, stats)| {
            (
                NeighborhoodCode {
                    code,
                    h: self.h,
                },
                stats,
            )
        })
    }

    /// Raw (unclamped) statistics for a code, if observed.
    pub fn raw(&self, omega: NeighborhoodCode) -> Result<Option<&CodeStats>> {
        if omega.h != self.h {
            return Err(Error::Incompatible(format!(
                "query with h={} against a codebook trained at h={}",
                omega.h, self.h
            )));
        }
        Ok(self.entries.get(&omega.code))
    }

    /// Raw bit-flip probability with global fallback, unclamped. Used by the
    /// attention mask and the codebook distance.
    pub fn raw_p_b(&self, omega: NeighborhoodCode) -> Result<f64> {
        Ok(self.raw(omega)?.map_or(self.global.p_b(), CodeStats::p_b))
    }

    /// Raw positive probability with global fallback, unclamped.
    pub fn raw_p(&self, omega: NeighborhoodCode) -> Result<f64> {
        Ok(self.raw(omega)?.map_or(self.global.p(), CodeStats::p))
    }

    /// Clamped lookup of (P, P_b); unseen codes fall back to the global
    /// statistics and set the fallback flag.
    pub fn query(&self, omega: NeighborhoodCode) -> Result<QueryResult> {
        let clamp = |v: f64| v.clamp(self.epsilon, 1.0 - self.epsilon);
        Ok(match self.raw(omega)? {
            Some(stats) => QueryResult {
                p: clamp(stats.p()),
                p_b: clamp(stats.p_b()),
                fallback: false,
            },
            None => QueryResult {
                p: clamp(self.global.p()),
                p_b: clamp(self.global.p_b()),
                fallback: true,
            },
        })
    }

    fn check_mergeable(&self, other: &Codebook) -> Result<()> {
        if self.h != other.h
            || self.k != other.k
            || self.estimator_id != other.estimator_id
            || self.border_mode != other.border_mode
            || self.channel_hash != other.channel_hash
            || self.epsilon != other.epsilon
        {
            return Err(Error::Incompatible(format!(
                "codebooks (h={}, k={}, estimator={}, border={}, channel={:#x}) and \
                 (h={}, k={}, estimator={}, border={}, channel={:#x}) cannot be merged",
                self.h,
                self.k,
                self.estimator_id,
                self.border_mode,
                self.channel_hash,
                other.h,
                other.k,
                other.estimator_id,
                other.border_mode,
                other.channel_hash,
            )));
        }
        Ok(())
    }

    /// Merge two codebooks trained under the same configuration. Counts and
    /// sums add, so merging partial codebooks is exactly equivalent to
    /// training on the concatenated data.
    pub fn merge(&self, other: &Codebook) -> Result<Codebook> {
        self.check_mergeable(other)?;
        let mut merged = self.clone();
        merged.global.add(&other.global);
        for (&code, stats) in &other.entries {
            merged
                .entries
                .entry(code)
                .and_modify(|e| e.add(stats))
                .or_insert(*stats);
        }
        Ok(merged)
    }

    /// Stable content hash covering configuration and every entry. Travels
    /// with attention masks so mask/codebook mismatches are detectable.
    pub fn content_hash(&self) -> u64 {
        let mut hasher = Fnv1a::new();
        hasher.update_u64(self.h as u64);
        hasher.update_u64(self.k as u64);
        hasher.update(self.estimator_id.as_bytes());
        hasher.update(self.border_mode.to_string().as_bytes());
        hasher.update_u64(self.channel_hash);
        hasher.update_f64(self.epsilon);
        for (&code, stats) in &self.entries {
            hasher.update_u64(code);
            hasher.update_u64(stats.count);
            hasher.update_u64(stats.black_sum);
            hasher.update_u64(stats.flip_sum);
        }
        hasher.finish()
    }

    /// Serialize to the canonical JSON document (entries sorted by code,
    /// integer statistics for bit-exact round trips).
    pub fn to_json(&self) -> Result<String> {
        let file = CodebookFile {
            version: CODEBOOK_VERSION,
            h: self.h,
            k: self.k,
            estimator_id: self.estimator_id.clone(),
            border_mode: self.border_mode,
            epsilon: self.epsilon,
            channel_hash: self.channel_hash,
            global: GlobalFile {
                count: self.global.count,
                p: self.global.p(),
                p_b: self.global.p_b(),
            },
            entries: self
                .entries
                .iter()
                .map(|(&code, s)| EntryFile {
                    omega: code,
                    count: s.count,
                    p_sum: s.black_sum,
                    pb_sum: s.flip_sum,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Codebook> {
        let file: CodebookFile =
            serde_json::from_str(json).map_err(|e| Error::Format(e.to_string()))?;
        if file.version != CODEBOOK_VERSION {
            return Err(Error::Format(format!(
                "unsupported codebook version {}",
                file.version
            )));
        }
        validate_h(file.h)?;
        let mut cb = Codebook {
            h: file.h,
            k: file.k,
            estimator_id: file.estimator_id,
            border_mode: file.border_mode,
            epsilon: file.epsilon,
            channel_hash: file.channel_hash,
            global: CodeStats::default(),
            entries: BTreeMap::new(),
        };
        for entry in file.entries {
            if entry.omega >> (file.h * file.h) != 0 {
                return Err(Error::Format(format!(
                    "code {} outside the {}x{} window space",
                    entry.omega, file.h, file.h
                )));
            }
            if entry.p_sum > entry.count || entry.pb_sum > entry.count {
                return Err(Error::Format(format!(
                    "code {}: sums exceed count",
                    entry.omega
                )));
            }
            let nc = NeighborhoodCode {
                code: entry.omega,
                h: file.h,
            };
            let expected_flips = if nc.center_bit() == 1 {
                entry.count - entry.p_sum
            } else {
                entry.p_sum
            };
            if entry.pb_sum != expected_flips {
                return Err(Error::Format(format!(
                    "code {}: flip sum {} violates the center-bit identity (expected {})",
                    entry.omega, entry.pb_sum, expected_flips
                )));
            }
            let stats = CodeStats {
                count: entry.count,
                black_sum: entry.p_sum,
                flip_sum: entry.pb_sum,
            };
            cb.global.add(&stats);
            if cb.entries.insert(entry.omega, stats).is_some() {
                return Err(Error::Format(format!("duplicate code {}", entry.omega)));
            }
        }
        // the serialized global block is informational; verify it against
        // the entry totals instead of trusting the floats
        if file.global.count != cb.global.count {
            return Err(Error::Format(format!(
                "global count {} does not match entry totals {}",
                file.global.count, cb.global.count
            )));
        }
        Ok(cb)
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    version: u32,
    h: usize,
    k: usize,
    estimator_id: String,
    border_mode: BorderMode,
    epsilon: f64,
    channel_hash: u64,
    global: GlobalFile,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
struct GlobalFile {
    count: u64,
    p: f64,
    p_b: f64,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    omega: u64,
    count: u64,
    p_sum: u64,
    pb_sum: u64,
}

/// Symbols admitted by a border mode, in row-major order.
pub(crate) fn admitted_symbols(size: usize, h: usize, mode: BorderMode) -> Result<Vec<(usize, usize)>> {
    match mode {
        BorderMode::Interior => Ok(interior_index(size, h)?.coords().to_vec()),
        BorderMode::WhitePad => {
            validate_h(h)?;
            let mut coords = Vec::with_capacity(size * size);
            for r in 0..size {
                for c in 0..size {
                    coords.push((r, c));
                }
            }
            Ok(coords)
        }
    }
}

/// Accumulate one (template, estimate) pair into a partial codebook.
fn accumulate_pair(
    cb: &mut Codebook,
    template: &Template,
    estimate: &EstimatedTemplate,
) -> Result<()> {
    if template.size() != estimate.size() {
        return Err(Error::Dimension(format!(
            "template side {} but estimate side {}",
            template.size(),
            estimate.size()
        )));
    }
    for &(i, j) in &admitted_symbols(template.size(), cb.h, cb.border_mode)? {
        let omega = encode_neighborhood(template.bits(), i, j, cb.h, cb.border_mode)?;
        let est_bit = estimate.bits().get(i, j);
        let stats = CodeStats {
            count: 1,
            black_sum: u64::from(est_bit),
            flip_sum: u64::from(est_bit != template.get(i, j)),
        };
        cb.global.add(&stats);
        cb.entries
            .entry(omega.code)
            .and_modify(|e| e.add(&stats))
            .or_insert(stats);
    }
    Ok(())
}

/// Train a codebook from pre-computed template estimates.
pub fn train_from_estimates(
    pairs: &[(&Template, &EstimatedTemplate)],
    h: usize,
    k: usize,
    border_mode: BorderMode,
    channel_hash: u64,
) -> Result<Codebook> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::Empty("training requires at least one pair".into()))?;
    let estimator_id = first.1.estimator_id().to_string();
    if let Some((_, e)) = pairs.iter().find(|(_, e)| e.estimator_id() != estimator_id) {
        return Err(Error::Incompatible(format!(
            "mixed estimators in training set: '{}' and '{}'",
            estimator_id,
            e.estimator_id()
        )));
    }
    let mut cb = Codebook::empty(h, k, estimator_id, border_mode, channel_hash)?;
    for (t, e) in pairs {
        accumulate_pair(&mut cb, t, e)?;
    }
    Ok(cb)
}

/// Run the estimator over every (template, printed original) pair and
/// accumulate the per-neighborhood statistics.
///
/// Estimation is parallel across pairs; the integer accumulation is
/// order-independent, so the result is identical to a sequential pass.
pub fn train_codebook(
    pairs: &[(&Template, &PrintedImage)],
    estimator: &dyn TemplateEstimator,
    h: usize,
    k: usize,
    border_mode: BorderMode,
) -> Result<Codebook> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::Empty("training requires at least one pair".into()))?;
    let channel_hash = first.1.source().channel_hash();
    for (t, x) in pairs {
        if x.k() != k {
            return Err(Error::Incompatible(format!(
                "image magnification {} does not match k={k}",
                x.k()
            )));
        }
        if x.size() != t.size() * k {
            return Err(Error::Dimension(format!(
                "image side {} does not match template side {} at k={k}",
                x.size(),
                t.size()
            )));
        }
    }
    let estimates: Vec<EstimatedTemplate> = pairs
        .par_iter()
        .map(|(_, x)| estimator.estimate(x, k))
        .collect::<Result<_>>()?;
    let est_pairs: Vec<(&Template, &EstimatedTemplate)> = pairs
        .iter()
        .map(|(t, _)| *t)
        .zip(estimates.iter())
        .collect();
    train_from_estimates(&est_pairs, h, k, border_mode, channel_hash)
}

/// Average L1 distance between the positive-probability predictions of two
/// codebooks over the union of their observed codes; absent entries use the
/// respective global fallback. Stored (unclamped) values are compared.
pub fn codebook_distance(a: &Codebook, reference: &Codebook) -> Result<f64> {
    if a.h != reference.h {
        return Err(Error::Incompatible(format!(
            "codebooks with h={} and h={} cannot be compared",
            a.h, reference.h
        )));
    }
    let mut union: Vec<u64> = a.entries.keys().copied().collect();
    union.extend(reference.entries.keys().copied());
    union.sort_unstable();
    union.dedup();
    if union.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for code in &union {
        let pa = a.entries.get(code).map_or(a.global.p(), CodeStats::p);
        let pr = reference
            .entries
            .get(code)
            .map_or(reference.global.p(), CodeStats::p);
        total += (pa - pr).abs();
    }
    Ok(total / union.len() as f64)
}
