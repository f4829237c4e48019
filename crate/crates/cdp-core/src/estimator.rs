//! Template recovery from acquired images: global Otsu binarization followed
//! by per-symbol majority voting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::PrintedImage;
use crate::error::{Error, Result};
use crate::grid::BitGrid;
use crate::seeding::{derive_seed, Fnv1a};

/// Identifier of the standard estimator.
pub const OTSU_MV_ID: &str = "otsu-mv";

/// Number of intensity histogram bins (8-bit acquisition).
pub const HISTOGRAM_BINS: usize = 256;

/// Template estimate recovered from a probe, tagged with the estimator that
/// produced it. Codebooks are only valid for the estimator they were trained with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatedTemplate {
    bits: BitGrid,
    estimator_id: String,
}

impl EstimatedTemplate {
    pub fn new(bits: BitGrid, estimator_id: impl Into<String>) -> Self {
        EstimatedTemplate {
            bits,
            estimator_id: estimator_id.into(),
        }
    }

    pub fn bits(&self) -> &BitGrid {
        &self.bits
    }

    pub fn size(&self) -> usize {
        self.bits.size()
    }

    pub fn estimator_id(&self) -> &str {
        &self.estimator_id
    }
}

/// Result of Otsu's threshold search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuThreshold {
    /// Threshold on the [0,1] intensity axis (a bin boundary, except for
    /// degenerate inputs where it is the image's mean value).
    pub value: f64,
    /// Set when the histogram has a single occupied bin and no split exists.
    pub degenerate: bool,
}

#[inline]
fn intensity_bin(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Global Otsu threshold over a 256-bin histogram of the image.
///
/// Scans every bin boundary and keeps the split maximizing the between-class
/// variance; ties break toward the lower threshold. Class statistics are
/// integer-exact, so the scan order cannot change the result.
pub fn otsu_threshold(img: &PrintedImage) -> OtsuThreshold {
    let mut hist = [0u64; HISTOGRAM_BINS];
    for &v in img.pixels() {
        hist[intensity_bin(v)] += 1;
    }
    let occupied = hist.iter().filter(|&&h| h > 0).count();
    if occupied <= 1 {
        let mean = img.pixels().iter().sum::<f64>() / img.pixels().len() as f64;
        return OtsuThreshold {
            value: mean,
            degenerate: true,
        };
    }

    let total: u64 = hist.iter().sum();
    let weighted_total: u64 = hist
        .iter()
        .enumerate()
        .map(|(b, &h)| b as u64 * h)
        .sum();

    let mut count_low: u64 = 0;
    let mut sum_low: u64 = 0;
    let mut best_var = f64::NEG_INFINITY;
    let mut best_split = 0usize;
    for split in 0..HISTOGRAM_BINS - 1 {
        count_low += hist[split];
        sum_low += split as u64 * hist[split];
        let count_high = total - count_low;
        if count_low == 0 {
            continue;
        }
        if count_high == 0 {
            break;
        }
        let mean_low = sum_low as f64 / count_low as f64;
        let mean_high = (weighted_total - sum_low) as f64 / count_high as f64;
        let diff = mean_low - mean_high;
        let var = count_low as f64 * count_high as f64 * diff * diff;
        if var > best_var {
            best_var = var;
            best_split = split;
        }
    }

    OtsuThreshold {
        value: (best_split + 1) as f64 / HISTOGRAM_BINS as f64,
        degenerate: false,
    }
}

/// Threshold an image: pixel ≤ thr maps to 1 (black ink is low intensity).
pub fn binarize(img: &PrintedImage, thr: f64) -> BitGrid {
    let n = img.size();
    let mut bits = BitGrid::new(n);
    for r in 0..n {
        for c in 0..n {
            if img.get(r, c) <= thr {
                bits.set(r, c, 1);
            }
        }
    }
    bits
}

/// Collapse a (kL)×(kL) bit matrix to L×L symbols by majority voting over
/// each k×k patch; exact ties (even k² only) resolve to black.
pub fn majority_vote(bits: &BitGrid, k: usize) -> Result<EstimatedTemplate> {
    if k == 0 {
        return Err(Error::Parameter("magnification k must be >= 1".into()));
    }
    let n = bits.size();
    if !n.is_multiple_of(k) {
        return Err(Error::Dimension(format!(
            "bit matrix side {n} is not a multiple of k={k}"
        )));
    }
    let l = n / k;
    let mut symbols = BitGrid::new(l);
    for sr in 0..l {
        for sc in 0..l {
            let mut ones = 0usize;
            for r in sr * k..(sr + 1) * k {
                for c in sc * k..(sc + 1) * k {
                    ones += bits.get(r, c) as usize;
                }
            }
            if 2 * ones >= k * k {
                symbols.set(sr, sc, 1);
            }
        }
    }
    Ok(EstimatedTemplate::new(symbols, "majority-vote"))
}

/// Standard estimator: global Otsu threshold, binarization, majority voting.
///
/// A degenerate (single-bin) image has no data-driven threshold; the 0.5
/// midpoint is used instead so constant white stays white and constant black
/// stays black.
pub fn estimate_template(img: &PrintedImage, k: usize) -> Result<EstimatedTemplate> {
    let otsu = otsu_threshold(img);
    let thr = if otsu.degenerate { 0.5 } else { otsu.value };
    let voted = majority_vote(&binarize(img, thr), k)?;
    Ok(EstimatedTemplate::new(voted.bits().clone(), OTSU_MV_ID))
}

/// Pluggable probe-to-template estimator. The identifier travels with every
/// codebook so that estimator mismatches are detectable.
pub trait TemplateEstimator: Sync {
    fn id(&self) -> &str;
    fn estimate(&self, img: &PrintedImage, k: usize) -> Result<EstimatedTemplate>;
}

/// The production estimator.
#[derive(Debug, Clone, Copy, Default)]
pub struct OtsuMvEstimator;

impl TemplateEstimator for OtsuMvEstimator {
    fn id(&self) -> &str {
        OTSU_MV_ID
    }

    fn estimate(&self, img: &PrintedImage, k: usize) -> Result<EstimatedTemplate> {
        estimate_template(img, k)
    }
}

/// Synthetic binary-symmetric-channel estimator: recovers the template with
/// a fixed 0.5 threshold plus majority voting, then flips every symbol
/// i.i.d. with the given probability. With `flip_probability` = 0 on ideal
/// prints this is the identity channel; with q > 0 it realizes the
/// location-independent bit-flip model that neighborhood codebooks
/// generalize.
#[derive(Debug, Clone)]
pub struct BscEstimator {
    flip_probability: f64,
    seed: u64,
}

impl BscEstimator {
    pub fn new(flip_probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip_probability) {
            return Err(Error::Parameter(format!(
                "flip probability must lie in [0,1], got {flip_probability}"
            )));
        }
        Ok(BscEstimator {
            flip_probability,
            seed,
        })
    }
}

impl TemplateEstimator for BscEstimator {
    fn id(&self) -> &str {
        "bsc-stub"
    }

    fn estimate(&self, img: &PrintedImage, k: usize) -> Result<EstimatedTemplate> {
        let voted = majority_vote(&binarize(img, 0.5), k)?;
        let mut bits = voted.bits().clone();
        if self.flip_probability > 0.0 {
            // per-image stream derived from the image content, so identical
            // inputs flip identically and batches stay order-independent
            let mut content = Fnv1a::new();
            for &v in img.pixels() {
                content.update_f64(v);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, content.finish()));
            let l = bits.size();
            for r in 0..l {
                for c in 0..l {
                    let u = (rng.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                    if u < self.flip_probability {
                        bits.set(r, c, 1 - bits.get(r, c));
                    }
                }
            }
        }
        Ok(EstimatedTemplate::new(bits, self.id()))
    }
}
