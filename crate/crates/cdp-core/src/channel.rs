//! Simulated printing-imaging channel and the estimate-and-reprint attack.
//!
//! The physical press + scanner pair is modeled as a fixed pipeline:
//! nearest-neighbor upsampling to ink coverage, Gaussian spatial spread,
//! dot-gain power law, intensity inversion, additive acquisition noise.
//! Two printer presets reproduce the two-printer / four-fake grid used by
//! the evaluation harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::estimate_template;
use crate::grid::BitGrid;
use crate::seeding::{derive_seed, Fnv1a};
use crate::template::Template;

/// Physics and acquisition parameters of one print-scan channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Magnification: one template symbol becomes a k×k pixel patch.
    pub k: usize,
    /// Std of the Gaussian point-spread function, in pixels.
    pub blur_sigma: f64,
    /// Dot-gain exponent applied to ink coverage; values < 1 spread ink.
    pub dot_gain_gamma: f64,
    /// Std of i.i.d. Gaussian acquisition noise on [0,1] intensities.
    pub noise_sigma: f64,
    /// Base seed of the channel's noise stream.
    pub seed: u64,
}

impl ChannelParams {
    /// Default printer "A".
    ///
    /// The pair A/B is deliberately a same-family pair: identical optics and
    /// dot gain, slightly different acquisition noise. Symbol errors then
    /// stay neighborhood-structured while neither printer's output is
    /// uniformly crisper than the other's, which keeps all eight cells of
    /// the original/fake grid meaningful.
    pub fn printer_a(seed: u64) -> Self {
        ChannelParams {
            k: 3,
            blur_sigma: 1.30,
            dot_gain_gamma: 0.60,
            noise_sigma: 0.060,
            seed,
        }
    }

    /// Default printer "B"; see [`ChannelParams::printer_a`].
    pub fn printer_b(seed: u64) -> Self {
        ChannelParams {
            k: 3,
            blur_sigma: 1.30,
            dot_gain_gamma: 0.60,
            noise_sigma: 0.063,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Parameter("magnification k must be >= 1".into()));
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma > 0.0) {
            return Err(Error::Parameter(format!(
                "blur_sigma must be finite and > 0, got {}",
                self.blur_sigma
            )));
        }
        if !(self.dot_gain_gamma.is_finite()
            && self.dot_gain_gamma > 0.0
            && self.dot_gain_gamma <= 1.0)
        {
            return Err(Error::Parameter(format!(
                "dot_gain_gamma must lie in (0,1], got {}",
                self.dot_gain_gamma
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Stable hash of the channel physics (seed excluded): two prints from
    /// the same press with different noise realizations share a lineage.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.update_u64(self.k as u64);
        h.update_f64(self.blur_sigma);
        h.update_f64(self.dot_gain_gamma);
        h.update_f64(self.noise_sigma);
        h.finish()
    }
}

/// Provenance of a printed image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceId {
    /// Printed directly from a template through one channel.
    Original { channel: u64 },
    /// Estimate-and-reprint counterfeit.
    Fake {
        estimator: String,
        source_channel: u64,
        reprint_channel: u64,
    },
    /// Constructed in memory (ideal rendering, test stubs, file imports).
    Synthetic,
}

impl SourceId {
    /// Hash of the channel that produced the visible print.
    pub fn channel_hash(&self) -> u64 {
        match self {
            SourceId::Original { channel } => *channel,
            SourceId::Fake {
                reprint_channel, ..
            } => *reprint_channel,
            SourceId::Synthetic => 0,
        }
    }
}

/// Acquired image of a printed code: (kL)×(kL) intensities in [0,1],
/// 0 = black ink, 1 = white paper.
#[derive(Debug, Clone, PartialEq)]
pub struct PrintedImage {
    size: usize,
    k: usize,
    pixels: Vec<f64>,
    source: SourceId,
}

/// Sidecar metadata serialized next to a printed-image file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageMeta {
    pub k: usize,
    pub source: SourceId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelParams>,
}

impl PrintedImage {
    pub fn from_pixels(size: usize, k: usize, pixels: Vec<f64>, source: SourceId) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("magnification k must be >= 1".into()));
        }
        if !size.is_multiple_of(k) {
            return Err(Error::Dimension(format!(
                "image side {size} is not a multiple of k={k}"
            )));
        }
        if pixels.len() != size * size {
            return Err(Error::Dimension(format!(
                "expected {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parameter(
                "pixel intensities must lie in [0,1]".into(),
            ));
        }
        Ok(PrintedImage {
            size,
            k,
            pixels,
            source,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Template-side symbol count (size / k).
    pub fn symbol_size(&self) -> usize {
        self.size / self.k
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn source(&self) -> &SourceId {
        &self.source
    }
}

/// Quantized 2-D Gaussian kernel of side 2·half_width+1, row-major.
///
/// Weights are proportional to exp(-(dx²+dy²)/(2σ²)) and normalized so the
/// row-major sum is exactly 1.0 in floating point: after dividing by the
/// total, the last element is replaced by 1 minus the sum of the others.
pub fn gaussian_kernel(sigma: f64, half_width: usize) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Parameter(format!(
            "sigma must be finite and > 0, got {sigma}"
        )));
    }
    if half_width == 0 {
        return Err(Error::Parameter("half_width must be >= 1".into()));
    }
    let side = 2 * half_width + 1;
    let mut kernel = Vec::with_capacity(side * side);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for dy in -(half_width as isize)..=(half_width as isize) {
        for dx in -(half_width as isize)..=(half_width as isize) {
            let d2 = (dx * dx + dy * dy) as f64;
            kernel.push((-d2 * inv).exp());
        }
    }
    let total: f64 = kernel.iter().sum();
    for v in kernel.iter_mut() {
        *v /= total;
    }
    let partial: f64 = kernel[..side * side - 1].iter().sum();
    let last = kernel.len() - 1;
    kernel[last] = 1.0 - partial;
    Ok(kernel)
}

/// Kernel half-width used by the print pipeline for a given blur.
pub fn kernel_half_width(blur_sigma: f64) -> usize {
    ((3.0 * blur_sigma).ceil() as usize).max(1)
}

/// Index map implementing symmetric reflection at the borders
/// (…, 1, 0 | 0, 1, …, n-1 | n-1, n-2, …).
fn reflect_map(n: usize, half_width: usize) -> Vec<usize> {
    let mut map = Vec::with_capacity(n + 2 * half_width);
    for i in 0..n + 2 * half_width {
        let mut idx = i as isize - half_width as isize;
        loop {
            if idx < 0 {
                idx = -idx - 1;
            } else if idx >= n as isize {
                idx = 2 * n as isize - idx - 1;
            } else {
                break;
            }
        }
        map.push(idx as usize);
    }
    map
}

/// Dense 2-D convolution with reflect-padded borders. The kernel is iterated
/// row-major so a constant input reproduces the kernel's exact sum.
fn convolve_reflect(src: &[f64], n: usize, kernel: &[f64], half_width: usize) -> Vec<f64> {
    let side = 2 * half_width + 1;
    debug_assert_eq!(kernel.len(), side * side);
    let map = reflect_map(n, half_width);
    let mut dst = vec![0.0; n * n];
    dst.par_chunks_mut(n).enumerate().for_each(|(r, out_row)| {
        for (c, out) in out_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut ki = 0;
            for kr in 0..side {
                let sr = map[r + kr] * n;
                for kc in 0..side {
                    acc += kernel[ki] * src[sr + map[c + kc]];
                    ki += 1;
                }
            }
            *out = acc;
        }
    });
    dst
}

/// Nearest-neighbor upsampling of a bit grid into per-pixel values.
/// `black` and `white` select the output encoding (ink coverage: 1/0,
/// ideal intensity: 0/1).
pub(crate) fn upsample_bits(bits: &BitGrid, k: usize, black: f64, white: f64) -> Vec<f64> {
    let l = bits.size();
    let n = l * k;
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        let tr = r / k;
        for c in 0..n {
            out[r * n + c] = if bits.get(tr, c / k) == 1 { black } else { white };
        }
    }
    out
}

/// Noise-free rendering of a bit grid at magnification k: black symbols map
/// to intensity 0.0, white to 1.0. This is the k-fold lossless channel used
/// by pixel metrics and by synthetic test channels.
pub fn ideal_print(bits: &BitGrid, k: usize) -> Result<PrintedImage> {
    if k == 0 {
        return Err(Error::Parameter("magnification k must be >= 1".into()));
    }
    let pixels = upsample_bits(bits, k, 0.0, 1.0);
    PrintedImage::from_pixels(bits.size() * k, k, pixels, SourceId::Synthetic)
}

fn print_bits(bits: &BitGrid, params: &ChannelParams, source: SourceId) -> Result<PrintedImage> {
    params.validate()?;
    let n = bits.size() * params.k;

    // (1) ink coverage on the pixel grid
    let coverage = upsample_bits(bits, params.k, 1.0, 0.0);

    // (2) spatial ink spread
    let hw = kernel_half_width(params.blur_sigma);
    let kernel = gaussian_kernel(params.blur_sigma, hw)?;
    let spread = convolve_reflect(&coverage, n, &kernel, hw);

    // (3) dot gain, (4) intensity inversion
    let gamma = params.dot_gain_gamma;
    let mut pixels: Vec<f64> = spread
        .into_iter()
        // the residual-absorbing kernel weight can push coverage past [0,1]
        // by one ulp, and powf of a tiny negative would be NaN
        .map(|u| 1.0 - u.clamp(0.0, 1.0).powf(gamma))
        .collect();

    // (5) acquisition noise; skipped entirely at sigma = 0 so the output is
    // independent of the seed
    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let normal = Normal::new(0.0, params.noise_sigma)
            .map_err(|e| Error::Parameter(format!("noise distribution: {e}")))?;
        for v in pixels.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in pixels.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }

    PrintedImage::from_pixels(n, params.k, pixels, source)
}

/// Pass a template through the print-acquire channel.
pub fn print_code(t: &Template, params: &ChannelParams) -> Result<PrintedImage> {
    print_bits(
        t.bits(),
        params,
        SourceId::Original {
            channel: params.content_hash(),
        },
    )
}

/// Print a batch of templates; image `i` owns the PRNG stream derived from
/// `(params.seed, i)`, so the batch can run fully in parallel and still
/// reproduce bit-identically.
pub fn print_batch(templates: &[Template], params: &ChannelParams) -> Result<Vec<PrintedImage>> {
    templates
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let per_image = params.clone().with_seed(derive_seed(params.seed, i as u64));
            print_code(t, &per_image)
        })
        .collect()
}

/// Estimate-and-reprint attack: recover a template estimate from an acquired
/// original and push it through a (possibly different) channel.
pub fn make_fake(x: &PrintedImage, reprint_params: &ChannelParams) -> Result<PrintedImage> {
    let estimate = estimate_template(x, x.k())?;
    let source = SourceId::Fake {
        estimator: estimate.estimator_id().to_string(),
        source_channel: x.source().channel_hash(),
        reprint_channel: reprint_params.content_hash(),
    };
    print_bits(estimate.bits(), reprint_params, source)
}
