//! Images as phase-distributed multimode coherent states.
//!
//! Pixel `k` (row-major, `x` fastest) is carried by optical mode `k` with
//! amplitude `a e^{i theta_k}`, where `a` is the per-mode amplitude and
//! `theta_k in [0, pi/2]` is the pixel label mapped linearly onto the quarter
//! circle. Readout mixes each pixel mode with an auxiliary `a e^{i theta_r}` on
//! a balanced splitter; the dark-port photon number `a^2 (1 - cos(theta_k -
//! theta_r))` is inverted back to a label.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{chop, AutoChopper, ChopStrategy, NetworkPlan};
use crate::optics::{mode_slot, CoherentField, ComplexAmplitude, GateElement};
use crate::rng::{poisson_count, substream};

/// Angles further than this beyond `[0, pi/2]` indicate an upstream fault.
pub const ANGLE_FAULT_MARGIN: f64 = 0.1;

/// Slack on the expectation-mode ratio `n/a^2 <= 2`.
pub const RATIO_SLACK: f64 = 1e-9;

pub const MAX_BITS: u32 = 16;

fn check_bits(bits: u32) -> Result<u32> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::invalid(
            "bits",
            format!("{bits} is outside 1..={MAX_BITS}"),
        ));
    }
    Ok((1u32 << bits) - 1)
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(
            "shape",
            format!("{width}x{height} image is empty"),
        ));
    }
    if width * height != len {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            found: len,
        });
    }
    Ok(())
}

/// Integer-labelled grayscale image with `bits` bits per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    bits: u32,
    pixels: Vec<u32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, bits: u32, pixels: Vec<u32>) -> Result<Self> {
        let max = check_bits(bits)?;
        check_shape(width, height, pixels.len())?;
        if let Some(k) = pixels.iter().position(|&s| s > max) {
            return Err(Error::invalid(
                "pixels",
                format!("label {} at index {k} exceeds {max}", pixels[k]),
            ));
        }
        Ok(GrayImage {
            width,
            height,
            bits,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn max_label(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// Row-major labels.
    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.pixels[y * self.width + x]
    }

    pub fn to_phase_image(&self) -> Result<PhaseImage> {
        let thetas = self
            .pixels
            .iter()
            .map(|&s| intensity_to_angle(s, self.bits))
            .collect::<Result<Vec<_>>>()?;
        PhaseImage::new(self.width, self.height, thetas)
    }

    /// Labels divided by `2^j - 1`.
    pub fn to_normalized(&self) -> NormalizedImage {
        let max = self.max_label() as f64;
        NormalizedImage {
            width: self.width,
            height: self.height,
            values: self.pixels.iter().map(|&s| s as f64 / max).collect(),
        }
    }

    /// Min-max rescaling of the actual pixel values onto `[0, 1]`.
    ///
    /// Returns `None` for a constant image, where the rescaling is undefined.
    pub fn min_max_normalized(&self) -> Option<NormalizedImage> {
        let values: Vec<f64> = self.pixels.iter().map(|&s| s as f64).collect();
        let values = min_max_normalize(&values)?;
        Some(NormalizedImage {
            width: self.width,
            height: self.height,
            values,
        })
    }
}

/// Affine rescaling onto `[0, 1]`; `None` when all values are equal.
pub fn min_max_normalize(values: &[f64]) -> Option<Vec<f64>> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span.is_finite() && span > 0.0) {
        return None;
    }
    Some(values.iter().map(|&v| (v - lo) / span).collect())
}

/// Continuous-valued image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl NormalizedImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, values.len())?;
        if let Some(k) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(
                "values",
                format!("value {} at index {k} is outside [0, 1]", values[k]),
            ));
        }
        Ok(NormalizedImage {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `theta = v pi/2`, bypassing integer labels.
    pub fn to_phase_image(&self) -> PhaseImage {
        PhaseImage {
            width: self.width,
            height: self.height,
            thetas: self.values.iter().map(|v| v * FRAC_PI_2).collect(),
        }
    }

    /// Nearest `bits`-bit labels, for writing out as PGM.
    pub fn quantize(&self, bits: u32) -> Result<GrayImage> {
        let max = check_bits(bits)? as f64;
        let pixels = self
            .values
            .iter()
            .map(|v| (v * max).round() as u32)
            .collect();
        GrayImage::new(self.width, self.height, bits, pixels)
    }
}

/// Flattened pixel phases `theta_k in [0, pi/2]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhaseRepr", into = "PhaseRepr")]
pub struct PhaseImage {
    width: usize,
    height: usize,
    thetas: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PhaseRepr {
    width: usize,
    height: usize,
    thetas: Vec<f64>,
}

impl TryFrom<PhaseRepr> for PhaseImage {
    type Error = Error;

    fn try_from(r: PhaseRepr) -> Result<Self> {
        PhaseImage::new(r.width, r.height, r.thetas)
    }
}

impl From<PhaseImage> for PhaseRepr {
    fn from(p: PhaseImage) -> Self {
        PhaseRepr {
            width: p.width,
            height: p.height,
            thetas: p.thetas,
        }
    }
}

impl PhaseImage {
    pub fn new(width: usize, height: usize, thetas: Vec<f64>) -> Result<Self> {
        check_shape(width, height, thetas.len())?;
        if let Some(k) = thetas.iter().position(|t| !(0.0..=FRAC_PI_2).contains(t)) {
            return Err(Error::invalid(
                "thetas",
                format!("phase {} at index {k} is outside [0, pi/2]", thetas[k]),
            ));
        }
        Ok(PhaseImage {
            width,
            height,
            thetas,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels `T`.
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn same_shape(&self, other: &PhaseImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(())
    }

    /// `v = theta / (pi/2)`.
    pub fn to_normalized(&self) -> NormalizedImage {
        NormalizedImage {
            width: self.width,
            height: self.height,
            values: self
                .thetas
                .iter()
                .map(|t| (t / FRAC_PI_2).clamp(0.0, 1.0))
                .collect(),
        }
    }
}

/// Anything that can be laid out as a phase image.
pub trait PhaseSource {
    fn phases(&self) -> Result<PhaseImage>;
}

impl PhaseSource for PhaseImage {
    fn phases(&self) -> Result<PhaseImage> {
        Ok(self.clone())
    }
}

impl PhaseSource for GrayImage {
    fn phases(&self) -> Result<PhaseImage> {
        self.to_phase_image()
    }
}

impl PhaseSource for NormalizedImage {
    fn phases(&self) -> Result<PhaseImage> {
        Ok(self.to_phase_image())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingParams {
    /// Amplitude `a` of each pixel mode after chopping (the source carries
    /// `a sqrt(T)`).
    pub per_mode_amplitude: f64,
    pub bits_per_pixel: u32,
    #[serde(default)]
    pub auxiliary_phase: f64,
    #[serde(default = "default_overlap_target")]
    pub overlap_target: f64,
}

fn default_overlap_target() -> f64 {
    0.1
}

impl EncodingParams {
    pub fn new(per_mode_amplitude: f64, bits_per_pixel: u32) -> Result<Self> {
        EncodingParams {
            per_mode_amplitude,
            bits_per_pixel,
            auxiliary_phase: 0.0,
            overlap_target: default_overlap_target(),
        }
        .validated()
    }

    /// Parameters at the amplitude where adjacent labels overlap by
    /// `overlap_target`.
    pub fn optimal(bits_per_pixel: u32, overlap_target: f64) -> Result<Self> {
        let a = optimal_amplitude(bits_per_pixel, overlap_target)?;
        EncodingParams {
            per_mode_amplitude: a,
            bits_per_pixel,
            auxiliary_phase: 0.0,
            overlap_target,
        }
        .validated()
    }

    pub fn with_auxiliary_phase(mut self, theta_r: f64) -> Result<Self> {
        self.auxiliary_phase = theta_r;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let a = self.per_mode_amplitude;
        if !((a * a).is_finite() && a > 0.0) {
            return Err(Error::invalid(
                "per_mode_amplitude",
                format!("{a} must be positive with finite square"),
            ));
        }
        check_bits(self.bits_per_pixel)?;
        if !self.auxiliary_phase.is_finite() {
            return Err(Error::invalid("auxiliary_phase", "must be finite"));
        }
        if !(self.overlap_target > 0.0 && self.overlap_target < 1.0) {
            return Err(Error::invalid(
                "overlap_target",
                format!("{} is outside (0, 1)", self.overlap_target),
            ));
        }
        Ok(self)
    }

    /// `a^2`, the mean photon number per pixel mode.
    pub fn mode_intensity(&self) -> f64 {
        self.per_mode_amplitude * self.per_mode_amplitude
    }

    fn auxiliary(&self) -> ComplexAmplitude {
        Complex64::from_polar(self.per_mode_amplitude, self.auxiliary_phase)
    }
}

/// How photon numbers are obtained from the dark ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ReadoutMode {
    /// Exact mean photon numbers.
    Expectation,
    /// Average of `shots` Poisson counts per mode. Mode `k` uses stream `k` of
    /// `seed`.
    Sampled { seed: u64, shots: u32 },
}

/// Readout of one pixel mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// 1-based mode index.
    pub mode: usize,
    pub expected_n: f64,
    /// `sqrt(expected_n)`.
    pub shot_noise: f64,
    /// Total count over all shots, when sampled.
    pub sampled_n: Option<u64>,
    pub shots: u32,
    pub rng_seed: Option<u64>,
}

impl MeasurementRecord {
    fn expected(mode: usize, expected_n: f64) -> Self {
        MeasurementRecord {
            mode,
            expected_n,
            shot_noise: expected_n.sqrt(),
            sampled_n: None,
            shots: 0,
            rng_seed: None,
        }
    }

    /// The photon number used for decoding.
    pub fn measured_n(&self) -> f64 {
        match self.sampled_n {
            Some(total) if self.shots > 0 => total as f64 / self.shots as f64,
            _ => self.expected_n,
        }
    }
}

/// Label `s` mapped onto `(pi/2) s / (2^j - 1)`.
pub fn intensity_to_angle(s: u32, bits: u32) -> Result<f64> {
    let max = check_bits(bits)?;
    if s > max {
        return Err(Error::invalid(
            "s",
            format!("label {s} exceeds {max} for {bits} bits"),
        ));
    }
    Ok(FRAC_PI_2 * s as f64 / max as f64)
}

/// Nearest label for an angle.
pub fn angle_to_intensity(theta: f64, bits: u32) -> Result<u32> {
    let max = check_bits(bits)?;
    if !(-ANGLE_FAULT_MARGIN..=FRAC_PI_2 + ANGLE_FAULT_MARGIN).contains(&theta) {
        return Err(Error::invalid(
            "theta",
            format!("{theta} is far outside [0, pi/2]; upstream decode fault"),
        ));
    }
    let label = (theta * max as f64 / FRAC_PI_2).round();
    Ok(label.clamp(0.0, max as f64) as u32)
}

/// Encodes through the default network (tree for `2^n` pixels, chain
/// otherwise) followed by one phase shifter per pixel mode.
pub fn encode_image<I: PhaseSource + ?Sized>(
    img: &I,
    params: &EncodingParams,
) -> Result<CoherentField> {
    encode_with(img, params, &AutoChopper)
}

/// Encodes with an explicit chopping strategy.
pub fn encode_with<I: PhaseSource + ?Sized>(
    img: &I,
    params: &EncodingParams,
    chopper: &dyn ChopStrategy,
) -> Result<CoherentField> {
    let phases = img.phases()?;
    let t = phases.len();
    let source = Complex64::new(params.per_mode_amplitude * (t as f64).sqrt(), 0.0);
    let mut field = chopper.chop(source, t)?;
    for (k, &theta) in phases.thetas().iter().enumerate() {
        GateElement::phase_shifter(k + 1, theta).act_on(field.amplitudes_mut())?;
    }
    Ok(field)
}

/// Checks that a gray image's bit depth matches the decoding parameters.
pub fn encode_gray(img: &GrayImage, params: &EncodingParams) -> Result<CoherentField> {
    if img.bits() != params.bits_per_pixel {
        return Err(Error::invalid(
            "bits_per_pixel",
            format!(
                "image has {} bits, params expect {}",
                img.bits(),
                params.bits_per_pixel
            ),
        ));
    }
    encode_image(img, params)
}

/// Phase shift `delta_theta` on pixel mode `k` (1-based) only.
pub fn point_transform(field: &CoherentField, k: usize, delta_theta: f64) -> Result<CoherentField> {
    let slot = mode_slot(k, field.mode_count())?;
    let mut out = field.clone();
    out.amplitudes_mut()[slot] *= Complex64::from_polar(1.0, delta_theta);
    Ok(out)
}

/// One phase shifter before the chopping network shifts every daughter.
pub fn global_transform(
    alpha_in: ComplexAmplitude,
    delta_theta: f64,
    plan: &NetworkPlan,
) -> Result<CoherentField> {
    chop(alpha_in * Complex64::from_polar(1.0, delta_theta), plan)
}

/// Balanced splitter on two modes: `((a + b)/sqrt 2, (a - b)/sqrt 2)`.
pub fn interfere_with_auxiliary(
    pixel_mode: ComplexAmplitude,
    aux_mode: ComplexAmplitude,
) -> (ComplexAmplitude, ComplexAmplitude) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ((pixel_mode + aux_mode) * s, (pixel_mode - aux_mode) * s)
}

/// Mean dark-port photon number `a^2 (1 - cos(theta_k - theta_r))`.
pub fn expected_pixel_signal(theta_k: f64, params: &EncodingParams) -> f64 {
    params.mode_intensity() * (1.0 - (theta_k - params.auxiliary_phase).cos())
}

/// One Poisson photon count around [`expected_pixel_signal`].
pub fn sample_pixel_signal(theta_k: f64, params: &EncodingParams, seed: u64) -> u64 {
    poisson_count(
        &mut substream(seed, 0),
        expected_pixel_signal(theta_k, params),
    )
}

/// Dark-port photon numbers of every pixel mode against the auxiliary state.
pub fn measure_field(
    field: &CoherentField,
    params: &EncodingParams,
    mode: ReadoutMode,
) -> Result<Vec<MeasurementRecord>> {
    if let ReadoutMode::Sampled { shots: 0, .. } = mode {
        return Err(Error::invalid("shots", "must be at least 1"));
    }
    let aux = params.auxiliary();
    let records = field
        .amplitudes()
        .par_iter()
        .enumerate()
        .map(|(k, &amp)| {
            let (_, dark) = interfere_with_auxiliary(amp, aux);
            let mut rec = MeasurementRecord::expected(k + 1, dark.norm_sqr());
            if let ReadoutMode::Sampled { seed, shots } = mode {
                let mut rng = substream(seed, k as u64);
                let total = (0..shots)
                    .map(|_| poisson_count(&mut rng, rec.expected_n))
                    .sum();
                rec.sampled_n = Some(total);
                rec.shots = shots;
                rec.rng_seed = Some(seed);
            }
            rec
        })
        .collect();
    Ok(records)
}

/// Inverts a dark-port photon number to a phase in `[0, pi/2]`.
///
/// Ratios above `2 + RATIO_SLACK` are rejected when `strict` (exact means);
/// sampled counts may legitimately exceed the bound and are clamped.
pub fn decode_phase(mode: usize, n: f64, params: &EncodingParams, strict: bool) -> Result<f64> {
    let ratio = n / params.mode_intensity();
    if strict && ratio > 2.0 + RATIO_SLACK {
        return Err(Error::DecodeFault { mode, ratio });
    }
    let theta = params.auxiliary_phase + (1.0 - ratio).clamp(-1.0, 1.0).acos();
    Ok(theta.clamp(0.0, FRAC_PI_2))
}

/// Full readout: measure every pixel mode, invert to phases, round to labels.
pub fn retrieve_image(
    field: &CoherentField,
    width: usize,
    height: usize,
    params: &EncodingParams,
    mode: ReadoutMode,
) -> Result<(GrayImage, Vec<MeasurementRecord>)> {
    check_shape(width, height, field.mode_count())?;
    let records = measure_field(field, params, mode)?;
    let strict = matches!(mode, ReadoutMode::Expectation);
    let pixels = records
        .iter()
        .map(|r| {
            let theta = decode_phase(r.mode, r.measured_n(), params, strict)?;
            angle_to_intensity(theta, params.bits_per_pixel)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        GrayImage::new(width, height, params.bits_per_pixel, pixels)?,
        records,
    ))
}

/// Per-mode amplitude at which the post-splitter states of adjacent labels
/// overlap by `overlap_target`:
/// `a^2 = -ln(target) / (1 - cos(pi / (2 (2^j - 1))))`.
pub fn optimal_amplitude(bits: u32, overlap_target: f64) -> Result<f64> {
    let max = check_bits(bits)?;
    if !(overlap_target > 0.0 && overlap_target < 1.0) {
        return Err(Error::invalid(
            "overlap_target",
            format!("{overlap_target} is outside (0, 1)"),
        ));
    }
    let step = FRAC_PI_2 / max as f64;
    Ok((-overlap_target.ln() / (1.0 - step.cos())).sqrt())
}

/// Overlap of the dark-port states for labels `s` and `s + 1`.
pub fn adjacent_label_overlap(s: u32, params: &EncodingParams) -> Result<f64> {
    let aux = params.auxiliary();
    let a = params.per_mode_amplitude;
    let post = |label: u32| -> Result<ComplexAmplitude> {
        let theta = intensity_to_angle(label, params.bits_per_pixel)?;
        Ok(interfere_with_auxiliary(Complex64::from_polar(a, theta), aux).1)
    };
    Ok(crate::optics::overlap(post(s + 1)?, post(s)?))
}
