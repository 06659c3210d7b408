//! Noise-layer databases and the image-quality experiments built on them.
//!
//! Noise is added as `clip(v + mean + sigma z, 0, 1)` followed by min-max
//! normalization. Clipping first keeps a single outlier from stretching the
//! whole image back into `[0, 1]`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{min_max_normalize, EncodingParams, GrayImage, NormalizedImage, ReadoutMode};
use crate::error::{Error, Result};
use crate::pgm;
use crate::rng::standard_normal_field;
use crate::similarity::{
    cosine_similarity, cosine_similarity_measured, mse, ImageDatabase, SimilarityReport,
};

static BUNDLED_REFERENCE: &[u8] = include_bytes!("../assets/reference_64.pgm");

/// The bundled 64x64 8-bit test image.
pub fn bundled_reference() -> GrayImage {
    pgm::decode(BUNDLED_REFERENCE).expect("bundled reference is a valid PGM")
}

/// Pixel values rescaled to `[0, 1]` by min-max; a constant image is divided
/// by its maximum label instead.
pub fn normalize_reference(img: &GrayImage) -> NormalizedImage {
    img.min_max_normalized()
        .unwrap_or_else(|| img.to_normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub mean: f64,
    /// Standard deviation of the per-pixel Gaussian noise.
    pub sigma: f64,
    pub layers: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validated(self) -> Result<Self> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid(
                "sigma",
                format!("{} must be positive and finite", self.sigma),
            ));
        }
        if !self.mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        if self.layers == 0 {
            return Err(Error::invalid("layers", "must be at least 1"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub steps: usize,
    /// Noise draws averaged per grid point.
    #[serde(default = "default_sweep_seeds")]
    pub seeds: usize,
}

fn default_sweep_seeds() -> usize {
    20
}

impl SweepSpec {
    pub fn validated(self) -> Result<Self> {
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite())
        {
            return Err(Error::invalid(
                "sweep",
                format!(
                    "bounds {}..{} must be positive and ordered",
                    self.sigma_min, self.sigma_max
                ),
            ));
        }
        if self.steps == 0 || self.seeds == 0 {
            return Err(Error::invalid(
                "sweep",
                "steps and seeds must be at least 1",
            ));
        }
        Ok(self)
    }

    /// `steps` evenly spaced values from `sigma_min` to `sigma_max`.
    pub fn grid(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.sigma_min];
        }
        (0..self.steps)
            .map(|i| {
                let t = i as f64 / (self.steps - 1) as f64;
                self.sigma_min * (1.0 - t) + self.sigma_max * t
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub sigma0: f64,
    pub delta_sigma: f64,
    /// Images beyond the first; `count + 1` images in total.
    pub count: usize,
}

impl PerturbationSpec {
    pub fn validated(self) -> Result<Self> {
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::invalid(
                "sigma0",
                format!("{} must be positive and finite", self.sigma0),
            ));
        }
        if !(self.delta_sigma.is_finite() && self.delta_sigma > 0.0) {
            return Err(Error::invalid(
                "delta_sigma",
                format!("{} must be positive and finite", self.delta_sigma),
            ));
        }
        Ok(self)
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..=self.count)
            .map(|i| self.sigma0 + i as f64 * self.delta_sigma)
            .collect()
    }
}

/// Experiment description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// PGM reference image; the bundled image when absent.
    #[serde(default)]
    pub reference_path: Option<PathBuf>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    pub encoding: EncodingParams,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
}

impl ExperimentConfig {
    pub fn validated(self) -> Result<Self> {
        self.encoding.validated()?;
        self.noise.validated()?;
        if let Some(s) = self.sweep {
            s.validated()?;
        }
        if let Some(p) = self.perturbation {
            p.validated()?;
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<Self>(text)?.validated()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn load_reference(&self) -> Result<NormalizedImage> {
        let gray = match &self.reference_path {
            Some(p) => pgm::read(p)?,
            None => bundled_reference(),
        };
        Ok(normalize_reference(&gray))
    }
}

/// Output of one noise layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyImage {
    pub image: NormalizedImage,
    /// The noisy image was constant, so min-max was undefined and every pixel
    /// was set to 0.
    pub degenerate: bool,
}

/// `clip(v + mean + sigma z)` then min-max, with `z` supplied by the caller.
pub fn apply_noise_field(
    img: &NormalizedImage,
    mean: f64,
    sigma: f64,
    z: &[f64],
) -> Result<NoisyImage> {
    if z.len() != img.len() {
        return Err(Error::DimensionMismatch {
            expected: img.len(),
            found: z.len(),
        });
    }
    let noisy: Vec<f64> = img
        .values()
        .iter()
        .zip(z)
        .map(|(v, z)| (v + mean + sigma * z).clamp(0.0, 1.0))
        .collect();
    let (values, degenerate) = match min_max_normalize(&noisy) {
        Some(v) => (v, false),
        None => {
            log::warn!("noisy image is constant; min-max undefined, mapping to 0");
            (vec![0.0; noisy.len()], true)
        }
    };
    Ok(NoisyImage {
        image: NormalizedImage::new(img.width(), img.height(), values)?,
        degenerate,
    })
}

/// One layer of i.i.d. Gaussian noise drawn from stream `stream` of `seed`.
pub fn add_gaussian_noise_layer(
    img: &NormalizedImage,
    mean: f64,
    sigma: f64,
    seed: u64,
    stream: u64,
) -> Result<NoisyImage> {
    if !(sigma.is_finite() && sigma >= 0.0 && mean.is_finite()) {
        return Err(Error::invalid(
            "sigma",
            format!("noise ({mean}, {sigma}) must be finite with sigma >= 0"),
        ));
    }
    let z = standard_normal_field(seed, stream, img.len());
    apply_noise_field(img, mean, sigma, &z)
}

/// Database whose entry `m` is entry `m - 1` plus noise layer `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredDatabase {
    pub images: Vec<NormalizedImage>,
    pub database: ImageDatabase,
    /// 1-based layers that hit the constant-image case.
    pub degenerate_layers: Vec<usize>,
}

/// Layer `m` (1-based) draws its noise from stream `m` of `spec.seed`.
pub fn build_layered_database(
    reference: &NormalizedImage,
    spec: &NoiseSpec,
) -> Result<LayeredDatabase> {
    let spec = spec.validated()?;
    let mut images = Vec::with_capacity(spec.layers);
    let mut degenerate_layers = Vec::new();
    let mut current = reference.clone();
    for m in 1..=spec.layers {
        let noisy = add_gaussian_noise_layer(&current, spec.mean, spec.sigma, spec.seed, m as u64)?;
        if noisy.degenerate {
            degenerate_layers.push(m);
        }
        current = noisy.image;
        images.push(current.clone());
    }
    let database =
        ImageDatabase::new(images.iter().map(NormalizedImage::to_phase_image).collect())?;
    Ok(LayeredDatabase {
        images,
        database,
        degenerate_layers,
    })
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

/// Ranks starting at 1; ties share their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::invalid("spearman", "needs at least two points"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("spearman", "one of the series is constant"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Rows `R-R`, `R-A`, ... of cosine and MSE against the reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IqaTable {
    pub rows: Vec<SimilarityReport>,
    pub cosine_decreasing: bool,
    pub mse_increasing: bool,
    /// Between the cosine and MSE columns; `None` when a column is constant.
    pub spearman: Option<f64>,
    pub degenerate_layers: Vec<usize>,
}

/// Cosine values come from the interference readout in `mode`.
pub fn iqa_table(
    reference: &NormalizedImage,
    noise: &NoiseSpec,
    params: &EncodingParams,
    mode: ReadoutMode,
) -> Result<IqaTable> {
    let layered = build_layered_database(reference, noise)?;
    let ref_phase = reference.to_phase_image();
    let candidates: Vec<_> = std::iter::once(("R".to_string(), &ref_phase))
        .chain(
            layered
                .database
                .labels()
                .iter()
                .cloned()
                .zip(layered.database.entries()),
        )
        .collect();
    let rows = candidates
        .par_iter()
        .map(|(label, image)| {
            let mut r = cosine_similarity_measured(&ref_phase, image, params, mode)?;
            r.reference = "R".into();
            r.candidate = label.clone();
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let cos: Vec<f64> = rows.iter().map(|r| r.cosine).collect();
    let err: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    Ok(IqaTable {
        cosine_decreasing: strictly_decreasing(&cos),
        mse_increasing: strictly_increasing(&err),
        spearman: spearman(&cos, &err).ok(),
        degenerate_layers: layered.degenerate_layers,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sigma: f64,
    /// Mean over the seeds.
    pub cosine: f64,
    pub mse: f64,
}

/// Seed-averaged single-layer cosine and MSE over the sigma grid.
///
/// Draw `s` uses stream `s` of `seed` at every grid point, so neighbouring
/// points differ only through sigma.
pub fn sensitivity_sweep(
    reference: &NormalizedImage,
    sweep: &SweepSpec,
    mean: f64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let sweep = sweep.validated()?;
    let fields: Vec<Vec<f64>> = (0..sweep.seeds)
        .map(|s| standard_normal_field(seed, s as u64, reference.len()))
        .collect();
    let ref_phase = reference.to_phase_image();
    sweep
        .grid()
        .into_par_iter()
        .map(|sigma| {
            let (mut c, mut e) = (0.0, 0.0);
            for z in &fields {
                let noisy = apply_noise_field(reference, mean, sigma, z)?.image;
                c += cosine_similarity(&ref_phase, &noisy.to_phase_image())?;
                e += mse(reference, &noisy)?;
            }
            let n = fields.len() as f64;
            Ok(SweepPoint {
                sigma,
                cosine: c / n,
                mse: e / n,
            })
        })
        .collect()
}

pub fn sweep_is_decreasing(points: &[SweepPoint]) -> bool {
    points.windows(2).all(|w| w[1].cosine < w[0].cosine)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationRow {
    /// 0-based position in sigma order.
    pub index: usize,
    pub sigma: f64,
    pub cosine: f64,
    /// 1 for the highest cosine; ties broken by index.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationTable {
    pub rows: Vec<PerturbationRow>,
    /// All cosines distinct.
    pub strict: bool,
    /// Ranks follow sigma order and are strict.
    pub in_order: bool,
    /// The requested delta could not be resolved.
    pub resolution_exceeded: bool,
    /// Smallest delta found that still gives a strict, in-order ranking.
    pub smallest_resolvable_delta: Option<f64>,
}

fn perturbation_rows(
    reference: &NormalizedImage,
    mean: f64,
    z: &[f64],
    spec: &PerturbationSpec,
) -> Result<Vec<PerturbationRow>> {
    let ref_phase = reference.to_phase_image();
    let cosines = spec
        .sigmas()
        .into_par_iter()
        .map(|sigma| {
            let noisy = apply_noise_field(reference, mean, sigma, z)?.image;
            Ok((
                sigma,
                cosine_similarity(&ref_phase, &noisy.to_phase_image())?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..cosines.len()).collect();
    order.sort_by(|&a, &b| cosines[b].1.total_cmp(&cosines[a].1).then(a.cmp(&b)));
    let mut rows: Vec<PerturbationRow> = cosines
        .iter()
        .enumerate()
        .map(|(index, &(sigma, cosine))| PerturbationRow {
            index,
            sigma,
            cosine,
            rank: 0,
        })
        .collect();
    for (r, &i) in order.iter().enumerate() {
        rows[i].rank = r + 1;
    }
    Ok(rows)
}

fn is_strict(rows: &[PerturbationRow]) -> bool {
    let mut c: Vec<f64> = rows.iter().map(|r| r.cosine).collect();
    c.sort_by(f64::total_cmp);
    c.windows(2).all(|w| w[0] != w[1])
}

fn is_in_order(rows: &[PerturbationRow]) -> bool {
    strictly_decreasing(&rows.iter().map(|r| r.cosine).collect::<Vec<_>>())
}

fn resolves(
    reference: &NormalizedImage,
    mean: f64,
    z: &[f64],
    spec: &PerturbationSpec,
) -> Result<bool> {
    Ok(is_in_order(&perturbation_rows(reference, mean, z, spec)?))
}

/// Smallest delta giving a strict, in-order ranking: scan decades from
/// `1e-1` down to `1e-17`, then bisect in log space between the last passing
/// and first failing decade.
pub fn smallest_resolvable_delta(
    reference: &NormalizedImage,
    mean: f64,
    z: &[f64],
    sigma0: f64,
    count: usize,
) -> Result<Option<f64>> {
    let at = |delta: f64| {
        resolves(
            reference,
            mean,
            z,
            &PerturbationSpec {
                sigma0,
                delta_sigma: delta,
                count,
            },
        )
    };
    let mut pass = None;
    let mut fail = None;
    for k in 1..=17 {
        let delta = 10f64.powi(-k);
        if at(delta)? {
            pass = Some(delta);
        } else {
            fail = Some(delta);
            break;
        }
    }
    let (Some(mut hi), Some(mut lo)) = (pass, fail) else {
        return Ok(pass);
    };
    for _ in 0..30 {
        let mid = (0.5 * (hi.ln() + lo.ln())).exp();
        if at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Images `clip-normalize(reference + mean + sigma_i z)` for one fixed
/// standard-normal field `z` (stream 0 of `seed`), ranked by cosine.
pub fn perturbation_ranking(
    reference: &NormalizedImage,
    spec: &PerturbationSpec,
    mean: f64,
    seed: u64,
) -> Result<PerturbationTable> {
    let spec = spec.validated()?;
    let z = standard_normal_field(seed, 0, reference.len());
    let rows = perturbation_rows(reference, mean, &z, &spec)?;
    let strict = is_strict(&rows);
    let in_order = is_in_order(&rows);
    let smallest = smallest_resolvable_delta(reference, mean, &z, spec.sigma0, spec.count)?;
    Ok(PerturbationTable {
        rows,
        strict,
        in_order,
        resolution_exceeded: !in_order,
        smallest_resolvable_delta: smallest,
    })
}
