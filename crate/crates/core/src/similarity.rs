//! Cosine similarity measured by interfering two encoded images, the MSE
//! baseline, and the indexed-database protocol.
//!
//! Two images encoded at per-mode amplitude `a` are mixed mode by mode on
//! balanced splitters. The summed dark-port photon number is
//! `a^2 sum_k (1 - cos(theta_k - theta'_k))`, so
//!
//! ```text
//! (1/T) sum_k cos(theta_k - theta'_k) = 1 - sum_k n_k / |alpha|^2,   |alpha|^2 = T a^2
//! ```
//!
//! For a database, a single photon spread over `M` index modes picks which
//! entry gets written onto the pixel modes through cross-Kerr phase gates.
//! Detection collapses that choice to a uniformly random index.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::codec::{
    encode_image, interfere_with_auxiliary, EncodingParams, NormalizedImage, PhaseImage,
    ReadoutMode,
};
use crate::error::{Error, Result};
use crate::network::{AutoChopper, ChopStrategy};
use crate::optics::{CoherentField, ComplexAmplitude};
use crate::registry::Registry;
use crate::rng::{poisson_count, substream};

/// Below this many terms the pairwise sum falls back to a plain loop.
const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation; error grows as `O(log n)` rather than `O(n)`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `(1/T) sum_k cos(theta_k - theta'_k)`.
pub fn cosine_similarity(a: &PhaseImage, b: &PhaseImage) -> Result<f64> {
    a.same_shape(b)?;
    let terms: Vec<f64> = a
        .thetas()
        .iter()
        .zip(b.thetas())
        .map(|(x, y)| (x - y).cos())
        .collect();
    Ok(pairwise_sum(&terms) / a.len() as f64)
}

/// `(1/PQ) sum (a - b)^2` on normalized pixel values.
pub fn mse(a: &NormalizedImage, b: &NormalizedImage) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let terms: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    Ok(pairwise_sum(&terms) / a.len() as f64)
}

/// MSE of the normalized values `theta / (pi/2)` behind two phase images.
pub fn phase_mse(a: &PhaseImage, b: &PhaseImage) -> Result<f64> {
    a.same_shape(b)?;
    mse(&a.to_normalized(), &b.to_normalized())
}

/// Conditional phase `e^{i theta}` on `target` when the control photon is
/// present.
pub fn cross_kerr_apply(
    control_photon_present: bool,
    target: ComplexAmplitude,
    theta: f64,
) -> ComplexAmplitude {
    if control_photon_present {
        target * Complex64::from_polar(1.0, theta)
    } else {
        target
    }
}

/// One comparison between a reference and a candidate image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub reference: String,
    pub candidate: String,
    /// 1-based database index of the candidate, if it came from a database.
    pub index: Option<usize>,
    pub cosine: f64,
    pub mse: f64,
    /// Summed dark-port photon number behind `cosine`.
    pub measured_total_n: f64,
    pub runs_used: usize,
}

impl SimilarityReport {
    pub fn pair_id(&self) -> String {
        format!("{}-{}", self.reference, self.candidate)
    }
}

/// Sum of dark-port photon numbers after mixing `field` with `reference`
/// mode by mode.
fn dark_port_total(
    field: &CoherentField,
    reference: &CoherentField,
    mode: ReadoutMode,
) -> Result<f64> {
    if field.mode_count() != reference.mode_count() {
        return Err(Error::DimensionMismatch {
            expected: reference.mode_count(),
            found: field.mode_count(),
        });
    }
    let per_mode: Vec<f64> = match mode {
        ReadoutMode::Expectation => field
            .amplitudes()
            .iter()
            .zip(reference.amplitudes())
            .map(|(&x, &r)| interfere_with_auxiliary(x, r).1.norm_sqr())
            .collect(),
        ReadoutMode::Sampled { shots: 0, .. } => {
            return Err(Error::invalid("shots", "must be at least 1"))
        }
        ReadoutMode::Sampled { seed, shots } => field
            .amplitudes()
            .par_iter()
            .zip(reference.amplitudes())
            .enumerate()
            .map(|(k, (&x, &r))| {
                let mean = interfere_with_auxiliary(x, r).1.norm_sqr();
                let mut rng = substream(seed, k as u64);
                let total: u64 = (0..shots).map(|_| poisson_count(&mut rng, mean)).sum();
                total as f64 / shots as f64
            })
            .collect(),
    };
    Ok(pairwise_sum(&per_mode))
}

fn measured_report(
    field: &CoherentField,
    reference_field: &CoherentField,
    candidate: &PhaseImage,
    reference: &PhaseImage,
    params: &EncodingParams,
    mode: ReadoutMode,
) -> Result<SimilarityReport> {
    let total_n = dark_port_total(field, reference_field, mode)?;
    let source_intensity = reference.len() as f64 * params.mode_intensity();
    Ok(SimilarityReport {
        reference: "R".into(),
        candidate: "C".into(),
        index: None,
        cosine: 1.0 - total_n / source_intensity,
        mse: phase_mse(reference, candidate)?,
        measured_total_n: total_n,
        runs_used: 1,
    })
}

/// Encodes both images, interferes them and reads the similarity off the dark
/// ports.
pub fn cosine_similarity_measured(
    a: &PhaseImage,
    b: &PhaseImage,
    params: &EncodingParams,
    mode: ReadoutMode,
) -> Result<SimilarityReport> {
    a.same_shape(b)?;
    let fa = encode_image(a, params)?;
    let fb = encode_image(b, params)?;
    let mut report = measured_report(&fb, &fa, b, a, params, mode)?;
    report.reference = "A".into();
    report.candidate = "B".into();
    Ok(report)
}

/// Spreadsheet-style labels: `A..Z`, `AA..AZ`, ...
pub fn default_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        let rem = (n - 1) % 26;
        out.push(b'A' + rem as u8);
        n = (n - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Ordered collection of equally sized phase images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDatabase {
    entries: Vec<PhaseImage>,
    labels: Vec<String>,
}

impl ImageDatabase {
    /// Entries are labelled `A`, `B`, ... in order.
    pub fn new(entries: Vec<PhaseImage>) -> Result<Self> {
        let labels = (0..entries.len()).map(default_label).collect();
        Self::with_labels(entries, labels)
    }

    pub fn with_labels(entries: Vec<PhaseImage>, labels: Vec<String>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::invalid("entries", "a database needs at least one image"))?;
        for e in &entries[1..] {
            first.same_shape(e)?;
        }
        if labels.len() != entries.len() {
            return Err(Error::DimensionMismatch {
                expected: entries.len(),
                found: labels.len(),
            });
        }
        Ok(ImageDatabase { entries, labels })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PhaseImage] {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Entry by 1-based index.
    pub fn get(&self, index: usize) -> Option<&PhaseImage> {
        index.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    fn check_reference(&self, reference: &PhaseImage) -> Result<()> {
        self.entries[0].same_shape(reference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatabaseRunOutcome {
    /// 1-based index of the detector that clicked.
    pub detected_index: usize,
    pub report: SimilarityReport,
    pub seed: u64,
}

/// Pixel modes after the Kerr gates of every index mode have acted; only the
/// gates of index `detected` (1-based) see a control photon.
fn kerr_encoded_field(
    db: &ImageDatabase,
    detected: usize,
    params: &EncodingParams,
) -> Result<CoherentField> {
    let t = db.entries[0].len();
    let source = Complex64::new(params.per_mode_amplitude * (t as f64).sqrt(), 0.0);
    let chopped = AutoChopper.chop(source, t)?;
    let mut amps = chopped.into_amplitudes();
    for (m, image) in db.entries.iter().enumerate() {
        let present = m + 1 == detected;
        for (amp, &theta) in amps.iter_mut().zip(image.thetas()) {
            *amp = cross_kerr_apply(present, *amp, theta);
        }
    }
    CoherentField::new(amps)
}

/// One run of the database protocol: detect the index photon, Kerr-encode
/// that entry, encode the reference with phase shifters, and compare.
pub fn database_single_run(
    db: &ImageDatabase,
    reference: &PhaseImage,
    params: &EncodingParams,
    seed: u64,
) -> Result<DatabaseRunOutcome> {
    db.check_reference(reference)?;
    let detected_index = substream(seed, 0).random_range(1..=db.len());
    let field = kerr_encoded_field(db, detected_index, params)?;
    let reference_field = encode_image(reference, params)?;
    let candidate = &db.entries[detected_index - 1];
    let mut report = measured_report(
        &field,
        &reference_field,
        candidate,
        reference,
        params,
        ReadoutMode::Expectation,
    )?;
    report.candidate = db.labels[detected_index - 1].clone();
    report.index = Some(detected_index);
    Ok(DatabaseRunOutcome {
        detected_index,
        report,
        seed,
    })
}

/// Result of ranking a database against a reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    /// Descending cosine; ties by ascending database index.
    pub reports: Vec<SimilarityReport>,
    pub database_size: usize,
    pub runs_used: usize,
}

impl Ranking {
    /// Every database entry has a report.
    pub fn is_complete(&self) -> bool {
        self.reports.len() == self.database_size
    }

    /// 1-based database indices in ranked order.
    pub fn order(&self) -> Vec<usize> {
        self.reports.iter().filter_map(|r| r.index).collect()
    }

    fn sorted(mut reports: Vec<SimilarityReport>, database_size: usize, runs_used: usize) -> Self {
        reports.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then(a.index.cmp(&b.index)));
        Ranking {
            reports,
            database_size,
            runs_used,
        }
    }
}

/// A way of collecting similarity values over a whole database.
pub trait RankStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn rank(
        &self,
        db: &ImageDatabase,
        reference: &PhaseImage,
        params: &EncodingParams,
    ) -> Result<Ranking>;
}

/// Every entry compared directly at expectation level.
pub struct Exhaustive;

impl RankStrategy for Exhaustive {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn rank(
        &self,
        db: &ImageDatabase,
        reference: &PhaseImage,
        params: &EncodingParams,
    ) -> Result<Ranking> {
        db.check_reference(reference)?;
        let reference_field = encode_image(reference, params)?;
        let reports = db
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, image)| {
                let field = encode_image(image, params)?;
                let mut r = measured_report(
                    &field,
                    &reference_field,
                    image,
                    reference,
                    params,
                    ReadoutMode::Expectation,
                )?;
                r.candidate = db.labels[i].clone();
                r.index = Some(i + 1);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ranking::sorted(reports, db.len(), db.len()))
    }
}

/// Repeated single runs until every index has been detected or `max_runs` is
/// spent. Run `r` uses the seed drawn from stream `r` of `seed`.
pub struct Stochastic {
    pub max_runs: usize,
    pub seed: u64,
}

impl Stochastic {
    /// Coupon-collector budget `factor * M ln M` (at least `M`).
    pub fn budget(database_size: usize, factor: f64) -> usize {
        let m = database_size as f64;
        ((factor * m * m.ln()).ceil() as usize).max(database_size)
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        substream(self.seed, run as u64).random()
    }
}

impl RankStrategy for Stochastic {
    fn name(&self) -> &'static str {
        "stochastic"
    }

    fn rank(
        &self,
        db: &ImageDatabase,
        reference: &PhaseImage,
        params: &EncodingParams,
    ) -> Result<Ranking> {
        db.check_reference(reference)?;
        let mut seen: Vec<Option<SimilarityReport>> = vec![None; db.len()];
        let mut observed = 0;
        let mut runs = 0;
        while runs < self.max_runs && observed < db.len() {
            let outcome = database_single_run(db, reference, params, self.run_seed(runs))?;
            runs += 1;
            let slot = &mut seen[outcome.detected_index - 1];
            if slot.is_none() {
                observed += 1;
                *slot = Some(outcome.report);
            }
        }
        if observed < db.len() {
            log::warn!(
                "stochastic ranking saw {observed} of {} entries in {runs} runs",
                db.len()
            );
        }
        let reports = seen
            .into_iter()
            .flatten()
            .map(|mut r| {
                r.runs_used = runs;
                r
            })
            .collect();
        Ok(Ranking::sorted(reports, db.len(), runs))
    }
}

/// Options for building a ranking strategy by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankOptions {
    /// `None` means the `50 M ln M` coupon-collector budget.
    pub max_runs: Option<usize>,
    pub seed: u64,
    pub database_size: usize,
}

pub type RankFactory = dyn Fn(&RankOptions) -> Box<dyn RankStrategy> + Send + Sync;

/// `exhaustive` and `stochastic`.
pub fn rank_registry() -> Registry<RankFactory> {
    let mut reg: Registry<RankFactory> = Registry::new("ranking strategy");
    reg.register(
        "exhaustive",
        Box::new(|_: &RankOptions| Box::new(Exhaustive) as Box<dyn RankStrategy>),
    );
    reg.register(
        "stochastic",
        Box::new(|o: &RankOptions| {
            Box::new(Stochastic {
                max_runs: o
                    .max_runs
                    .unwrap_or_else(|| Stochastic::budget(o.database_size, 50.0)),
                seed: o.seed,
            }) as Box<dyn RankStrategy>
        }),
    );
    reg
}

pub fn rank_database(
    db: &ImageDatabase,
    reference: &PhaseImage,
    params: &EncodingParams,
    strategy: &dyn RankStrategy,
) -> Result<Ranking> {
    strategy.rank(db, reference, params)
}
