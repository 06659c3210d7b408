use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qimage::codec::{encode_with, optimal_amplitude, retrieve_image, EncodingParams, ReadoutMode};
use qimage::experiments::{
    iqa_table, perturbation_ranking, sensitivity_sweep, sweep_is_decreasing, ExperimentConfig,
    NoiseSpec, PerturbationSpec, SweepSpec,
};
use qimage::network::{chop_registry, DEFAULT_CHOPPER};
use qimage::pgm::{self, PgmFormat};
use qimage::report::{fmt_sig, iqa_csv, perturbation_csv, ranking_csv, sweep_csv};
use qimage::similarity::{
    cosine_similarity_measured, rank_database, rank_registry, ImageDatabase, RankOptions,
};
use qimage::{CoherentField, Error, GrayImage, Result};

#[derive(Parser)]
#[command(
    name = "qimage",
    version,
    about = "Coherent-state image encoding and cosine-similarity image comparison"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a PGM image into a multimode coherent field (JSON)
    Encode(EncodeArgs),
    /// Read an encoded field back into a PGM image
    Retrieve(RetrieveArgs),
    /// Cosine similarity and MSE between two images
    Similarity(SimilarityArgs),
    /// Rank database images by similarity to a reference
    Rank(RankArgs),
    /// Cosine/MSE table over a layered-noise database
    Iqa(ExperimentArgs),
    /// Seed-averaged cosine over a sigma grid
    Sweep(SweepArgs),
    /// Ranking of images at finely separated noise levels
    Perturb(PerturbArgs),
    /// Per-mode amplitude at which adjacent labels overlap by a target
    Amplitude(AmplitudeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Expectation,
    Sampled,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct EncodingArgs {
    /// Bits per pixel (defaults to the image's bit depth, or 8)
    #[arg(long)]
    bits: Option<u32>,
    /// Adjacent-label overlap used to pick the amplitude
    #[arg(long, default_value_t = 0.1)]
    overlap: f64,
    /// Per-mode amplitude a; overrides --overlap
    #[arg(long)]
    amplitude: Option<f64>,
}

impl EncodingArgs {
    fn params(&self, image_bits: Option<u32>) -> Result<EncodingParams> {
        let bits = self.bits.or(image_bits).unwrap_or(8);
        let mut p = EncodingParams::optimal(bits, self.overlap)?;
        if let Some(a) = self.amplitude {
            p.per_mode_amplitude = a;
        }
        p.validated()
    }
}

#[derive(Args)]
struct ReadoutArgs {
    #[arg(long, value_enum, default_value_t = Mode::Expectation)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Poisson shots per mode in sampled mode
    #[arg(long, default_value_t = 1)]
    shots: u32,
}

impl ReadoutArgs {
    fn readout(&self) -> ReadoutMode {
        match self.mode {
            Mode::Expectation => ReadoutMode::Expectation,
            Mode::Sampled => ReadoutMode::Sampled {
                seed: self.seed,
                shots: self.shots,
            },
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    input: PathBuf,
    #[command(flatten)]
    encoding: EncodingArgs,
    /// Chopping network
    #[arg(long, default_value = DEFAULT_CHOPPER)]
    network: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    input: PathBuf,
    #[command(flatten)]
    readout: ReadoutArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write per-mode measurement records (JSON)
    #[arg(long)]
    records: Option<PathBuf>,
    /// Write ASCII (P2) instead of binary (P5)
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct SimilarityArgs {
    a: PathBuf,
    b: PathBuf,
    #[command(flatten)]
    encoding: EncodingArgs,
    #[command(flatten)]
    readout: ReadoutArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    reference: PathBuf,
    #[arg(required = true)]
    database: Vec<PathBuf>,
    #[command(flatten)]
    encoding: EncodingArgs,
    #[arg(long, default_value = "exhaustive")]
    strategy: String,
    /// Run budget for the stochastic strategy (default 50 M ln M)
    #[arg(long)]
    max_runs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reference PGM (defaults to the bundled 64x64 image)
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long, value_enum, default_value_t = Mode::Expectation)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    shots: u32,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Noise draws averaged per sigma
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args)]
struct PerturbArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct AmplitudeArgs {
    #[arg(long)]
    bits: u32,
    #[arg(long, default_value_t = 0.1)]
    overlap: f64,
}

/// On-disk form of an encoded image.
#[derive(Serialize, Deserialize)]
struct EncodedImage {
    width: usize,
    height: usize,
    network: String,
    params: EncodingParams,
    field: CoherentField,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn encode(args: EncodeArgs) -> Result<()> {
    let img = pgm::read(&args.input)?;
    let params = args.encoding.params(Some(img.bits()))?;
    let registry = chop_registry();
    let chopper = registry.get(&args.network)?;
    let field = encode_with(&img, &params, chopper)?;
    let encoded = EncodedImage {
        width: img.width(),
        height: img.height(),
        network: args.network,
        params,
        field,
    };
    emit(args.out.as_deref(), &to_json(&encoded)?)
}

fn retrieve(args: RetrieveArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).map_err(|e| Error::Io {
        path: args.input.clone(),
        source: e,
    })?;
    let encoded: EncodedImage = serde_json::from_str(&text)?;
    let params = encoded.params.validated()?;
    let (img, records) = retrieve_image(
        &encoded.field,
        encoded.width,
        encoded.height,
        &params,
        args.readout.readout(),
    )?;
    let format = if args.ascii {
        PgmFormat::Ascii
    } else {
        PgmFormat::Binary
    };
    pgm::write(&args.out, &img, format)?;
    if let Some(path) = &args.records {
        emit(Some(path), &to_json(&records)?)?;
    }
    Ok(())
}

fn similarity(args: SimilarityArgs) -> Result<()> {
    let a = pgm::read(&args.a)?;
    let b = pgm::read(&args.b)?;
    let params = args.encoding.params(Some(a.bits().max(b.bits())))?;
    let (pa, pb) = (a.to_phase_image()?, b.to_phase_image()?);
    let report = cosine_similarity_measured(&pa, &pb, &params, args.readout.readout())?;
    let text = match args.format {
        Format::Json => to_json(&report)?,
        Format::Csv => format!(
            "pair,cosine,mse\n{},{},{}\n",
            report.pair_id(),
            fmt_sig(report.cosine),
            fmt_sig(report.mse)
        ),
    };
    emit(args.out.as_deref(), &text)
}

fn rank(args: RankArgs) -> Result<()> {
    let registry = rank_registry();
    let factory = registry.get(&args.strategy)?;
    let reference = pgm::read(&args.reference)?;
    let images = args
        .database
        .iter()
        .map(pgm::read)
        .collect::<Result<Vec<_>>>()?;
    let bits = images
        .iter()
        .map(GrayImage::bits)
        .chain([reference.bits()])
        .max();
    let params = args.encoding.params(bits)?;
    let labels = args
        .database
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    let db = ImageDatabase::with_labels(
        images
            .iter()
            .map(GrayImage::to_phase_image)
            .collect::<Result<_>>()?,
        labels,
    )?;
    let strategy = factory(&RankOptions {
        max_runs: args.max_runs,
        seed: args.seed,
        database_size: db.len(),
    });
    let ranking = rank_database(
        &db,
        &reference.to_phase_image()?,
        &params,
        strategy.as_ref(),
    )?;
    if !ranking.is_complete() {
        log::warn!(
            "ranking covers {} of {} images after {} runs",
            ranking.reports.len(),
            db.len(),
            ranking.runs_used
        );
    }
    let text = match args.format {
        Format::Json => to_json(&ranking)?,
        Format::Csv => ranking_csv(&ranking),
    };
    emit(args.out.as_deref(), &text)
}

const DEFAULT_SIGMA: f64 = 0.1;
const DEFAULT_LAYERS: usize = 10;

impl ExperimentArgs {
    /// Config file (if any) with flags applied on top.
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig {
                reference_path: None,
                output_path: None,
                encoding: EncodingParams::optimal(8, 0.1)?,
                noise: NoiseSpec {
                    mean: 0.0,
                    sigma: DEFAULT_SIGMA,
                    layers: DEFAULT_LAYERS,
                    seed: 0,
                },
                sweep: None,
                perturbation: None,
            },
        };
        if let Some(p) = &self.reference {
            cfg.reference_path = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.output_path = Some(p.clone());
        }
        let n = &mut cfg.noise;
        n.sigma = self.sigma.unwrap_or(n.sigma);
        n.mean = self.mean.unwrap_or(n.mean);
        n.layers = self.layers.unwrap_or(n.layers);
        n.seed = self.seed.unwrap_or(n.seed);
        let e = &mut cfg.encoding;
        if self.bits.is_some() || self.overlap.is_some() {
            let bits = self.bits.unwrap_or(e.bits_per_pixel);
            let overlap = self.overlap.unwrap_or(e.overlap_target);
            *e = EncodingParams::optimal(bits, overlap)?;
        }
        if let Some(a) = self.amplitude {
            e.per_mode_amplitude = a;
        }
        cfg.validated()
    }

    fn readout(&self, seed: u64) -> ReadoutMode {
        match self.mode {
            Mode::Expectation => ReadoutMode::Expectation,
            Mode::Sampled => ReadoutMode::Sampled {
                seed,
                shots: self.shots,
            },
        }
    }
}

fn iqa(args: ExperimentArgs) -> Result<()> {
    let cfg = args.config()?;
    let reference = cfg.load_reference()?;
    let table = iqa_table(
        &reference,
        &cfg.noise,
        &cfg.encoding,
        args.readout(cfg.noise.seed),
    )?;
    if !(table.cosine_decreasing && table.mse_increasing) {
        log::warn!("table is not monotone for this seed");
    }
    let text = match args.format {
        Format::Json => to_json(&table)?,
        Format::Csv => iqa_csv(&table),
    };
    emit(cfg.output_path.as_deref(), &text)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let base = cfg.sweep.unwrap_or(SweepSpec {
        sigma_min: 0.01,
        sigma_max: 1.0,
        steps: 20,
        seeds: 20,
    });
    let spec = SweepSpec {
        sigma_min: args.sigma_min.unwrap_or(base.sigma_min),
        sigma_max: args.sigma_max.unwrap_or(base.sigma_max),
        steps: args.steps.unwrap_or(base.steps),
        seeds: args.seeds.unwrap_or(base.seeds),
    };
    let reference = cfg.load_reference()?;
    let points = sensitivity_sweep(&reference, &spec, cfg.noise.mean, cfg.noise.seed)?;
    if !sweep_is_decreasing(&points) {
        log::warn!("seed-averaged cosine is not monotone over the grid");
    }
    let text = match args.common.format {
        Format::Json => to_json(&points)?,
        Format::Csv => sweep_csv(&points),
    };
    emit(cfg.output_path.as_deref(), &text)
}

fn perturb(args: PerturbArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let base = cfg.perturbation.unwrap_or(PerturbationSpec {
        sigma0: 0.2,
        delta_sigma: 1e-14,
        count: 10,
    });
    let spec = PerturbationSpec {
        sigma0: args.sigma0.unwrap_or(base.sigma0),
        delta_sigma: args.delta.unwrap_or(base.delta_sigma),
        count: args.count.unwrap_or(base.count),
    };
    let reference = cfg.load_reference()?;
    let table = perturbation_ranking(&reference, &spec, cfg.noise.mean, cfg.noise.seed)?;
    let smallest = table
        .smallest_resolvable_delta
        .map(fmt_sig)
        .unwrap_or_else(|| "none".into());
    if table.resolution_exceeded {
        eprintln!("resolution exceeded: delta {} does not give a strict ranking; smallest resolvable delta {smallest}", spec.delta_sigma);
    } else {
        eprintln!("ranking follows sigma order; smallest resolvable delta {smallest}");
    }
    let text = match args.common.format {
        Format::Json => to_json(&table)?,
        Format::Csv => perturbation_csv(&table),
    };
    emit(cfg.output_path.as_deref(), &text)
}

fn amplitude(args: AmplitudeArgs) -> Result<()> {
    let a = optimal_amplitude(args.bits, args.overlap)?;
    emit(
        None,
        &format!(
            "bits,overlap,amplitude,amplitude_squared\n{},{},{},{}\n",
            args.bits,
            fmt_sig(args.overlap),
            fmt_sig(a),
            fmt_sig(a * a)
        ),
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Similarity(a) => similarity(a),
        Command::Rank(a) => rank(a),
        Command::Iqa(a) => iqa(a),
        Command::Sweep(a) => sweep(a),
        Command::Perturb(a) => perturb(a),
        Command::Amplitude(a) => amplitude(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!(
                "error kind={} message={}",
                e.kind(),
                serde_json::to_string(&msg).unwrap_or(msg)
            );
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
