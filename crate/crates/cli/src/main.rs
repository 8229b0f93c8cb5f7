use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ca_deconv::aperture::{autocorrelation_support, generate_ca};
use ca_deconv::experiment::{
    default_transmittances, run_reconstruct, run_simulate, run_sweep, ExperimentConfig, NoiseConfig,
    NoiseReference, ObjectSource, SimulationManifest, MANIFEST,
};
use ca_deconv::io::{export_png, read_array, read_real, write_complex, write_real, ArrayData, ExportOptions};
use ca_deconv::metrics::psnr;
use ca_deconv::pie::{ReconConfig, TransferSource};
use ca_deconv::preprocess::preprocess;
use ca_deconv::zernike::{phase_map, pupil_from_phase, sample_coefficients, ZernikeSpec};
use ca_deconv::{Error, Grid, Result};

/// Single-shot blind deconvolution with a coded pupil aperture.
///
/// Errors are reported on stderr as `error[<category>]: <message>` and the
/// process exits with a category-specific nonzero code.
#[derive(Parser)]
#[command(name = "ca-deconv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a capture and write every intermediate array plus a manifest.
    Simulate(SceneArgs),
    /// Recover object and pupil from a simulated (or converted) capture.
    Reconstruct(ReconstructArgs),
    /// Simulate and reconstruct at several aperture transmittances.
    Sweep(SweepArgs),
    /// Write a Zernike phase map and the matching pupil.
    Zernike(ZernikeArgs),
    /// Write a random coded aperture and its autocorrelation support.
    Ca(CaArgs),
    /// Registered, rescaled PSNR between two real arrays.
    Metrics(MetricsArgs),
    /// Block-mean downsample and centre-crop a raw frame.
    Preprocess(PreprocessArgs),
    /// Export an array file as a 16-bit PNG.
    Export(ExportArgs),
}

#[derive(Args)]
struct SceneArgs {
    /// Experiment configuration (JSON). Built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed: object s, aberration s+1, aperture s+2, noise s+3, solver s+4.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid side in pixels. Unless --sources is given, the point-source
    /// count is scaled with the grid area.
    #[arg(long)]
    size: Option<usize>,
    /// Number of point sources in the generated object.
    #[arg(long)]
    sources: Option<usize>,
    /// Number of random Zernike terms.
    #[arg(long)]
    order: Option<usize>,
    /// Fraction of open aperture pixels, in (0, 1].
    #[arg(long)]
    transmittance: Option<f64>,
    #[arg(long, conflicts_with = "noiseless")]
    snr_db: Option<f64>,
    /// Skip the additive noise.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, value_enum)]
    noise_reference: Option<NoiseRefArg>,
    #[command(flatten)]
    recon: ReconArgs,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct ReconArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    alpha_f: Option<f64>,
    #[arg(long)]
    alpha_hi: Option<f64>,
    #[arg(long)]
    alpha_p: Option<f64>,
    /// Stop when the loss changes by less than this fraction over 1000 iterations.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Log the loss every N iterations.
    #[arg(long)]
    log_stride: Option<usize>,
    /// Let the object estimate go negative.
    #[arg(long)]
    no_nonnegativity: bool,
    #[arg(long, value_enum)]
    transfer_source: Option<TransferArg>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory holding capture.arr and aperture.arr (object.arr enables PSNR).
    #[arg(long)]
    input: PathBuf,
    /// Experiment configuration whose `recon` section is used. Defaults to
    /// the manifest in the input directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: <input>/recon].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the random initial pupil.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    recon: ReconArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scene: SceneArgs,
    /// Comma-separated transmittances [default: 0.1,0.2,...,1.0].
    #[arg(long, value_delimiter = ',')]
    transmittances: Vec<f64>,
    /// Concurrent runs [default: available cores].
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ZernikeArgs {
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Number of Noll terms drawn uniformly from [-1, 1].
    #[arg(long, required_unless_present = "coefficients")]
    order: Option<usize>,
    /// Explicit comma-separated Noll coefficients.
    #[arg(long, value_delimiter = ',', conflicts_with = "order")]
    coefficients: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pupil radius in frequency samples [default: size/2].
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CaArgs {
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long)]
    transmittance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long)]
    no_register: bool,
    #[arg(long)]
    no_rescale: bool,
    /// Also write the report to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    factor: usize,
    #[arg(long, default_value_t = 200)]
    crop: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Treat real input as a phase map. Complex input always exports its phase.
    #[arg(long)]
    phase: bool,
    /// Move the zero-frequency / zero-shift sample to the image centre.
    #[arg(long)]
    centered: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseRefArg {
    Capture,
    OpenAperture,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransferArg {
    Pupil,
    Update,
}

impl ReconArgs {
    fn apply(&self, cfg: &mut ReconConfig) {
        if let Some(n) = self.iterations {
            cfg.max_iterations = n;
        }
        if let Some(a) = self.alpha_f {
            cfg.alpha_f = a;
        }
        if let Some(a) = self.alpha_hi {
            cfg.alpha_hi = a;
        }
        if let Some(a) = self.alpha_p {
            cfg.alpha_p = a;
        }
        if let Some(t) = self.tolerance {
            cfg.convergence_tolerance = Some(t);
        }
        if let Some(s) = self.log_stride {
            cfg.loss_log_stride = s;
        }
        if self.no_nonnegativity {
            cfg.object_nonnegativity = false;
        }
        if let Some(t) = self.transfer_source {
            cfg.transfer_source = match t {
                TransferArg::Pupil => TransferSource::Pupil,
                TransferArg::Update => TransferSource::Update,
            };
        }
    }
}

impl SceneArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_master_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(size) = self.size {
            if let ObjectSource::Points(p) = &mut cfg.object {
                *p = p.rescaled(cfg.size, size);
            }
            cfg.size = size;
        }
        if let Some(n) = self.sources {
            match &mut cfg.object {
                ObjectSource::Points(p) => p.count = n,
                ObjectSource::File { .. } => return Err(Error::Config("--sources needs a point-source object".into())),
            }
        }
        if let Some(order) = self.order {
            cfg.zernike.order = Some(order);
            cfg.zernike.coefficients = None;
        }
        if let Some(t) = self.transmittance {
            cfg.aperture.transmittance = t;
        }
        if self.noiseless {
            cfg.noise = None;
        }
        if let Some(snr_db) = self.snr_db {
            match &mut cfg.noise {
                Some(n) => n.snr_db = snr_db,
                None => {
                    cfg.noise = Some(NoiseConfig {
                        snr_db,
                        seed: cfg.aperture.seed.wrapping_add(1),
                        reference: NoiseReference::default(),
                    })
                }
            }
        }
        if let (Some(r), Some(n)) = (self.noise_reference, &mut cfg.noise) {
            n.reference = match r {
                NoiseRefArg::Capture => NoiseReference::Capture,
                NoiseRefArg::OpenAperture => NoiseReference::OpenAperture,
            };
        }
        self.recon.apply(&mut cfg.recon);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn simulate(args: &SceneArgs) -> Result<()> {
    let cfg = args.resolve()?;
    if args.print_config {
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    let (sim, manifest) = run_simulate(&cfg)?;
    print_json(&json!({
        "output": cfg.output,
        "config_digest": manifest.config_digest,
        "open_count": manifest.open_count,
        "snr_db": sim.record.noise.map(|n| n.snr_db),
        "capture_sum": sim.record.capture.sum(),
    }));
    Ok(())
}

fn reconstruct(args: &ReconstructArgs) -> Result<()> {
    let mut recon = match &args.config {
        Some(path) => ExperimentConfig::load(path)?.recon,
        None => {
            let manifest = args.input.join(MANIFEST);
            if manifest.exists() {
                let m: SimulationManifest = serde_json::from_str(&fs::read_to_string(&manifest)?)
                    .map_err(|e| Error::Config(format!("unreadable manifest: {e}")))?;
                m.config.recon
            } else {
                ReconConfig::default()
            }
        }
    };
    if let Some(seed) = args.seed {
        recon.init_seed = seed;
    }
    args.recon.apply(&mut recon);
    let out = args.out.clone().unwrap_or_else(|| args.input.join("recon"));
    let rec = run_reconstruct(&args.input, &recon, &out)?;
    let r = &rec.result;
    print_json(&json!({
        "output": out,
        "iterations_run": r.iterations_run,
        "terminated_by": r.terminated_by,
        "initial_loss": r.initial_loss(),
        "final_loss": r.final_loss(),
        "psnr_db": rec.quality.as_ref().map(|q| q.psnr_db),
    }));
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.scene.resolve()?;
    if args.scene.print_config {
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    let ts = if args.transmittances.is_empty() {
        default_transmittances()
    } else {
        args.transmittances.clone()
    };
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = run_sweep(&cfg, &ts, workers)?;
    println!("transmittance,final_loss,psnr_db");
    for r in rows {
        println!("{},{:e},{:.3}", r.transmittance, r.final_loss, r.psnr_db);
    }
    Ok(())
}

fn zernike(args: &ZernikeArgs) -> Result<()> {
    let grid = Grid::square(args.size)?;
    let coefficients = match args.order {
        Some(n) => sample_coefficients(n, args.seed)?,
        None => args.coefficients.clone(),
    };
    let radius = args.radius.unwrap_or_else(|| ZernikeSpec::default_radius(grid));
    let spec = ZernikeSpec::new(coefficients, radius)?;
    let map = phase_map(&spec, grid)?;
    fs::create_dir_all(&args.out)?;
    write_real(args.out.join("phase.arr"), &map.phase, "phase")?;
    write_complex(args.out.join("pupil.arr"), &pupil_from_phase(&map.phase), "pupil")?;
    export_png(&map.phase, args.out.join("phase.png"), ExportOptions { phase: true, centered: true })?;
    print_json(&json!({
        "convention": ca_deconv::zernike::CONVENTION,
        "coefficients": spec.coefficients,
        "pupil_radius": spec.pupil_radius,
    }));
    Ok(())
}

fn ca(args: &CaArgs) -> Result<()> {
    let grid = Grid::square(args.size)?;
    let aperture = generate_ca(grid, args.transmittance, args.seed)?;
    let support = autocorrelation_support(&aperture);
    fs::create_dir_all(&args.out)?;
    let centered = ExportOptions { phase: false, centered: true };
    write_real(args.out.join("aperture.arr"), &aperture.to_image(), "aperture")?;
    write_real(args.out.join("autocorrelation.arr"), &support, "autocorrelation_support")?;
    export_png(&aperture.to_image(), args.out.join("aperture.png"), centered)?;
    export_png(&support, args.out.join("autocorrelation.png"), centered)?;
    print_json(&json!({
        "open_count": aperture.open_count(),
        "transmittance": aperture.measured_transmittance(),
        "seed": args.seed,
    }));
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let reference = read_real(&args.reference)?;
    let candidate = read_real(&args.candidate)?;
    let report = psnr(&reference, &candidate, !args.no_register, !args.no_rescale)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        fs::write(out, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn preprocess_cmd(args: &PreprocessArgs) -> Result<()> {
    let raw = read_real(&args.input)?;
    let out = preprocess(&raw, args.factor, args.crop)?;
    write_real(&args.out, &out, "preprocessed")?;
    println!("{} -> {}", raw.grid(), out.grid());
    Ok(())
}

fn export(args: &ExportArgs) -> Result<()> {
    let (_, data) = read_array(&args.input)?;
    let (image, phase) = match data {
        ArrayData::Real(x) => (x, args.phase),
        ArrayData::Complex(x) => (x.phase(), true),
    };
    let sidecar = export_png(&image, &args.out, ExportOptions { phase, centered: args.centered })?;
    println!("{}", serde_json::to_string(&sidecar)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Sweep(a) => sweep(a),
        Command::Zernike(a) => zernike(a),
        Command::Ca(a) => ca(a),
        Command::Metrics(a) => metrics(a),
        Command::Preprocess(a) => preprocess_cmd(a),
        Command::Export(a) => export(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.trim_start_matches("error: ").trim_end();
            eprintln!("error[usage]: {text}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
