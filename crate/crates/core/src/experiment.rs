//! Deterministic experiment runner: simulate a capture, reconstruct it, sweep
//! the aperture transmittance. Every random draw flows from a named seed in
//! [`ExperimentConfig`].

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aperture::{generate_ca, CodedAperture};
use crate::error::{ensure_same_grid, Error, Result};
use crate::field::{Grid, RealImage};
use crate::forward::{noise_sigma, simulate_capture, CaptureRecord, NoiseInfo, SNR_DEFINITION};
use crate::io::{export_png, read_real, write_complex, write_real, ExportOptions};
use crate::metrics::{psnr, QualityReport};
use crate::object::{generate_object, PointSources};
use crate::pie::{iterate, LossSample, ReconConfig, ReconResult, Termination};
use crate::zernike::{self, phase_map, pupil_from_phase, sample_coefficients, PhaseMap, ZernikeSpec};

pub const MANIFEST: &str = "manifest.json";
pub const OBJECT: &str = "object.arr";
pub const PHASE: &str = "phase.arr";
pub const PUPIL: &str = "pupil.arr";
pub const APERTURE: &str = "aperture.arr";
pub const PSF: &str = "psf.arr";
pub const CAPTURE_CLEAN: &str = "capture_clean.arr";
pub const CAPTURE: &str = "capture.arr";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Side of the square simulation grid, in pixels.
    pub size: usize,
    pub object: ObjectSource,
    pub zernike: ZernikeConfig,
    pub aperture: ApertureConfig,
    /// `None` simulates a noiseless capture.
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub recon: ReconConfig,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectSource {
    Points(PointSources),
    /// An f64 array file holding a nonnegative image of the grid size.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZernikeConfig {
    /// Number of Noll terms drawn uniformly from `[-1, 1]`.
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Explicit coefficients; take precedence over `order`/`seed`.
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    /// Disk radius in frequency samples; defaults to half the grid.
    #[serde(default)]
    pub pupil_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApertureConfig {
    pub transmittance: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub reference: NoiseReference,
}

/// What the SNR is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReference {
    /// The capture itself: every exposure gets the requested SNR.
    #[default]
    Capture,
    /// The same scene through a fully open aperture. The noise floor is then
    /// fixed, as for a sensor with a fixed exposure, and darker (less open)
    /// apertures see a lower SNR.
    OpenAperture,
}

impl Default for ExperimentConfig {
    /// 128x128 sparse point sources, 8 Zernike terms, 50 % aperture, 30 dB.
    fn default() -> Self {
        ExperimentConfig {
            size: 128,
            object: ObjectSource::Points(PointSources::default()),
            zernike: ZernikeConfig {
                order: Some(8),
                seed: 2,
                coefficients: None,
                pupil_radius: None,
            },
            aperture: ApertureConfig {
                transmittance: 0.5,
                seed: 3,
            },
            noise: Some(NoiseConfig {
                snr_db: 30.0,
                seed: 4,
                reference: NoiseReference::Capture,
            }),
            recon: ReconConfig {
                init_seed: 5,
                ..ReconConfig::default()
            },
            output: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ExperimentConfig::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Derives every seed from one value: object `s`, Zernike `s+1`, aperture
    /// `s+2`, noise `s+3`, solver initialization `s+4`.
    pub fn with_master_seed(mut self, seed: u64) -> Self {
        if let ObjectSource::Points(p) = &mut self.object {
            p.seed = seed;
        }
        self.zernike.seed = seed.wrapping_add(1);
        self.aperture.seed = seed.wrapping_add(2);
        if let Some(n) = &mut self.noise {
            n.seed = seed.wrapping_add(3);
        }
        self.recon.init_seed = seed.wrapping_add(4);
        self
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::square(self.size)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.recon.validate()?;
        if self.zernike.coefficients.is_none() && self.zernike.order.is_none() {
            return Err(Error::config("zernike needs either `order` or `coefficients`"));
        }
        if let (Some(c), Some(n)) = (&self.zernike.coefficients, self.zernike.order) {
            if c.len() != n {
                return Err(Error::config(format!("{} coefficients given for order {n}", c.len())));
            }
        }
        let t = self.aperture.transmittance;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::config(format!("transmittance must lie in (0, 1], got {t}")));
        }
        if let Some(n) = &self.noise {
            if !n.snr_db.is_finite() {
                return Err(Error::config("snr_db must be finite"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON form, leaving out the output directory so
    /// the same experiment written to two places shares a digest.
    pub fn digest(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?)))
    }

    pub fn zernike_spec(&self) -> Result<ZernikeSpec> {
        let grid = self.grid()?;
        let coefficients = match (&self.zernike.coefficients, self.zernike.order) {
            (Some(c), _) => c.clone(),
            (None, Some(n)) => sample_coefficients(n, self.zernike.seed)?,
            (None, None) => return Err(Error::config("zernike needs either `order` or `coefficients`")),
        };
        let radius = self.zernike.pupil_radius.unwrap_or_else(|| ZernikeSpec::default_radius(grid));
        ZernikeSpec::new(coefficients, radius)
    }

    pub fn build_object(&self) -> Result<RealImage> {
        let grid = self.grid()?;
        match &self.object {
            ObjectSource::Points(p) => generate_object(grid, p),
            ObjectSource::File { path } => {
                let img = read_real(path)?;
                ensure_same_grid(grid, img.grid())?;
                img.ensure_nonnegative("object")?;
                Ok(img)
            }
        }
    }
}

/// Everything `simulate` produced, in memory.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub object: RealImage,
    pub phase: PhaseMap,
    pub zernike: ZernikeSpec,
    pub record: CaptureRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub zernike_convention: String,
    pub zernike_coefficients: Vec<f64>,
    pub pupil_radius: f64,
    pub open_count: usize,
    pub snr_definition: String,
    pub noise: Option<NoiseInfo>,
    /// SHA-256 of every array file written.
    pub files: Vec<FileDigest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

/// Builds the scene and capture without touching the filesystem (apart from
/// reading a file-backed object).
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let object = cfg.build_object()?;
    let zernike = cfg.zernike_spec()?;
    let phase = phase_map(&zernike, grid)?;
    let pupil = pupil_from_phase(&phase.phase);
    let aperture = generate_ca(grid, cfg.aperture.transmittance, cfg.aperture.seed)?;
    let mut record = simulate_capture(&object, &pupil, &aperture)?;
    if let Some(noise) = &cfg.noise {
        record = match noise.reference {
            NoiseReference::Capture => record.with_noise(noise.snr_db, noise.seed)?,
            NoiseReference::OpenAperture => {
                let open = simulate_capture(&object, &pupil, &CodedAperture::open(grid))?;
                let sigma = noise_sigma(&open.clean, noise.snr_db)?;
                record.with_noise_sigma(sigma, noise.seed)?
            }
        };
    }
    Ok(Simulation {
        object,
        phase,
        zernike,
        record,
    })
}

fn file_digest(dir: &Path, name: &str) -> Result<FileDigest> {
    Ok(FileDigest {
        name: name.into(),
        sha256: hex::encode(Sha256::digest(fs::read(dir.join(name))?)),
    })
}

/// Simulates and writes arrays, PNG previews and `manifest.json` into
/// `cfg.output`.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<(Simulation, SimulationManifest)> {
    let sim = simulate(cfg)?;
    let dir = &cfg.output;
    fs::create_dir_all(dir)?;
    let rec = &sim.record;
    write_real(dir.join(OBJECT), &sim.object, "object")?;
    write_real(dir.join(PHASE), &sim.phase.phase, "phase")?;
    write_complex(dir.join(PUPIL), &rec.pupil, "pupil")?;
    write_real(dir.join(APERTURE), &rec.aperture.to_image(), "aperture")?;
    write_real(dir.join(PSF), &rec.psf, "psf")?;
    write_real(dir.join(CAPTURE_CLEAN), &rec.clean, "capture_clean")?;
    write_real(dir.join(CAPTURE), &rec.capture, "capture")?;

    let plain = ExportOptions::default();
    let centered = ExportOptions { phase: false, centered: true };
    export_png(&sim.object, dir.join("object.png"), plain)?;
    export_png(&sim.phase.phase, dir.join("phase.png"), ExportOptions { phase: true, centered: true })?;
    export_png(&rec.aperture.to_image(), dir.join("aperture.png"), centered)?;
    export_png(&rec.psf, dir.join("psf.png"), centered)?;
    export_png(&rec.capture, dir.join("capture.png"), plain)?;

    let files = [OBJECT, PHASE, PUPIL, APERTURE, PSF, CAPTURE_CLEAN, CAPTURE]
        .iter()
        .map(|name| file_digest(dir, name))
        .collect::<Result<Vec<_>>>()?;
    let manifest = SimulationManifest {
        config: cfg.clone(),
        config_digest: cfg.digest()?,
        zernike_convention: zernike::CONVENTION.into(),
        zernike_coefficients: sim.zernike.coefficients.clone(),
        pupil_radius: sim.zernike.pupil_radius,
        open_count: rec.aperture.open_count(),
        snr_definition: SNR_DEFINITION.into(),
        noise: rec.noise,
        files,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok((sim, manifest))
}

/// Summary written as `recon.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub config: ReconConfig,
    pub iterations_run: usize,
    pub terminated_by: Termination,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub quality: Option<QualityReport>,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub result: ReconResult,
    pub quality: Option<QualityReport>,
}

/// Reads `capture.arr` and `aperture.arr` from `input` (plus `object.arr` as
/// ground truth when present), reconstructs, and writes the estimates, the
/// loss trace and the quality report into `output`.
///
/// When `input` holds a manifest, the aperture file must match the digest
/// recorded at simulation time.
pub fn run_reconstruct(input: &Path, recon: &ReconConfig, output: &Path) -> Result<Reconstruction> {
    recon.validate()?;
    let capture = read_real(input.join(CAPTURE))?;
    let aperture_path = input.join(APERTURE);
    let aperture_img = read_real(&aperture_path)?;
    ensure_same_grid(capture.grid(), aperture_img.grid())?;

    let manifest_path = input.join(MANIFEST);
    let mut seed = None;
    if manifest_path.exists() {
        let manifest: SimulationManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .map_err(|e| Error::config(format!("unreadable manifest: {e}")))?;
        let actual = file_digest(input, APERTURE)?;
        match manifest.files.iter().find(|f| f.name == APERTURE) {
            Some(expected) if expected.sha256 != actual.sha256 => {
                return Err(Error::config("aperture file does not match the one used for the capture"));
            }
            _ => {}
        }
        seed = Some(manifest.config.aperture.seed);
    }
    let aperture = CodedAperture::from_image(&aperture_img, seed)?;

    let truth_path = input.join(OBJECT);
    let truth = if truth_path.exists() {
        Some(read_real(&truth_path)?)
    } else {
        None
    };

    let result = iterate(&capture, &aperture, recon)?;
    let quality = match &truth {
        Some(t) => Some(psnr(t, &result.object, true, true)?),
        None => None,
    };
    write_reconstruction(output, recon, &result, quality.as_ref())?;
    Ok(Reconstruction { result, quality })
}

fn write_reconstruction(
    dir: &Path,
    recon: &ReconConfig,
    result: &ReconResult,
    quality: Option<&QualityReport>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_real(dir.join("recon_object.arr"), &result.object, "recon_object")?;
    write_complex(dir.join("recon_pupil.arr"), &result.pupil, "recon_pupil")?;
    let phase = result.pupil.phase();
    write_real(dir.join("recon_phase.arr"), &phase, "recon_phase")?;
    write_real(dir.join("recon_psf.arr"), &result.psf, "recon_psf")?;
    write_loss_csv(dir.join("loss.csv"), &result.loss_trace)?;
    if let Some(q) = quality {
        fs::write(dir.join("quality.json"), serde_json::to_string_pretty(q)?)?;
    }
    let summary = ReconSummary {
        config: recon.clone(),
        iterations_run: result.iterations_run,
        terminated_by: result.terminated_by,
        initial_loss: result.initial_loss(),
        final_loss: result.final_loss(),
        quality: quality.cloned(),
    };
    fs::write(dir.join("recon.json"), serde_json::to_string_pretty(&summary)?)?;
    export_png(&result.object, dir.join("recon_object.png"), ExportOptions::default())?;
    export_png(&phase, dir.join("recon_phase.png"), ExportOptions { phase: true, centered: true })?;
    export_png(&result.psf, dir.join("recon_psf.png"), ExportOptions { phase: false, centered: true })?;
    Ok(())
}

/// `iteration,loss` with a header; losses use the shortest exact decimal form.
pub fn write_loss_csv(path: impl AsRef<Path>, trace: &[LossSample]) -> Result<()> {
    write_csv(path, trace)
}

fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::format(format!("{other:?}")),
    }
}

/// The ten transmittances 10 %, 20 %, ..., 100 %.
pub fn default_transmittances() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub transmittance: f64,
    pub final_loss: f64,
    pub psnr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub config: ExperimentConfig,
    pub config_digest: String,
    pub transmittances: Vec<f64>,
    pub runs: Vec<String>,
}

/// Subdirectory used for one sweep point, e.g. `t050` for 50 %.
pub fn sweep_run_dir(transmittance: f64) -> String {
    format!("t{:03}", (transmittance * 100.0).round() as u32)
}

/// One simulate + reconstruct run per transmittance, sharing the object,
/// aberration and every seed. Runs go to `<output>/tNNN/` and execute on up to
/// `workers` threads; the table is written to `<output>/sweep.csv`.
pub fn run_sweep(base: &ExperimentConfig, transmittances: &[f64], workers: usize) -> Result<Vec<SweepRow>> {
    if transmittances.is_empty() {
        return Err(Error::config("sweep needs at least one transmittance"));
    }
    base.validate()?;
    fs::create_dir_all(&base.output)?;
    let configs: Vec<ExperimentConfig> = transmittances
        .iter()
        .map(|&t| {
            let mut cfg = base.clone();
            cfg.aperture.transmittance = t;
            cfg.output = base.output.join(sweep_run_dir(t));
            cfg.validate().map(|_| cfg)
        })
        .collect::<Result<_>>()?;
    let manifest = SweepManifest {
        config: base.clone(),
        config_digest: base.digest()?,
        transmittances: transmittances.to_vec(),
        runs: transmittances.iter().map(|&t| sweep_run_dir(t)).collect(),
    };
    fs::write(base.output.join("sweep.json"), serde_json::to_string_pretty(&manifest)?)?;

    let workers = workers.clamp(1, configs.len());
    let mut results: Vec<Option<Result<SweepRow>>> = (0..configs.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let chunk = configs.len().div_ceil(workers);
        for (cfgs, slots) in configs.chunks(chunk).zip(results.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (cfg, slot) in cfgs.iter().zip(slots.iter_mut()) {
                    *slot = Some(sweep_point(cfg));
                }
            });
        }
    });
    let rows = results
        .into_iter()
        .map(|r| r.expect("every sweep point ran"))
        .collect::<Result<Vec<_>>>()?;

    write_csv(base.output.join("sweep.csv"), &rows)?;
    Ok(rows)
}

fn sweep_point(cfg: &ExperimentConfig) -> Result<SweepRow> {
    run_simulate(cfg)?;
    let rec = run_reconstruct(&cfg.output, &cfg.recon, &cfg.output)?;
    Ok(SweepRow {
        transmittance: cfg.aperture.transmittance,
        final_loss: rec.result.final_loss(),
        psnr_db: rec.quality.map_or(f64::NAN, |q| q.psnr_db),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            size: 32,
            object: ObjectSource::Points(PointSources { count: 4, ..PointSources::default() }),
            recon: ReconConfig {
                max_iterations: 20,
                loss_log_stride: 5,
                ..ReconConfig::default()
            },
            output: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips_losslessly() {
        let cfg = ExperimentConfig {
            zernike: ZernikeConfig {
                order: None,
                seed: 0,
                coefficients: Some(vec![0.1, -0.30000000000000004, 1.0 / 3.0]),
                pupil_radius: Some(31.5),
            },
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest().unwrap(), cfg.digest().unwrap());
        let moved = ExperimentConfig { output: "elsewhere".into(), ..cfg.clone() };
        assert_eq!(moved.digest().unwrap(), cfg.digest().unwrap());
        let other = ExperimentConfig { size: 64, ..cfg.clone() };
        assert_ne!(other.digest().unwrap(), cfg.digest().unwrap());
    }

    #[test]
    fn config_rejects_unknown_and_invalid_fields() {
        let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        v["bogus"] = 1.into();
        assert!(matches!(ExperimentConfig::from_json(&v.to_string()), Err(Error::Config(_))));

        let bad = ExperimentConfig {
            aperture: ApertureConfig { transmittance: 0.0, seed: 1 },
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            zernike: ZernikeConfig { order: Some(3), seed: 1, coefficients: Some(vec![1.0]), pupil_radius: None },
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn master_seed_fans_out() {
        let cfg = ExperimentConfig::default().with_master_seed(10);
        match &cfg.object {
            ObjectSource::Points(p) => assert_eq!(p.seed, 10),
            _ => unreachable!(),
        }
        assert_eq!(cfg.zernike.seed, 11);
        assert_eq!(cfg.aperture.seed, 12);
        assert_eq!(cfg.noise.as_ref().unwrap().seed, 13);
        assert_eq!(cfg.recon.init_seed, 14);
    }

    #[test]
    fn simulate_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let (sim, manifest) = run_simulate(&cfg).unwrap();
        for name in [OBJECT, PHASE, PUPIL, APERTURE, PSF, CAPTURE_CLEAN, CAPTURE, MANIFEST, "capture.png", "psf.png.json"] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        assert_eq!(read_real(dir.path().join(CAPTURE)).unwrap(), sim.record.capture);
        assert_eq!(manifest.zernike_convention, "noll");
        assert_eq!(manifest.snr_definition, "mean-power");
        assert_eq!(manifest.open_count, 512);
        assert_eq!(manifest.config_digest, cfg.digest().unwrap());
        assert_eq!(manifest.noise.unwrap().snr_db, 30.0);
    }

    #[test]
    fn open_aperture_noise_reference_fixes_the_noise_floor() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.noise.as_mut().unwrap().reference = NoiseReference::OpenAperture;
        let mut sigmas = Vec::new();
        let mut snrs = Vec::new();
        for t in [0.2, 0.8] {
            cfg.aperture.transmittance = t;
            let n = simulate(&cfg).unwrap().record.noise.unwrap();
            sigmas.push(n.sigma);
            snrs.push(n.snr_db);
        }
        assert_eq!(sigmas[0], sigmas[1]);
        assert!(snrs[0] < snrs[1]);
    }

    #[test]
    fn reconstruct_reads_simulation_output() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        run_simulate(&cfg).unwrap();
        let out = dir.path().join("recon");
        let rec = run_reconstruct(dir.path(), &cfg.recon, &out).unwrap();
        assert_eq!(rec.result.iterations_run, 20);
        assert!(rec.quality.is_some());
        let csv = fs::read_to_string(out.join("loss.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,loss"));
        assert_eq!(lines.count(), 5); // 0, 5, 10, 15 and the final 20
        for name in ["recon_object.arr", "recon_phase.arr", "recon_psf.arr", "recon_pupil.arr", "quality.json", "recon.json"] {
            assert!(out.join(name).exists(), "{name} missing");
        }
    }

    #[test]
    fn reconstruct_rejects_foreign_aperture() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        run_simulate(&cfg).unwrap();
        let other = generate_ca(cfg.grid().unwrap(), 0.5, 999).unwrap();
        write_real(dir.path().join(APERTURE), &other.to_image(), "aperture").unwrap();
        let err = run_reconstruct(dir.path(), &cfg.recon, &dir.path().join("r")).unwrap_err();
        assert_eq!(err.category(), "config");

        let wrong_size = generate_ca(Grid::square(16).unwrap(), 0.5, 1).unwrap();
        write_real(dir.path().join(APERTURE), &wrong_size.to_image(), "aperture").unwrap();
        let err = run_reconstruct(dir.path(), &cfg.recon, &dir.path().join("r")).unwrap_err();
        assert!(matches!(err, Error::GridMismatch { .. }));
    }

    #[test]
    fn missing_capture_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_reconstruct(dir.path(), &ReconConfig::default(), dir.path()).unwrap_err();
        assert_eq!(err.category(), "io");
    }

    #[test]
    fn sweep_table() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let ts = [0.3, 0.6];
        let rows = run_sweep(&cfg, &ts, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].transmittance, 0.6);
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(csv.starts_with("transmittance,final_loss,psnr_db\n"));
        assert!(dir.path().join("t030").join("loss.csv").exists());
        let manifest: SweepManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
        assert_eq!(manifest.runs, vec!["t030", "t060"]);
        assert!(run_sweep(&cfg, &[], 1).is_err());
    }

    #[test]
    fn default_sweep_lists_ten_ratios() {
        let ts = default_transmittances();
        assert_eq!(ts.len(), 10);
        assert_eq!(ts[0], 0.1);
        assert_eq!(ts[9], 1.0);
        assert_eq!(sweep_run_dir(ts[2]), "t030");
    }
}
