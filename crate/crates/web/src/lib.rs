//! Browser demo. Three operations are exposed to JavaScript:
//!
//! * [`aberration_preview`]: phase map and PSF for explicit Zernike coefficients,
//! * [`Scene`]: a simulated coded-aperture capture,
//! * [`Reconstruction`]: the solver, advanced a few iterations per frame.
//!
//! Pixel getters return RGBA bytes ready for `new ImageData(...)`.

use wasm_bindgen::prelude::*;

use ca_deconv::aperture::CodedAperture;
use ca_deconv::experiment::{simulate, ExperimentConfig, NoiseConfig, NoiseReference, ObjectSource, Simulation};
use ca_deconv::forward::incoherent_psf;
use ca_deconv::metrics::psnr;
use ca_deconv::pie::{init_state, ReconConfig, Solver};
use ca_deconv::zernike::{phase_map, pupil_from_phase, ZernikeSpec};
use ca_deconv::{Grid, RealImage};

pub mod render;

use render::{rgba, Scale};

fn js(e: ca_deconv::Error) -> JsError {
    JsError::new(&format!("{} ({})", e, e.category()))
}

/// RGBA phase map followed by the RGBA PSF (log scale, centred) of a fully
/// open pupil with the given Noll coefficients.
#[wasm_bindgen]
pub fn aberration_preview(size: usize, coefficients: Vec<f64>) -> Result<Vec<u8>, JsError> {
    preview(size, coefficients).map_err(js)
}

pub fn preview(size: usize, coefficients: Vec<f64>) -> ca_deconv::Result<Vec<u8>> {
    let grid = Grid::square(size)?;
    let spec = ZernikeSpec::new(coefficients, ZernikeSpec::default_radius(grid))?;
    let phase = phase_map(&spec, grid)?.phase;
    let psf = incoherent_psf(&pupil_from_phase(&phase), &CodedAperture::open(grid))?;
    let mut out = rgba(&phase, Scale::Phase, true);
    out.extend(rgba(&psf, Scale::Log, true));
    Ok(out)
}

#[wasm_bindgen]
pub struct Scene {
    sim: Simulation,
}

#[wasm_bindgen]
impl Scene {
    /// `snr_db` of `undefined` gives a noiseless capture. Noise is referenced
    /// to the fully open aperture, as with a fixed exposure.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, order: usize, seed: u32, transmittance: f64, snr_db: Option<f64>) -> Result<Scene, JsError> {
        Scene::build(size, order, seed.into(), transmittance, snr_db).map_err(js)
    }

    pub fn size(&self) -> usize {
        self.sim.object.grid().width()
    }

    pub fn open_count(&self) -> usize {
        self.sim.record.aperture.open_count()
    }

    /// Registered, rescaled PSNR of the raw capture against the object.
    pub fn capture_psnr(&self) -> f64 {
        psnr(&self.sim.object, &self.sim.record.capture, true, true).map_or(f64::NAN, |q| q.psnr_db)
    }

    pub fn object(&self) -> Vec<u8> {
        rgba(&self.sim.object, Scale::Linear, false)
    }

    pub fn capture(&self) -> Vec<u8> {
        rgba(&self.sim.record.capture, Scale::Linear, false)
    }

    pub fn phase(&self) -> Vec<u8> {
        rgba(&self.sim.phase.phase, Scale::Phase, true)
    }

    pub fn aperture(&self) -> Vec<u8> {
        rgba(&self.sim.record.aperture.to_image(), Scale::Linear, true)
    }

    pub fn psf(&self) -> Vec<u8> {
        rgba(&self.sim.record.psf, Scale::Log, true)
    }
}

impl Scene {
    pub fn build(size: usize, order: usize, seed: u64, transmittance: f64, snr_db: Option<f64>) -> ca_deconv::Result<Scene> {
        let mut cfg = ExperimentConfig::default().with_master_seed(seed);
        if let ObjectSource::Points(p) = &mut cfg.object {
            *p = p.rescaled(cfg.size, size);
        }
        cfg.size = size;
        cfg.zernike.order = Some(order);
        cfg.aperture.transmittance = transmittance;
        cfg.noise = snr_db.map(|snr_db| NoiseConfig {
            snr_db,
            seed: seed.wrapping_add(3),
            reference: NoiseReference::OpenAperture,
        });
        Ok(Scene { sim: simulate(&cfg)? })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }
}

#[wasm_bindgen]
pub struct Reconstruction {
    solver: Solver,
    truth: RealImage,
    mask: Vec<bool>,
    last_loss: f64,
}

#[wasm_bindgen]
impl Reconstruction {
    #[wasm_bindgen(constructor)]
    pub fn new(scene: &Scene, alpha_f: f64, alpha_hi: f64, seed: u32) -> Result<Reconstruction, JsError> {
        Reconstruction::build(scene, alpha_f, alpha_hi, seed.into()).map_err(js)
    }

    /// Runs `n` iterations and returns the loss at the start of the last one.
    pub fn step(&mut self, n: usize) -> Result<f64, JsError> {
        self.advance(n).map_err(js)
    }

    pub fn iteration(&self) -> usize {
        self.solver.state().iteration
    }

    pub fn loss(&self) -> f64 {
        self.last_loss
    }

    pub fn psnr(&self) -> f64 {
        psnr(&self.truth, &self.estimate(), true, true).map_or(f64::NAN, |q| q.psnr_db)
    }

    pub fn object(&self) -> Vec<u8> {
        rgba(&self.estimate(), Scale::Linear, false)
    }

    /// Estimated pupil phase on open aperture pixels; closed pixels read 0.
    pub fn phase(&self) -> Vec<u8> {
        let phase = self.solver.state().pupil.phase();
        let masked = phase.map({
            let mut open = self.mask.iter();
            move |v| if *open.next().unwrap_or(&false) { v } else { 0.0 }
        });
        rgba(&masked, Scale::Phase, true)
    }

    pub fn psf(&self) -> Vec<u8> {
        let psf = self.solver.state().coherent_psf.norm_sqr();
        rgba(&psf, Scale::Log, true)
    }
}

impl Reconstruction {
    pub fn build(scene: &Scene, alpha_f: f64, alpha_hi: f64, seed: u64) -> ca_deconv::Result<Reconstruction> {
        let cfg = ReconConfig {
            alpha_f,
            alpha_hi,
            init_seed: seed,
            max_iterations: usize::MAX,
            loss_log_stride: usize::MAX,
            ..ReconConfig::default()
        };
        let rec = &scene.sim.record;
        let state = init_state(&rec.capture, &rec.aperture, &cfg)?;
        let mut solver = Solver::new(state, &rec.capture, &rec.aperture, &cfg)?;
        let last_loss = solver.current_loss();
        Ok(Reconstruction {
            solver,
            truth: scene.sim.object.clone(),
            mask: rec.aperture.mask().to_vec(),
            last_loss,
        })
    }

    pub fn advance(&mut self, n: usize) -> ca_deconv::Result<f64> {
        for _ in 0..n {
            self.last_loss = self.solver.step()?;
        }
        Ok(self.last_loss)
    }

    pub fn estimate(&self) -> RealImage {
        self.solver.state().object().map(|v| v.max(0.0))
    }
}
