//! Joint object / pupil recovery from a single coded-aperture capture.
//!
//! Each iteration runs the loop below on the current estimates `F̂` (object
//! spectrum), `Ĥ_i` (incoherent transfer function) and `P̂` (pupil):
//!
//! 1. `ĝ = Re IDFT[F̂·Ĥ_i]`, `e_g = g − ĝ`, loss `‖e_g‖²`.
//! 2. PIE feedback of `DFT[e_g]` into `F̂`, then into `Ĥ_i`.
//! 3. `ĥ_c' = IDFT[P̂·A]`; `ĥ_c = sqrt(max(Re IDFT[Ĥ_i], 0))·exp(i·arg ĥ_c')`.
//! 4. PIE feedback of `DFT[ĥ_c − ĥ_c']` into `P̂` through the aperture, then
//!    `P̂ ← exp(i·arg P̂)`.
//! 5. `Ĥ_i ← DFT[|IDFT[P̂·A]|²]` (unless [`TransferSource::Update`] is selected).
//!
//! With a binary aperture the pupil is only ever constrained on open pixels;
//! closed pixels never reach the simulated capture.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aperture::CodedAperture;
use crate::error::{ensure_same_grid, Error, Result};
use crate::field::{dft2, idft2, ComplexField, Fft2, Grid, RealImage};

/// Iterations spanned by the windowed convergence test.
pub const CONVERGENCE_WINDOW: usize = 1000;

/// Which transfer function enters the next iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferSource {
    /// Re-synthesized from the projected pupil.
    #[default]
    Pupil,
    /// The feedback-updated estimate, carried over unchanged.
    Update,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub alpha_f: f64,
    pub alpha_hi: f64,
    pub alpha_p: f64,
    pub max_iterations: usize,
    /// Stop once the loss changes by less than this fraction over
    /// [`CONVERGENCE_WINDOW`] iterations.
    pub convergence_tolerance: Option<f64>,
    pub object_nonnegativity: bool,
    pub init_seed: u64,
    pub loss_log_stride: usize,
    pub transfer_source: TransferSource,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            alpha_f: 1e-3,
            alpha_hi: 1e-4,
            alpha_p: 0.25,
            max_iterations: 100_000,
            convergence_tolerance: None,
            object_nonnegativity: true,
            init_seed: 0,
            loss_log_stride: 100,
            transfer_source: TransferSource::Pupil,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_f", self.alpha_f), ("alpha_hi", self.alpha_hi), ("alpha_p", self.alpha_p)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {a}")));
            }
        }
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations must be >= 1"));
        }
        if self.loss_log_stride < 1 {
            return Err(Error::config("loss_log_stride must be >= 1"));
        }
        if let Some(tol) = self.convergence_tolerance {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(Error::config(format!("invalid convergence tolerance {tol}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    pub iteration: usize,
    pub loss: f64,
}

/// Mutable estimates of one reconstruction run.
#[derive(Clone, PartialEq)]
pub struct ReconState {
    /// `F̂`
    pub object_spectrum: ComplexField,
    /// `Ĥ_i`
    pub transfer: ComplexField,
    /// `P̂`, unit modulus at every pixel.
    pub pupil: ComplexField,
    /// `ĥ_c` from the latest amplitude projection, or `IDFT[P̂·A]` before the first.
    pub coherent_psf: ComplexField,
    pub loss_trace: Vec<LossSample>,
    /// Completed iterations.
    pub iteration: usize,
}

impl fmt::Debug for ReconState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReconState")
            .field("grid", &self.grid())
            .field("iteration", &self.iteration)
            .field("loss_trace_len", &self.loss_trace.len())
            .field("last_loss", &self.loss_trace.last().map(|s| s.loss))
            .finish_non_exhaustive()
    }
}

impl ReconState {
    pub fn grid(&self) -> Grid {
        self.pupil.grid()
    }

    /// State built from explicit estimates of the object and pupil, with the
    /// transfer function synthesized from them.
    pub fn from_estimates(object: &RealImage, pupil: &ComplexField, aperture: &CodedAperture) -> Result<Self> {
        ensure_same_grid(object.grid(), pupil.grid())?;
        ensure_same_grid(pupil.grid(), aperture.grid())?;
        let mut fft = Fft2::new(object.grid());
        let a = aperture.to_values();
        let mut spectrum = object.to_complex().into_values();
        fft.forward(&mut spectrum);
        let mut hc = vec![Complex64::new(0.0, 0.0); a.len()];
        let mut transfer = vec![Complex64::new(0.0, 0.0); a.len()];
        synthesize_transfer(&mut fft, pupil.values(), &a, &mut hc, &mut transfer);
        let grid = object.grid();
        Ok(ReconState {
            object_spectrum: ComplexField::from_vec_unchecked(grid, spectrum),
            transfer: ComplexField::from_vec_unchecked(grid, transfer),
            pupil: pupil.clone(),
            coherent_psf: ComplexField::from_vec_unchecked(grid, hc),
            loss_trace: Vec::new(),
            iteration: 0,
        })
    }

    /// `f̂ = Re IDFT[F̂]`.
    pub fn object(&self) -> RealImage {
        idft2(&self.object_spectrum).re()
    }

    /// `ĝ = Re IDFT[F̂·Ĥ_i]`.
    pub fn simulated_capture(&self) -> RealImage {
        let product: Vec<Complex64> = self
            .object_spectrum
            .values()
            .iter()
            .zip(self.transfer.values())
            .map(|(f, h)| f * h)
            .collect();
        idft2(&ComplexField::from_vec_unchecked(self.grid(), product)).re()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIterations,
    Tolerance,
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub object: RealImage,
    pub pupil: ComplexField,
    /// `|IDFT[P̂·A]|²` of the final pupil.
    pub psf: RealImage,
    pub loss_trace: Vec<LossSample>,
    pub iterations_run: usize,
    pub terminated_by: Termination,
}

impl ReconResult {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace.first().map_or(f64::NAN, |s| s.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().map_or(f64::NAN, |s| s.loss)
    }
}

/// Seeded starting point: `f̂₀ = max(g, 0)` and a uniformly random pupil phase.
pub fn init_state(g: &RealImage, aperture: &CodedAperture, cfg: &ReconConfig) -> Result<ReconState> {
    ensure_same_grid(g.grid(), aperture.grid())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
    let pupil = ComplexField::from_fn(g.grid(), |_, _| Complex64::from_polar(1.0, rng.random_range(-PI..PI)));
    ReconState::from_estimates(&g.map(|v| v.max(0.0)), &pupil, aperture)
}

/// `e_g = g − ĝ`.
pub fn residual(g: &RealImage, state: &ReconState) -> Result<RealImage> {
    ensure_same_grid(g.grid(), state.grid())?;
    let model = state.simulated_capture();
    Ok(RealImage::from_vec_unchecked(
        g.grid(),
        g.values().iter().zip(model.values()).map(|(a, b)| a - b).collect(),
    ))
}

/// `F̂ + Ĥ_i*·DFT[e_g] / ((1−α)|Ĥ_i|² + α·max|Ĥ_i|²)`.
pub fn update_object_spectrum(state: &ReconState, e_g: &RealImage, alpha: f64) -> Result<ComplexField> {
    ensure_same_grid(e_g.grid(), state.grid())?;
    let err = dft2(&e_g.to_complex());
    let mut out = state.object_spectrum.clone();
    pie_feedback(out.values_mut(), state.transfer.values(), err.values(), alpha, "transfer function")?;
    Ok(out)
}

/// `Ĥ_i + F̂*·DFT[e_g] / ((1−α)|F̂|² + α·max|F̂|²)`.
pub fn update_transfer_function(state: &ReconState, e_g: &RealImage, alpha: f64) -> Result<ComplexField> {
    ensure_same_grid(e_g.grid(), state.grid())?;
    let err = dft2(&e_g.to_complex());
    let mut out = state.transfer.clone();
    pie_feedback(out.values_mut(), state.object_spectrum.values(), err.values(), alpha, "object spectrum")?;
    Ok(out)
}

/// Returns `(ĥ_c', ĥ_c)`: the coherent PSF of the current pupil and its
/// amplitude-constrained version.
pub fn pupil_projection(state: &ReconState, aperture: &CodedAperture) -> Result<(ComplexField, ComplexField)> {
    ensure_same_grid(state.grid(), aperture.grid())?;
    let grid = state.grid();
    let a = aperture.to_values();
    let masked: Vec<Complex64> = state.pupil.values().iter().zip(&a).map(|(p, a)| p * a).collect();
    let prime = idft2(&ComplexField::from_vec_unchecked(grid, masked));
    let intensity = idft2(&state.transfer);
    let mut rectified = vec![Complex64::new(0.0, 0.0); grid.len()];
    amplitude_constraint(prime.values(), intensity.values(), &mut rectified);
    Ok((prime, ComplexField::from_vec_unchecked(grid, rectified)))
}

/// Pupil feedback of `DFT[e_hc]` through the aperture, followed by the
/// unit-modulus projection.
pub fn update_pupil(
    state: &ReconState,
    e_hc: &ComplexField,
    aperture: &CodedAperture,
    alpha: f64,
) -> Result<ComplexField> {
    ensure_same_grid(state.grid(), e_hc.grid())?;
    ensure_same_grid(state.grid(), aperture.grid())?;
    let err = dft2(e_hc);
    let mut out = state.pupil.clone();
    pupil_feedback(out.values_mut(), &aperture.to_values(), err.values(), alpha);
    Ok(out)
}

/// Runs the full reconstruction from the seeded initial state.
pub fn iterate(g: &RealImage, aperture: &CodedAperture, cfg: &ReconConfig) -> Result<ReconResult> {
    cfg.validate()?;
    let state = init_state(g, aperture, cfg)?;
    iterate_from(state, g, aperture, cfg)
}

/// Runs the reconstruction from a caller-supplied state.
pub fn iterate_from(
    state: ReconState,
    g: &RealImage,
    aperture: &CodedAperture,
    cfg: &ReconConfig,
) -> Result<ReconResult> {
    let mut solver = Solver::new(state, g, aperture, cfg)?;
    solver.run()?;
    Ok(solver.into_result())
}

/// Step-by-step driver around one [`ReconState`].
pub struct Solver {
    state: ReconState,
    capture: Vec<f64>,
    aperture: Vec<f64>,
    cfg: ReconConfig,
    fft: Fft2,
    spec: Vec<Complex64>,
    work: Vec<Complex64>,
    prime: Vec<Complex64>,
    window: VecDeque<f64>,
    terminated_by: Option<Termination>,
}

impl Solver {
    pub fn new(state: ReconState, g: &RealImage, aperture: &CodedAperture, cfg: &ReconConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = state.grid();
        ensure_same_grid(grid, g.grid())?;
        ensure_same_grid(grid, aperture.grid())?;
        let a = aperture.to_values();
        let mut fft = Fft2::new(grid);
        // ĥ_c' for the first projection
        let mut prime: Vec<Complex64> = state.pupil.values().iter().zip(&a).map(|(p, a)| p * a).collect();
        fft.inverse(&mut prime);
        Ok(Solver {
            capture: g.values().to_vec(),
            aperture: a,
            cfg: cfg.clone(),
            fft,
            spec: vec![Complex64::new(0.0, 0.0); grid.len()],
            work: vec![Complex64::new(0.0, 0.0); grid.len()],
            prime,
            window: VecDeque::with_capacity(CONVERGENCE_WINDOW + 1),
            terminated_by: None,
            state,
        })
    }

    pub fn state(&self) -> &ReconState {
        &self.state
    }

    pub fn config(&self) -> &ReconConfig {
        &self.cfg
    }

    pub fn is_finished(&self) -> bool {
        self.terminated_by.is_some()
    }

    /// Runs until the iteration budget or the convergence test stops it.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    /// Current data loss `‖g − ĝ‖²`.
    pub fn current_loss(&mut self) -> f64 {
        self.residual_spectrum()
    }

    /// One full iteration. Returns the loss measured at its start.
    pub fn step(&mut self) -> Result<f64> {
        let k = self.state.iteration;
        let loss = self.residual_spectrum();
        if !loss.is_finite() {
            let last_finite_loss = self.window.back().copied().unwrap_or(f64::NAN);
            return Err(Error::Diverged {
                iteration: k,
                last_finite_loss,
                state: Box::new(self.state.clone()),
            });
        }
        if k % self.cfg.loss_log_stride == 0 {
            self.state.loss_trace.push(LossSample { iteration: k, loss });
        }

        let cfg = &self.cfg;
        let st = &mut self.state;
        // self.spec holds DFT[e_g]
        pie_feedback(
            st.object_spectrum.values_mut(),
            st.transfer.values(),
            &self.spec,
            cfg.alpha_f,
            "transfer function",
        )?;
        pie_feedback(
            st.transfer.values_mut(),
            st.object_spectrum.values(),
            &self.spec,
            cfg.alpha_hi,
            "object spectrum",
        )?;
        if cfg.object_nonnegativity {
            let f = st.object_spectrum.values_mut();
            self.fft.inverse(f);
            for v in f.iter_mut() {
                *v = Complex64::new(v.re.max(0.0), 0.0);
            }
            self.fft.forward(f);
        }

        // amplitude constraint against Re IDFT[Ĥ_i]
        self.work.copy_from_slice(st.transfer.values());
        self.fft.inverse(&mut self.work);
        let rectified = st.coherent_psf.values_mut();
        amplitude_constraint(&self.prime, &self.work, rectified);

        // DFT[ĥ_c − ĥ_c'] into the pupil
        for ((e, r), p) in self.work.iter_mut().zip(rectified.iter()).zip(&self.prime) {
            *e = r - p;
        }
        self.fft.forward(&mut self.work);
        pupil_feedback(st.pupil.values_mut(), &self.aperture, &self.work, cfg.alpha_p);

        match cfg.transfer_source {
            TransferSource::Pupil => synthesize_transfer(
                &mut self.fft,
                st.pupil.values(),
                &self.aperture,
                &mut self.prime,
                st.transfer.values_mut(),
            ),
            TransferSource::Update => {
                for ((h, p), a) in self.prime.iter_mut().zip(st.pupil.values()).zip(&self.aperture) {
                    *h = p * a;
                }
                self.fft.inverse(&mut self.prime);
            }
        }

        st.iteration += 1;
        self.window.push_back(loss);
        if self.window.len() > CONVERGENCE_WINDOW + 1 {
            self.window.pop_front();
        }
        if st.iteration >= cfg.max_iterations {
            self.terminated_by = Some(Termination::MaxIterations);
        } else if let Some(tol) = cfg.convergence_tolerance {
            if self.window.len() == CONVERGENCE_WINDOW + 1 {
                let old = self.window[0];
                let change = if old == 0.0 { 0.0 } else { (loss - old).abs() / old };
                if change < tol {
                    self.terminated_by = Some(Termination::Tolerance);
                }
            }
        }
        Ok(loss)
    }

    /// Fills `self.spec` with `DFT[g − Re IDFT[F̂·Ĥ_i]]` and returns the loss.
    fn residual_spectrum(&mut self) -> f64 {
        let st = &self.state;
        for ((s, f), h) in self.spec.iter_mut().zip(st.object_spectrum.values()).zip(st.transfer.values()) {
            *s = f * h;
        }
        self.fft.inverse(&mut self.spec);
        let mut loss = 0.0;
        for (s, g) in self.spec.iter_mut().zip(&self.capture) {
            let e = g - s.re;
            loss += e * e;
            *s = Complex64::new(e, 0.0);
        }
        self.fft.forward(&mut self.spec);
        loss
    }

    /// Final estimates. The loss trace ends with the loss of the returned state.
    pub fn into_result(mut self) -> ReconResult {
        let final_loss = self.residual_spectrum();
        let st = &mut self.state;
        if st.loss_trace.last().map(|s| s.iteration) != Some(st.iteration) {
            st.loss_trace.push(LossSample {
                iteration: st.iteration,
                loss: final_loss,
            });
        }
        let grid = st.grid();
        let mut object = st.object();
        if self.cfg.object_nonnegativity {
            object = object.map(|v| v.max(0.0));
        }
        let mut hc: Vec<Complex64> = st.pupil.values().iter().zip(&self.aperture).map(|(p, a)| p * a).collect();
        self.fft.inverse(&mut hc);
        let psf = RealImage::from_vec_unchecked(grid, hc.iter().map(|v| v.norm_sqr()).collect());
        ReconResult {
            object,
            pupil: st.pupil.clone(),
            psf,
            loss_trace: std::mem::take(&mut st.loss_trace),
            iterations_run: st.iteration,
            terminated_by: self.terminated_by.unwrap_or(Termination::MaxIterations),
        }
    }
}

/// `target += conj(other)·err / ((1−α)|other|² + α·max|other|²)`.
fn pie_feedback(
    target: &mut [Complex64],
    other: &[Complex64],
    err: &[Complex64],
    alpha: f64,
    what: &str,
) -> Result<()> {
    let max = other.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Degenerate(format!("{what} is identically zero")));
    }
    for ((t, o), e) in target.iter_mut().zip(other).zip(err) {
        *t += o.conj() * e / feedback_denominator(o.norm_sqr(), max, alpha);
    }
    Ok(())
}

fn feedback_denominator(sq: f64, max_sq: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * sq + alpha * max_sq
}

/// `out = sqrt(max(Re m, 0))·exp(i·arg prime)` with `arg 0 = 0`.
fn amplitude_constraint(prime: &[Complex64], intensity: &[Complex64], out: &mut [Complex64]) {
    for ((o, p), m) in out.iter_mut().zip(prime).zip(intensity) {
        *o = Complex64::from_polar(m.re.max(0.0).sqrt(), p.arg());
    }
}

/// `P̂' = P̂ + A*·err / ((1−α)|A|² + α·max|A|²)`, then `P̂ = exp(i·arg P̂')`.
fn pupil_feedback(pupil: &mut [Complex64], aperture: &[f64], err: &[Complex64], alpha: f64) {
    let max = aperture.iter().map(|a| a * a).fold(0.0, f64::max);
    for ((p, &a), e) in pupil.iter_mut().zip(aperture).zip(err) {
        let updated = *p + a * e / feedback_denominator(a * a, max, alpha);
        *p = Complex64::from_polar(1.0, updated.arg());
    }
}

/// `hc = IDFT[P·A]` and `transfer = DFT[|hc|²]`.
fn synthesize_transfer(
    fft: &mut Fft2,
    pupil: &[Complex64],
    aperture: &[f64],
    hc: &mut [Complex64],
    transfer: &mut [Complex64],
) {
    for ((h, p), a) in hc.iter_mut().zip(pupil).zip(aperture) {
        *h = p * a;
    }
    fft.inverse(hc);
    for (t, h) in transfer.iter_mut().zip(hc.iter()) {
        *t = Complex64::new(h.norm_sqr(), 0.0);
    }
    fft.forward(transfer);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aperture::generate_ca;
    use crate::forward::simulate_capture;
    use crate::object::{generate_object, PointSources};
    use crate::zernike::{phase_map, pupil_from_phase, sample_coefficients, ZernikeSpec};

    struct Scene {
        object: RealImage,
        pupil: ComplexField,
        aperture: CodedAperture,
        capture: RealImage,
    }

    fn scene(n: usize, seed: u64) -> Scene {
        let grid = Grid::square(n).unwrap();
        let object = generate_object(
            grid,
            &PointSources {
                count: 4,
                max_size: 3,
                seed,
                ..PointSources::default()
            },
        )
        .unwrap();
        let spec = ZernikeSpec::new(sample_coefficients(8, seed + 1).unwrap(), ZernikeSpec::default_radius(grid)).unwrap();
        let pupil = pupil_from_phase(&phase_map(&spec, grid).unwrap().phase);
        let aperture = generate_ca(grid, 0.5, seed + 2).unwrap();
        let capture = simulate_capture(&object, &pupil, &aperture).unwrap().capture;
        Scene {
            object,
            pupil,
            aperture,
            capture,
        }
    }

    fn random_field(grid: Grid, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(grid, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_image(grid: Grid, seed: u64) -> RealImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealImage::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_state(grid: Grid, seed: u64) -> ReconState {
        let pupil = random_field(grid, seed + 2).values().iter().map(|v| Complex64::from_polar(1.0, v.arg())).collect();
        ReconState {
            object_spectrum: random_field(grid, seed),
            transfer: random_field(grid, seed + 1),
            pupil: ComplexField::from_vec_unchecked(grid, pupil),
            coherent_psf: ComplexField::zeros(grid),
            loss_trace: Vec::new(),
            iteration: 0,
        }
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn truth_state(s: &Scene) -> ReconState {
        ReconState::from_estimates(&s.object, &s.pupil, &s.aperture).unwrap()
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let s = scene(16, 1);
        let cfg = ReconConfig::default();
        let a = init_state(&s.capture, &s.aperture, &cfg).unwrap();
        let b = init_state(&s.capture, &s.aperture, &cfg).unwrap();
        assert!(a == b);
        let c = init_state(&s.capture, &s.aperture, &ReconConfig { init_seed: 1, ..cfg }).unwrap();
        assert!(a.pupil != c.pupil);
    }

    #[test]
    fn init_starts_from_clamped_capture_and_unit_pupil() {
        let s = scene(16, 2);
        let g = s.capture.map(|v| v - 0.01);
        let st = init_state(&g, &s.aperture, &ReconConfig::default()).unwrap();
        for v in st.pupil.values() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
        let f0 = st.object();
        for (a, b) in f0.values().iter().zip(g.values()) {
            assert!((a - b.max(0.0)).abs() < 1e-12);
        }
        assert!(f0.min() >= -1e-15);
    }

    #[test]
    fn initial_transfer_dc_is_total_psf_energy() {
        let s = scene(16, 3);
        let st = init_state(&s.capture, &s.aperture, &ReconConfig::default()).unwrap();
        // direct summation of |IDFT[P̂₀·A]|²
        let masked: Vec<Complex64> = st.pupil.values().iter().zip(s.aperture.to_values()).map(|(p, a)| p * a).collect();
        let hc = idft2(&ComplexField::from_vec_unchecked(st.grid(), masked));
        let energy: f64 = hc.values().iter().map(|v| v.norm_sqr()).sum();
        let dc = st.transfer.values()[0];
        assert!((dc.re - energy).abs() <= 1e-12 * energy);
        assert!(dc.im.abs() < 1e-12);
        let expected = s.aperture.open_count() as f64 / 256.0;
        assert!((dc.re - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn residual_at_truth_vanishes() {
        let s = scene(32, 4);
        let e = residual(&s.capture, &truth_state(&s)).unwrap();
        assert!(e.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn residual_of_offset_capture_is_the_offset() {
        let s = scene(16, 5);
        let st = truth_state(&s);
        let g = st.simulated_capture().map(|v| v + 0.25);
        let e = residual(&g, &st).unwrap();
        assert!(e.values().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn residual_constant_case() {
        // flat object through an identity system, ĝ ≡ 1 against g ≡ 2
        let grid = Grid::square(2).unwrap();
        let st = ReconState {
            object_spectrum: dft2(&ComplexField::constant(grid, Complex64::new(1.0, 0.0))),
            transfer: ComplexField::constant(grid, Complex64::new(1.0, 0.0)),
            ..random_state(grid, 0)
        };
        let e = residual(&RealImage::constant(grid, 2.0), &st).unwrap();
        assert!(e.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn scalar_feedback_hand_values() {
        let one = [Complex64::new(1.0, 0.0)];
        let mut f = one;
        pie_feedback(&mut f, &one, &one, 1.0, "h").unwrap();
        assert_eq!(f[0], Complex64::new(2.0, 0.0));

        let mut h = one;
        pie_feedback(&mut h, &[Complex64::new(2.0, 0.0)], &one, 1.0, "f").unwrap();
        assert_eq!(h[0], Complex64::new(1.5, 0.0));
    }

    #[test]
    fn zero_error_leaves_spectra_unchanged() {
        let grid = Grid::new(8, 6).unwrap();
        let st = random_state(grid, 6);
        let zero = RealImage::zeros(grid);
        assert_eq!(update_object_spectrum(&st, &zero, 0.3).unwrap(), st.object_spectrum);
        assert_eq!(update_transfer_function(&st, &zero, 0.3).unwrap(), st.transfer);
    }

    #[test]
    fn alpha_one_is_classic_pie() {
        for seed in 0..10 {
            let grid = Grid::new(8, 8).unwrap();
            let st = random_state(grid, 10 * seed);
            let e = random_image(grid, 10 * seed + 7);
            let got = update_object_spectrum(&st, &e, 1.0).unwrap();
            let err = dft2(&e.to_complex());
            let max = st.transfer.values().iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
            let expected: Vec<Complex64> = st
                .object_spectrum
                .values()
                .iter()
                .zip(st.transfer.values())
                .zip(err.values())
                .map(|((f, h), e)| f + h.conj() * e / max)
                .collect();
            assert!(max_diff(got.values(), &expected) <= 1e-12);
        }
    }

    #[test]
    fn transfer_update_mirrors_object_update() {
        for seed in 0..10 {
            let grid = Grid::new(6, 10).unwrap();
            let st = random_state(grid, 10 * seed + 3);
            let e = random_image(grid, 10 * seed + 9);
            let swapped = ReconState {
                object_spectrum: st.transfer.clone(),
                transfer: st.object_spectrum.clone(),
                ..st.clone()
            };
            for alpha in [1e-3, 0.25, 1.0] {
                let a = update_transfer_function(&st, &e, alpha).unwrap();
                let b = update_object_spectrum(&swapped, &e, alpha).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn zero_transfer_is_degenerate() {
        let grid = Grid::square(4).unwrap();
        let st = ReconState {
            transfer: ComplexField::zeros(grid),
            ..random_state(grid, 1)
        };
        let e = random_image(grid, 2);
        assert!(matches!(update_object_spectrum(&st, &e, 0.5), Err(Error::Degenerate(_))));
        let st = ReconState {
            object_spectrum: ComplexField::zeros(grid),
            ..random_state(grid, 1)
        };
        assert!(matches!(update_transfer_function(&st, &e, 0.5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn projection_is_identity_at_consistency() {
        let s = scene(32, 7);
        let st = truth_state(&s);
        let (prime, rectified) = pupil_projection(&st, &s.aperture).unwrap();
        assert!(max_diff(prime.values(), rectified.values()) < 1e-9);
    }

    #[test]
    fn projection_modulus_follows_clamped_intensity() {
        let grid = Grid::square(16).unwrap();
        let s = scene(16, 8);
        let st = random_state(grid, 8);
        let (_, rectified) = pupil_projection(&st, &s.aperture).unwrap();
        let m = idft2(&st.transfer);
        for (r, m) in rectified.values().iter().zip(m.values()) {
            assert!((r.norm() - m.re.max(0.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_of_zero_is_zero() {
        let prime = [Complex64::new(0.0, 0.0), Complex64::new(0.0, -0.0), Complex64::new(0.0, 2.0)];
        let m = [Complex64::new(4.0, 1.0), Complex64::new(9.0, 0.0), Complex64::new(-1.0, 0.0)];
        let mut out = [Complex64::new(0.0, 0.0); 3];
        amplitude_constraint(&prime, &m, &mut out);
        assert_eq!(out[0], Complex64::new(2.0, 0.0));
        assert_eq!(out[1], Complex64::new(3.0, 0.0));
        assert_eq!(out[2], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_pupil_error_is_a_fixed_point() {
        let s = scene(16, 9);
        let st = truth_state(&s);
        let p = update_pupil(&st, &ComplexField::zeros(st.grid()), &s.aperture, 0.25).unwrap();
        assert!(max_diff(p.values(), st.pupil.values()) < 1e-15);
    }

    #[test]
    fn binary_aperture_denominators() {
        assert_eq!(feedback_denominator(0.0, 1.0, 0.5), 0.5);
        assert_eq!(feedback_denominator(1.0, 1.0, 0.5), 1.0);
        // open pixel: P + e, closed pixel: untouched
        let mut p = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let e = [Complex64::new(0.0, 1.0), Complex64::new(5.0, 5.0)];
        pupil_feedback(&mut p, &[1.0, 0.0], &e, 0.5);
        assert!((p[0] - Complex64::from_polar(1.0, PI / 4.0)).norm() < 1e-15);
        assert!((p[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pupil_update_is_unit_modulus() {
        let s = scene(32, 10);
        let st = random_state(s.capture.grid(), 10);
        let e = random_field(st.grid(), 11);
        for alpha in [1e-3, 0.5, 1.0] {
            let p = update_pupil(&st, &e, &s.aperture, alpha).unwrap();
            let worst = p.values().iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
            assert!(worst <= 2.0 * f64::EPSILON);
        }
    }

    fn short(iterations: usize) -> ReconConfig {
        ReconConfig {
            max_iterations: iterations,
            loss_log_stride: 1,
            ..ReconConfig::default()
        }
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let s = scene(32, 12);
        let norm = s.capture.sum_sq();
        let start = truth_state(&s);
        let mut solver = Solver::new(start.clone(), &s.capture, &s.aperture, &short(50)).unwrap();
        solver.run().unwrap();
        let res = solver.into_result();
        assert!(res.initial_loss() <= 1e-12 * norm);
        assert!(res.loss_trace.iter().all(|l| l.loss <= 1e-9 * norm));

        let mut one = Solver::new(start.clone(), &s.capture, &s.aperture, &short(1)).unwrap();
        one.step().unwrap();
        let after = one.state();
        assert!(max_diff(after.pupil.values(), start.pupil.values()) < 1e-9);
        let (a, b) = (after.simulated_capture(), start.simulated_capture());
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn closed_pixels_never_reach_the_model() {
        let s = scene(16, 13);
        let cfg = short(30);
        let start = init_state(&s.capture, &s.aperture, &cfg).unwrap();
        let zeroed: Vec<Complex64> = start
            .pupil
            .values()
            .iter()
            .zip(s.aperture.mask())
            .map(|(&p, &open)| if open { p } else { Complex64::new(0.0, 0.0) })
            .collect();
        let other = ReconState {
            pupil: ComplexField::from_vec_unchecked(start.grid(), zeroed),
            ..start.clone()
        };
        let mut a = Solver::new(start, &s.capture, &s.aperture, &cfg).unwrap();
        let mut b = Solver::new(other, &s.capture, &s.aperture, &cfg).unwrap();
        while !a.is_finished() {
            a.step().unwrap();
            b.step().unwrap();
            let (ga, gb) = (a.state().simulated_capture(), b.state().simulated_capture());
            let worst = ga.values().iter().zip(gb.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-10);
        }
    }

    #[test]
    fn pupil_stays_unit_modulus_every_iteration() {
        let s = scene(16, 14);
        for source in [TransferSource::Pupil, TransferSource::Update] {
            let cfg = ReconConfig {
                transfer_source: source,
                ..short(20)
            };
            let mut solver = Solver::new(init_state(&s.capture, &s.aperture, &cfg).unwrap(), &s.capture, &s.aperture, &cfg).unwrap();
            while !solver.is_finished() {
                solver.step().unwrap();
                let worst = solver.state().pupil.values().iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
                assert!(worst <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let s = scene(16, 15);
        let cfg = short(40);
        let a = iterate(&s.capture, &s.aperture, &cfg).unwrap();
        let b = iterate(&s.capture, &s.aperture, &cfg).unwrap();
        let bits = |r: &ReconResult| r.loss_trace.iter().map(|l| l.loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.object, b.object);
        assert_eq!(a.pupil, b.pupil);
    }

    #[test]
    fn loss_trace_follows_stride() {
        let s = scene(16, 16);
        let cfg = ReconConfig {
            max_iterations: 23,
            loss_log_stride: 10,
            ..ReconConfig::default()
        };
        let r = iterate(&s.capture, &s.aperture, &cfg).unwrap();
        let its: Vec<usize> = r.loss_trace.iter().map(|l| l.iteration).collect();
        assert_eq!(its, vec![0, 10, 20, 23]);
        assert_eq!(r.iterations_run, 23);
        assert_eq!(r.terminated_by, Termination::MaxIterations);
        assert!(r.loss_trace.iter().all(|l| l.loss.is_finite() && l.loss >= 0.0));
        assert!(r.object.min() >= 0.0);
        assert!(r.psf.min() >= 0.0);
    }

    #[test]
    fn windowed_tolerance_stops_a_converged_run() {
        let s = scene(16, 17);
        let cfg = ReconConfig {
            max_iterations: 5000,
            convergence_tolerance: Some(1e-8),
            ..ReconConfig::default()
        };
        let r = iterate_from(truth_state(&s), &s.capture, &s.aperture, &cfg).unwrap();
        assert_eq!(r.terminated_by, Termination::Tolerance);
        assert_eq!(r.iterations_run, CONVERGENCE_WINDOW + 1);
    }

    #[test]
    fn overflowing_loss_reports_divergence() {
        let s = scene(16, 18);
        let g = s.capture.map(|v| v * 1e300);
        match iterate(&g, &s.aperture, &short(5)) {
            Err(Error::Diverged { iteration, state, .. }) => {
                assert_eq!(iteration, 0);
                assert_eq!(state.iteration, 0);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_and_serde() {
        assert!(ReconConfig::default().validate().is_ok());
        for bad in [
            ReconConfig { alpha_f: 0.0, ..ReconConfig::default() },
            ReconConfig { alpha_p: 1.5, ..ReconConfig::default() },
            ReconConfig { alpha_hi: f64::NAN, ..ReconConfig::default() },
            ReconConfig { max_iterations: 0, ..ReconConfig::default() },
            ReconConfig { loss_log_stride: 0, ..ReconConfig::default() },
            ReconConfig { convergence_tolerance: Some(-1.0), ..ReconConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let cfg: ReconConfig = serde_json::from_str(r#"{"alpha_p":0.5,"transfer_source":"update"}"#).unwrap();
        assert_eq!(cfg.alpha_p, 0.5);
        assert_eq!(cfg.transfer_source, TransferSource::Update);
        assert_eq!(cfg.max_iterations, 100_000);
        assert!(serde_json::from_str::<ReconConfig>(r#"{"alpha":0.5}"#).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let s = scene(16, 19);
        let g = RealImage::zeros(Grid::square(8).unwrap());
        assert!(matches!(init_state(&g, &s.aperture, &ReconConfig::default()), Err(Error::GridMismatch { .. })));
    }
}
