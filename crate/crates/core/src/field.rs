//! Grids, real and complex 2-D fields, and the discrete Fourier transform
//! convention shared by the whole crate.
//!
//! Arrays are row-major with `(row 0, col 0)` as the origin. The forward DFT is
//! unnormalized and the inverse carries the `1/(W·H)` factor, so the spectrum of
//! a field has its DC term at index `(0, 0)`:
//!
//! ```text
//! X(k, l) = Σ_m Σ_n x(m, n) · exp(-2πi (k·m/H + l·n/W))
//! x(m, n) = 1/(W·H) · Σ_k Σ_l X(k, l) · exp(+2πi (k·m/H + l·n/W))
//! ```

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_grid, Error, Result};

/// Relative bound on the imaginary part tolerated when a complex pipeline is
/// expected to produce a real result.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    width: usize,
    height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Dimension(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Grid { width, height })
    }

    pub fn square(size: usize) -> Result<Self> {
        Grid::new(size, size)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Signed frequency (or offset) of a row index, wrapped to `[-H/2, H/2)`.
    pub fn signed_row(&self, row: usize) -> i64 {
        wrap_signed(row, self.height)
    }

    /// Signed frequency (or offset) of a column index, wrapped to `[-W/2, W/2)`.
    pub fn signed_col(&self, col: usize) -> i64 {
        wrap_signed(col, self.width)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

fn wrap_signed(i: usize, n: usize) -> i64 {
    let (i, n) = (i as i64, n as i64);
    if i >= (n + 1) / 2 {
        i - n
    } else {
        i
    }
}

/// Real-valued image on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    grid: Grid,
    values: Vec<f64>,
}

impl RealImage {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values do not fill a {grid} grid",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value at pixel {pos}")));
        }
        Ok(RealImage { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        RealImage {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        RealImage {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for row in 0..grid.height {
            for col in 0..grid.width {
                values.push(f(row, col));
            }
        }
        RealImage { grid, values }
    }

    /// Unit impulse at `(row, col)`.
    pub fn delta(grid: Grid, row: usize, col: usize) -> Self {
        let mut img = RealImage::zeros(grid);
        img.values[grid.index(row, col)] = 1.0;
        img
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        RealImage { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.grid.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let idx = self.grid.index(row, col);
        self.values[idx] = value;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> RealImage {
        RealImage {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> RealImage {
        self.map(|v| v * s)
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Errors unless every value is `>= 0`.
    pub fn ensure_nonnegative(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            None => Ok(()),
            Some(pos) => Err(Error::domain(format!(
                "{what} must be nonnegative, found {} at pixel {pos}",
                self.values[pos]
            ))),
        }
    }
}

/// Complex-valued field on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values do not fill a {grid} grid",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite value at pixel {pos}")));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ComplexField::constant(grid, Complex64::new(0.0, 0.0))
    }

    pub fn constant(grid: Grid, value: Complex64) -> Self {
        ComplexField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for row in 0..grid.height {
            for col in 0..grid.width {
                values.push(f(row, col));
            }
        }
        ComplexField { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ComplexField { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[self.grid.index(row, col)]
    }

    pub fn re(&self) -> RealImage {
        RealImage::from_vec_unchecked(self.grid, self.values.iter().map(|v| v.re).collect())
    }

    pub fn norm_sqr(&self) -> RealImage {
        RealImage::from_vec_unchecked(self.grid, self.values.iter().map(|v| v.norm_sqr()).collect())
    }

    /// Argument of every pixel in `(-π, π]`, with `arg(0) = 0`.
    pub fn phase(&self) -> RealImage {
        RealImage::from_vec_unchecked(self.grid, self.values.iter().map(|v| v.arg()).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Real part, after checking that the imaginary residue is at most
    /// `1e-8 · max|x|`.
    pub fn into_real(self) -> Result<RealImage> {
        let scale = self.max_abs();
        let worst = self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        if worst > IMAG_RESIDUE_TOL * scale {
            return Err(Error::domain(format!(
                "expected a real field, imaginary residue {worst:e} exceeds {:e}",
                IMAG_RESIDUE_TOL * scale
            )));
        }
        Ok(self.re())
    }
}

/// Reusable 2-D FFT for one grid. Holds plans and scratch space so repeated
/// transforms do not allocate.
pub struct Fft2 {
    grid: Grid,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(grid.width);
        let row_inv = planner.plan_fft_inverse(grid.width);
        let col_fwd = planner.plan_fft_forward(grid.height);
        let col_inv = planner.plan_fft_inverse(grid.height);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Fft2 {
            grid,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            transposed: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Inverse transform with `1/(W·H)` normalization, in place.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
        let norm = 1.0 / self.grid.len() as f64;
        for v in data.iter_mut() {
            *v *= norm;
        }
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.grid.len(), "buffer does not match FFT grid");
        let (w, h) = (self.grid.width, self.grid.height);
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        // rustfft transforms every length-W chunk of the buffer
        row.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.transposed, h, w);
        col.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, data, w, h);
    }
}

/// `src` is `rows x cols`, `dst` becomes `cols x rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 16;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

thread_local! {
    static FFT_CACHE: RefCell<HashMap<Grid, Rc<RefCell<Fft2>>>> = RefCell::new(HashMap::new());
}

fn with_fft<R>(grid: Grid, f: impl FnOnce(&mut Fft2) -> R) -> R {
    let fft = FFT_CACHE.with(|cache| {
        cache
            .borrow_mut()
            .entry(grid)
            .or_insert_with(|| Rc::new(RefCell::new(Fft2::new(grid))))
            .clone()
    });
    let mut fft = fft.borrow_mut();
    f(&mut fft)
}

/// Unnormalized forward 2-D DFT.
pub fn dft2(x: &ComplexField) -> ComplexField {
    let mut values = x.values.clone();
    with_fft(x.grid, |fft| fft.forward(&mut values));
    ComplexField::from_vec_unchecked(x.grid, values)
}

/// Inverse 2-D DFT with `1/(W·H)` normalization.
pub fn idft2(x: &ComplexField) -> ComplexField {
    let mut values = x.values.clone();
    with_fft(x.grid, |fft| fft.inverse(&mut values));
    ComplexField::from_vec_unchecked(x.grid, values)
}

/// Wrap-around convolution of two real images, evaluated spectrally.
pub fn circular_convolve(a: &RealImage, b: &RealImage) -> Result<RealImage> {
    ensure_same_grid(a.grid, b.grid)?;
    let fa = dft2(&a.to_complex());
    let fb = dft2(&b.to_complex());
    let product: Vec<Complex64> = fa.values.iter().zip(&fb.values).map(|(x, y)| x * y).collect();
    idft2(&ComplexField::from_vec_unchecked(a.grid, product)).into_real()
}

/// Moves `x(m, n)` to `((m + dy) mod H, (n + dx) mod W)`.
pub fn circular_shift(x: &RealImage, dy: i64, dx: i64) -> RealImage {
    let grid = x.grid;
    let (h, w) = (grid.height as i64, grid.width as i64);
    let dy = dy.rem_euclid(h) as usize;
    let dx = dx.rem_euclid(w) as usize;
    let mut out = vec![0.0; grid.len()];
    for row in 0..grid.height {
        let dst_row = (row + dy) % grid.height;
        for col in 0..grid.width {
            out[grid.index(dst_row, (col + dx) % grid.width)] = x.values[grid.index(row, col)];
        }
    }
    RealImage::from_vec_unchecked(grid, out)
}

/// Swaps quadrants so that index `(0, 0)` lands at the array center. Used for
/// display only.
pub fn fftshift<T: Copy>(grid: Grid, values: &[T]) -> Vec<T> {
    let (h, w) = (grid.height, grid.width);
    let mut out = values.to_vec();
    for row in 0..h {
        for col in 0..w {
            out[grid.index((row + h / 2) % h, (col + w / 2) % w)] = values[grid.index(row, col)];
        }
    }
    out
}
