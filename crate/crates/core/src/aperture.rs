//! Binary random coded apertures.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{dft2, idft2, ComplexField, Grid, RealImage};

#[derive(Clone, Debug, PartialEq)]
pub struct CodedAperture {
    grid: Grid,
    mask: Vec<bool>,
    transmittance: f64,
    seed: Option<u64>,
}

/// Number of open pixels a transmittance asks for on a grid.
pub fn open_count_for(grid: Grid, transmittance: f64) -> usize {
    (transmittance * grid.len() as f64).round() as usize
}

/// Random mask with exactly `round(t·W·H)` open pixels, placed by a seeded
/// shuffle.
pub fn generate_ca(grid: Grid, transmittance: f64, seed: u64) -> Result<CodedAperture> {
    if !(transmittance > 0.0 && transmittance <= 1.0) {
        return Err(Error::domain(format!(
            "transmittance must lie in (0, 1], got {transmittance}"
        )));
    }
    let open = open_count_for(grid, transmittance);
    if open == 0 {
        return Err(Error::domain(format!(
            "transmittance {transmittance} opens no pixel on a {grid} grid"
        )));
    }
    let mut mask = vec![false; grid.len()];
    mask[..open].iter_mut().for_each(|m| *m = true);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mask.shuffle(&mut rng);
    Ok(CodedAperture {
        grid,
        mask,
        transmittance,
        seed: Some(seed),
    })
}

impl CodedAperture {
    /// Wraps an existing 0/1 image, e.g. one read back from disk.
    pub fn from_image(mask: &RealImage, seed: Option<u64>) -> Result<Self> {
        let values = mask.values();
        if let Some(pos) = values.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::domain(format!(
                "aperture pixel {pos} is {} (must be 0 or 1)",
                values[pos]
            )));
        }
        let bits: Vec<bool> = values.iter().map(|&v| v == 1.0).collect();
        let open = bits.iter().filter(|&&b| b).count();
        if open == 0 {
            return Err(Error::domain("aperture has no open pixel"));
        }
        Ok(CodedAperture {
            grid: mask.grid(),
            transmittance: open as f64 / bits.len() as f64,
            mask: bits,
            seed,
        })
    }

    /// Every pixel open.
    pub fn open(grid: Grid) -> Self {
        CodedAperture {
            grid,
            mask: vec![true; grid.len()],
            transmittance: 1.0,
            seed: None,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_open(&self, row: usize, col: usize) -> bool {
        self.mask[self.grid.index(row, col)]
    }

    /// Requested transmittance (or the measured one for masks read from disk).
    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn open_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn measured_transmittance(&self) -> f64 {
        self.open_count() as f64 / self.grid.len() as f64
    }

    /// Mask as 0/1 floats.
    pub fn to_values(&self) -> Vec<f64> {
        self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_image(&self) -> RealImage {
        RealImage::from_vec_unchecked(self.grid, self.to_values())
    }

    /// Restricts the open pixels to a disk of `radius` samples around DC.
    pub fn restrict_to_disk(&self, radius: f64) -> Result<Self> {
        let grid = self.grid;
        let mut mask = self.mask.clone();
        for row in 0..grid.height() {
            for col in 0..grid.width() {
                let ky = grid.signed_row(row) as f64;
                let kx = grid.signed_col(col) as f64;
                if (ky * ky + kx * kx).sqrt() > radius {
                    mask[grid.index(row, col)] = false;
                }
            }
        }
        CodedAperture::from_image(
            &RealImage::from_vec_unchecked(grid, mask.iter().map(|&b| f64::from(u8::from(b))).collect()),
            self.seed,
        )
    }
}

/// Circular autocorrelation `c(d) = Σ_u A(u) A(u + d)`. Entries are integer
/// overlap counts; the peak at `(0, 0)` equals the open count.
pub fn autocorrelation_support(aperture: &CodedAperture) -> RealImage {
    let spectrum = dft2(&aperture.to_image().to_complex());
    let power = ComplexField::from_vec_unchecked(
        aperture.grid,
        spectrum.values().iter().map(|v| v.norm_sqr().into()).collect(),
    );
    // counts are exact integers; rounding removes transform round-off
    idft2(&power).re().map(|v| v.round().max(0.0))
}
