//! Reconstruction quality: translation registration by circular
//! cross-correlation, optional least-squares intensity rescaling, then PSNR.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_grid, Error, Result};
use crate::field::{circular_shift, dft2, idft2, ComplexField, RealImage};

/// PSNR reported when the error is negligible.
pub const PSNR_SENTINEL_DB: f64 = 99.0;
/// `mse` below `MSE_FLOOR · peak²` reports the sentinel.
pub const MSE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub psnr_db: f64,
    /// Displacement of the candidate relative to the reference, undone before
    /// comparison.
    pub shift: (i64, i64),
    pub scale: f64,
    pub mse: f64,
    /// Always "reference-max".
    pub peak: String,
    pub peak_value: f64,
    pub registered: bool,
    pub rescaled: bool,
}

/// Displacement `(dy, dx)` such that `candidate ≈ circular_shift(reference, dy, dx)`.
///
/// Found as the argmax of the spectral cross-correlation; ties go to the first
/// maximum in row-major order. Components are wrapped to `[-H/2, H/2)` and
/// `[-W/2, W/2)`.
pub fn register_translation(reference: &RealImage, candidate: &RealImage) -> Result<(i64, i64)> {
    ensure_same_grid(reference.grid(), candidate.grid())?;
    if reference.values().iter().all(|&v| v == 0.0) {
        return Err(Error::domain("cannot register against an all-zero reference"));
    }
    let grid = reference.grid();
    let r = dft2(&reference.to_complex());
    let c = dft2(&candidate.to_complex());
    let cross: Vec<Complex64> = r.values().iter().zip(c.values()).map(|(a, b)| a.conj() * b).collect();
    let corr = idft2(&ComplexField::from_vec_unchecked(grid, cross));

    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in corr.values().iter().enumerate() {
        if v.re > best_val {
            best_val = v.re;
            best = i;
        }
    }
    let (row, col) = (best / grid.width(), best % grid.width());
    Ok((grid.signed_row(row), grid.signed_col(col)))
}

pub fn psnr(
    reference: &RealImage,
    candidate: &RealImage,
    register: bool,
    rescale: bool,
) -> Result<QualityReport> {
    ensure_same_grid(reference.grid(), candidate.grid())?;
    let shift = if register {
        register_translation(reference, candidate)?
    } else {
        (0, 0)
    };
    let aligned = circular_shift(candidate, -shift.0, -shift.1);

    let scale = if rescale {
        let cc = aligned.sum_sq();
        if cc == 0.0 {
            return Err(Error::domain("cannot rescale an all-zero candidate"));
        }
        let rc: f64 = reference.values().iter().zip(aligned.values()).map(|(a, b)| a * b).sum();
        rc / cc
    } else {
        1.0
    };

    let n = reference.grid().len() as f64;
    let mse = reference
        .values()
        .iter()
        .zip(aligned.values())
        .map(|(r, c)| (r - scale * c).powi(2))
        .sum::<f64>()
        / n;
    let peak = reference.max();
    let psnr_db = if mse < MSE_FLOOR * peak * peak {
        PSNR_SENTINEL_DB
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    Ok(QualityReport {
        psnr_db,
        shift,
        scale,
        mse,
        peak: "reference-max".into(),
        peak_value: peak,
        registered: register,
        rescaled: rescale,
    })
}

/// `10·log10(mean(clean²) / mean((noisy − clean)²))`, or the sentinel when
/// the two are identical.
pub fn measured_snr_db(clean: &RealImage, noisy: &RealImage) -> Result<f64> {
    ensure_same_grid(clean.grid(), noisy.grid())?;
    let noise: f64 = clean.values().iter().zip(noisy.values()).map(|(a, b)| (b - a).powi(2)).sum();
    if noise == 0.0 {
        return Ok(PSNR_SENTINEL_DB);
    }
    Ok(10.0 * (clean.sum_sq() / noise).log10())
}
