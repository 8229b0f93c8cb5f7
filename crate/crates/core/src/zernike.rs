//! Zernike aberration phase maps (Noll single-index ordering and
//! normalization) and their conversion into unit-modulus pupil functions.
//!
//! The pupil lives in the Fourier domain, so the unit disk is centred on the
//! DC sample at index `(0, 0)`; pixel `(row, col)` maps to the signed
//! frequency `(ky, kx)` and `r = |k| / pupil_radius`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid, RealImage};

/// Name recorded in metadata for the indexing/normalization in use.
pub const CONVENTION: &str = "noll";

/// Radial and azimuthal orders `(n, m)` of a Noll index. `m` is signed:
/// positive for cosine terms, negative for sine terms.
pub fn noll_to_nm(j: usize) -> Result<(usize, i64)> {
    if j < 1 {
        return Err(Error::domain("Noll index must be >= 1"));
    }
    let mut n = 0usize;
    let mut rem = j - 1;
    while rem > n {
        n += 1;
        rem -= n;
    }
    let m = (n % 2 + 2 * ((rem + (n + 1) % 2) / 2)) as i64;
    let m = if m != 0 && j % 2 == 1 { -m } else { m };
    Ok((n, m))
}

/// Radial polynomials `R_k^{m}(r)` for all `k <= n` at a fixed `m`, through
/// the three-term recurrence
/// `R_k^m = r (R_{k-1}^{|m-1|} + R_{k-1}^{m+1}) - R_{k-2}^m`.
///
/// Returns `R_n^m(r)`; zero when `n - m` is odd or `m > n`.
pub fn radial(n: usize, m: usize, r: f64) -> f64 {
    if m > n || (n - m) % 2 == 1 {
        return 0.0;
    }
    // table[k][q] holds R_k^q, with q up to n + 1 so the `m + 1` lookup is in range
    let width = n + 2;
    let mut table = vec![0.0; (n + 1) * width];
    table[0] = 1.0;
    for k in 1..=n {
        for q in 0..=k {
            if (k - q) % 2 == 1 {
                continue;
            }
            let lower = q.abs_diff(1);
            let prev = (k - 1) * width;
            let mut v = r * (table[prev + lower] + table[prev + q + 1]);
            if k >= 2 {
                v -= table[(k - 2) * width + q];
            }
            table[k * width + q] = v;
        }
    }
    table[n * width + m]
}

/// Noll-normalized Zernike polynomial `z_j(r, θ)`.
pub fn zernike_term(j: usize, r: f64, theta: f64) -> Result<f64> {
    let (n, m) = noll_to_nm(j)?;
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::domain(format!("radius {r} outside the unit disk")));
    }
    Ok(evaluate(n, m, r, theta))
}

fn evaluate(n: usize, m: i64, r: f64, theta: f64) -> f64 {
    let am = m.unsigned_abs() as usize;
    let rad = radial(n, am, r);
    if m == 0 {
        ((n + 1) as f64).sqrt() * rad
    } else {
        let norm = (2.0 * (n + 1) as f64).sqrt();
        let angular = if m > 0 {
            (am as f64 * theta).cos()
        } else {
            (am as f64 * theta).sin()
        };
        norm * rad * angular
    }
}

/// Coefficients `a_1..a_N` (radians per unit polynomial) and the disk radius
/// in frequency samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZernikeSpec {
    pub coefficients: Vec<f64>,
    pub pupil_radius: f64,
}

impl ZernikeSpec {
    pub fn new(coefficients: Vec<f64>, pupil_radius: f64) -> Result<Self> {
        let spec = ZernikeSpec {
            coefficients,
            pupil_radius,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default radius: the disk inscribed in the grid.
    pub fn default_radius(grid: Grid) -> f64 {
        grid.width().min(grid.height()) as f64 / 2.0
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.is_empty() {
            return Err(Error::domain("Zernike order must be >= 1"));
        }
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::domain("Zernike coefficients must be finite"));
        }
        if !(self.pupil_radius > 0.0 && self.pupil_radius.is_finite()) {
            return Err(Error::domain("pupil radius must be positive"));
        }
        Ok(())
    }
}

/// `a_n` drawn i.i.d. uniform on `[-1, 1]` from `seed`.
pub fn sample_coefficients(order: usize, seed: u64) -> Result<Vec<f64>> {
    if order < 1 {
        return Err(Error::domain("Zernike order must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..order).map(|_| rng.random_range(-1.0..=1.0)).collect())
}

/// Phase in radians over the grid, zero outside the unit disk.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMap {
    pub phase: RealImage,
    pub mask: Vec<bool>,
}

/// Disk coordinates `(r, θ)` of a Fourier-domain pixel.
pub fn disk_coords(grid: Grid, row: usize, col: usize, pupil_radius: f64) -> (f64, f64) {
    let ky = grid.signed_row(row) as f64;
    let kx = grid.signed_col(col) as f64;
    ((ky * ky + kx * kx).sqrt() / pupil_radius, ky.atan2(kx))
}

/// `w = Σ a_n z_n` on the disk.
pub fn phase_map(spec: &ZernikeSpec, grid: Grid) -> Result<PhaseMap> {
    spec.validate()?;
    if spec.pupil_radius > ZernikeSpec::default_radius(grid) {
        return Err(Error::domain(format!(
            "pupil radius {} exceeds the half-extent of a {grid} grid",
            spec.pupil_radius
        )));
    }
    let orders = spec
        .coefficients
        .iter()
        .enumerate()
        .map(|(i, &a)| noll_to_nm(i + 1).map(|nm| (nm, a)))
        .collect::<Result<Vec<_>>>()?;

    let mut mask = Vec::with_capacity(grid.len());
    let phase = RealImage::from_fn(grid, |row, col| {
        let (r, theta) = disk_coords(grid, row, col, spec.pupil_radius);
        let inside = r <= 1.0;
        mask.push(inside);
        if !inside {
            return 0.0;
        }
        orders
            .iter()
            .map(|&((n, m), a)| a * evaluate(n, m, r, theta))
            .sum()
    });
    Ok(PhaseMap { phase, mask })
}

/// `P = exp(i·w)`; unit modulus at every pixel.
pub fn pupil_from_phase(w: &RealImage) -> ComplexField {
    ComplexField::from_vec_unchecked(
        w.grid(),
        w.values().iter().map(|&p| Complex64::from_polar(1.0, p)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|v| v as f64).product()
    }

    /// Closed-form factorial sum, used only as an oracle.
    fn radial_oracle(n: usize, m: usize, r: f64) -> f64 {
        if (n - m) % 2 == 1 {
            return 0.0;
        }
        (0..=(n - m) / 2)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * factorial(n - k)
                    / (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k))
                    * r.powi((n - 2 * k) as i32)
            })
            .sum()
    }

    #[test]
    fn noll_table() {
        let expected = [
            (1, (0, 0)),
            (2, (1, 1)),
            (3, (1, -1)),
            (4, (2, 0)),
            (5, (2, -2)),
            (6, (2, 2)),
            (7, (3, -1)),
            (8, (3, 1)),
            (9, (3, -3)),
            (10, (3, 3)),
            (11, (4, 0)),
            (12, (4, 2)),
            (13, (4, -2)),
            (14, (4, 4)),
            (15, (4, -4)),
            (22, (6, 0)),
        ];
        for (j, nm) in expected {
            assert_eq!(noll_to_nm(j).unwrap(), nm, "j = {j}");
        }
        assert!(noll_to_nm(0).is_err());
    }

    #[test]
    fn explicit_low_order_terms() {
        assert_eq!(zernike_term(1, 0.3, 1.2).unwrap(), 1.0);
        assert!((zernike_term(4, 1.0, 0.4).unwrap() - 3f64.sqrt()).abs() < 1e-14);
        assert_eq!(zernike_term(2, 0.0, 0.7).unwrap(), 0.0);
        let (r, t) = (0.6, 0.9);
        assert!((zernike_term(2, r, t).unwrap() - 2.0 * r * t.cos()).abs() < 1e-14);
        assert!((zernike_term(3, r, t).unwrap() - 2.0 * r * t.sin()).abs() < 1e-14);
        let z11 = 5f64.sqrt() * (6.0 * r.powi(4) - 6.0 * r * r + 1.0);
        assert!((zernike_term(11, r, t).unwrap() - z11).abs() < 1e-13);
        assert!(zernike_term(0, 0.5, 0.0).is_err());
        assert!(zernike_term(3, 1.5, 0.0).is_err());
    }

    #[test]
    fn recurrence_matches_factorial_sum() {
        for n in 0..=14 {
            for m in 0..=n {
                for &r in &[0.0, 0.13, 0.5, 0.77, 0.99, 1.0] {
                    let a = radial(n, m, r);
                    let b = radial_oracle(n, m, r);
                    assert!((a - b).abs() < 1e-10, "R_{n}^{m}({r}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn recurrence_stays_bounded_at_high_order() {
        // |R_n^m(r)| <= 1 on the unit disk, up to Noll index 36 and beyond
        for j in 1..=66 {
            let (n, m) = noll_to_nm(j).unwrap();
            for i in 0..=50 {
                let r = i as f64 / 50.0;
                let v = radial(n, m.unsigned_abs() as usize, r);
                assert!(v.abs() <= 1.0 + 1e-12, "j = {j}, r = {r}, R = {v}");
            }
            assert!((radial(n, m.unsigned_abs() as usize, 1.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_piston_maps() {
        let grid = Grid::square(16).unwrap();
        let spec = ZernikeSpec::new(vec![0.0; 5], 8.0).unwrap();
        let w = phase_map(&spec, grid).unwrap();
        assert!(w.phase.values().iter().all(|&v| v == 0.0));

        let spec = ZernikeSpec::new(vec![0.75], 8.0).unwrap();
        let w = phase_map(&spec, grid).unwrap();
        for (v, &inside) in w.phase.values().iter().zip(&w.mask) {
            assert_eq!(*v, if inside { 0.75 } else { 0.0 });
        }
        assert!(w.mask[0]);
        assert!(!w.mask[grid.index(8, 8)]);
    }

    #[test]
    fn phase_map_matches_termwise_sum() {
        let grid = Grid::square(32).unwrap();
        let coeffs = sample_coefficients(8, 42).unwrap();
        let spec = ZernikeSpec::new(coeffs.clone(), 16.0).unwrap();
        let w = phase_map(&spec, grid).unwrap();
        for row in 0..32 {
            for col in 0..32 {
                let ky = if row >= 16 { row as f64 - 32.0 } else { row as f64 };
                let kx = if col >= 16 { col as f64 - 32.0 } else { col as f64 };
                let r = (ky * ky + kx * kx).sqrt() / 16.0;
                let theta = ky.atan2(kx);
                let mut expected = 0.0;
                if r <= 1.0 {
                    for (i, a) in coeffs.iter().enumerate() {
                        let (n, m) = noll_to_nm(i + 1).unwrap();
                        let am = m.unsigned_abs() as usize;
                        let norm = if m == 0 { ((n + 1) as f64).sqrt() } else { (2.0 * (n + 1) as f64).sqrt() };
                        let ang = match m.signum() {
                            0 => 1.0,
                            1 => (am as f64 * theta).cos(),
                            _ => (am as f64 * theta).sin(),
                        };
                        expected += a * norm * radial_oracle(n, am, r) * ang;
                    }
                }
                assert!((w.phase.get(row, col) - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn phase_map_is_linear() {
        let grid = Grid::square(24).unwrap();
        let a = sample_coefficients(10, 1).unwrap();
        let b = sample_coefficients(10, 2).unwrap();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let wa = phase_map(&ZernikeSpec::new(a, 12.0).unwrap(), grid).unwrap();
        let wb = phase_map(&ZernikeSpec::new(b, 12.0).unwrap(), grid).unwrap();
        let wc = phase_map(&ZernikeSpec::new(combo, 12.0).unwrap(), grid).unwrap();
        for i in 0..grid.len() {
            let lin = 2.0 * wa.phase.values()[i] - 0.5 * wb.phase.values()[i];
            assert!((wc.phase.values()[i] - lin).abs() <= 1e-12);
        }
    }

    #[test]
    fn radius_must_fit_in_grid() {
        let grid = Grid::square(16).unwrap();
        let spec = ZernikeSpec::new(vec![1.0], 8.5).unwrap();
        assert!(matches!(phase_map(&spec, grid), Err(Error::Domain(_))));
        assert!(ZernikeSpec::new(vec![], 4.0).is_err());
        assert!(ZernikeSpec::new(vec![1.0], 0.0).is_err());
        assert!(ZernikeSpec::new(vec![f64::NAN], 4.0).is_err());
    }

    #[test]
    fn pupil_is_unit_modulus() {
        let grid = Grid::square(8).unwrap();
        let p = pupil_from_phase(&RealImage::zeros(grid));
        assert!(p.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let p = pupil_from_phase(&RealImage::constant(grid, PI));
        assert!(p.values().iter().all(|v| (v + 1.0).norm() < 1e-15));

        let spec = ZernikeSpec::new(sample_coefficients(24, 9).unwrap(), 4.0).unwrap();
        let p = pupil_from_phase(&phase_map(&spec, grid).unwrap().phase);
        assert!(p.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn coefficient_sampling() {
        let a = sample_coefficients(24, 5).unwrap();
        assert_eq!(a, sample_coefficients(24, 5).unwrap());
        assert_ne!(a, sample_coefficients(24, 6).unwrap());
        assert_eq!(a.len(), 24);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(sample_coefficients(0, 5).is_err());

        let many = sample_coefficients(100_000, 17).unwrap();
        let mean = many.iter().sum::<f64>() / many.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn discrete_orthogonality_on_fine_grid() {
        let grid = Grid::square(512).unwrap();
        let radius = 256.0;
        let count = 15;
        let mut samples: Vec<Vec<f64>> = vec![Vec::new(); count];
        for row in 0..512 {
            for col in 0..512 {
                let (r, theta) = disk_coords(grid, row, col, radius);
                if r <= 1.0 {
                    for (j, s) in samples.iter_mut().enumerate() {
                        s.push(zernike_term(j + 1, r, theta).unwrap());
                    }
                }
            }
        }
        for j in 0..count {
            let norm: f64 = samples[j].iter().map(|v| v * v).sum();
            for k in 0..count {
                let inner: f64 = samples[j].iter().zip(&samples[k]).map(|(a, b)| a * b).sum();
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((inner / norm - expected).abs() <= 0.02, "<z{}, z{}>", j + 1, k + 1);
            }
        }
    }
}
