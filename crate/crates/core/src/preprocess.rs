//! Digital preprocessing of raw sensor frames: block-mean downsampling followed
//! by a centred square crop.

use crate::error::{Error, Result};
use crate::field::{Grid, RealImage};

/// Averages non-overlapping `factor x factor` blocks (trailing rows/columns
/// that do not fill a block are dropped), then keeps the central `crop x crop`
/// window.
pub fn preprocess(raw: &RealImage, factor: usize, crop: usize) -> Result<RealImage> {
    if factor < 1 {
        return Err(Error::config("downsampling factor must be >= 1"));
    }
    let src = raw.grid();
    let (h, w) = (src.height() / factor, src.width() / factor);
    if crop < 2 || crop > h || crop > w {
        return Err(Error::config(format!(
            "crop {crop} does not fit the {w}x{h} downsampled frame"
        )));
    }
    let norm = 1.0 / (factor * factor) as f64;
    let top = (h - crop) / 2;
    let left = (w - crop) / 2;
    let out = Grid::square(crop)?;
    Ok(RealImage::from_fn(out, |row, col| {
        let (r0, c0) = ((row + top) * factor, (col + left) * factor);
        let mut acc = 0.0;
        for r in r0..r0 + factor {
            for c in c0..c0 + factor {
                acc += raw.get(r, c);
            }
        }
        acc * norm
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_at_factor_one() {
        let grid = Grid::new(5, 5).unwrap();
        let img = RealImage::from_fn(grid, |r, c| (r * 5 + c) as f64);
        assert_eq!(preprocess(&img, 1, 5).unwrap(), img);
    }

    #[test]
    fn block_means_of_600_frame() {
        let grid = Grid::square(600).unwrap();
        let img = RealImage::from_fn(grid, |r, c| (r * 600 + c) as f64);
        let out = preprocess(&img, 3, 200).unwrap();
        assert_eq!(out.grid(), Grid::square(200).unwrap());
        // downsampled frame is exactly 200x200, so no offset; block (0,0) mean is the centre pixel
        assert_eq!(out.get(0, 0), img.get(1, 1));
        assert_eq!(out.get(17, 42), img.get(17 * 3 + 1, 42 * 3 + 1));
    }

    #[test]
    fn centred_crop() {
        let grid = Grid::square(12).unwrap();
        let img = RealImage::from_fn(grid, |r, c| (r * 12 + c) as f64);
        let out = preprocess(&img, 2, 2).unwrap();
        // 6x6 downsampled, crop offset 2
        let mean = (img.get(4, 4) + img.get(4, 5) + img.get(5, 4) + img.get(5, 5)) / 4.0;
        assert_eq!(out.get(0, 0), mean);
    }

    #[test]
    fn constants_survive() {
        let img = RealImage::constant(Grid::new(31, 20).unwrap(), 0.7);
        let out = preprocess(&img, 3, 6).unwrap();
        assert!(out.values().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn invalid_arguments() {
        let img = RealImage::zeros(Grid::square(9).unwrap());
        assert!(matches!(preprocess(&img, 0, 3), Err(Error::Config(_))));
        assert!(preprocess(&img, 3, 4).is_err());
        assert!(preprocess(&img, 3, 1).is_err());
        assert!(preprocess(&img, 10, 2).is_err());
    }
}
