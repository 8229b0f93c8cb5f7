//! Synthetic test objects: sparse disk-shaped point sources of varying size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, RealImage};

const MAX_ATTEMPTS_PER_SOURCE: usize = 1000;

/// Parameters of the sparse point-source generator. A source of size `s`
/// covers every pixel within `s − 1` of its centre, so size 1 is a single
/// pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSources {
    pub count: usize,
    pub min_size: usize,
    pub max_size: usize,
    /// Source intensities are drawn uniformly from `[min_intensity, 1]`.
    #[serde(default = "default_min_intensity")]
    pub min_intensity: f64,
    pub seed: u64,
}

fn default_min_intensity() -> f64 {
    0.5
}

impl Default for PointSources {
    fn default() -> Self {
        PointSources {
            count: 30,
            min_size: 1,
            max_size: 5,
            min_intensity: default_min_intensity(),
            seed: 1,
        }
    }
}

impl PointSources {
    /// Same parameters with the count scaled by grid area, so that moving
    /// from a `from`-pixel side to a `to`-pixel side keeps the source density.
    pub fn rescaled(&self, from: usize, to: usize) -> PointSources {
        let area = (to * to) as f64 / (from * from).max(1) as f64;
        PointSources {
            count: ((self.count as f64 * area).round() as usize).max(1),
            ..self.clone()
        }
    }
}

/// Places non-overlapping sources (at least one empty pixel between any two,
/// measured with wrap-around) on a zero background.
pub fn generate_object(grid: Grid, params: &PointSources) -> Result<RealImage> {
    if params.count < 1 {
        return Err(Error::config("need at least one point source"));
    }
    if params.min_size < 1 || params.max_size < params.min_size {
        return Err(Error::config(format!(
            "invalid source size range {}..={}",
            params.min_size, params.max_size
        )));
    }
    if !(0.0..=1.0).contains(&params.min_intensity) {
        return Err(Error::config("min_intensity must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (h, w) = (grid.height() as i64, grid.width() as i64);
    let mut placed: Vec<(i64, i64, i64)> = Vec::with_capacity(params.count);
    let mut img = RealImage::zeros(grid);

    for i in 0..params.count {
        let radius = rng.random_range(params.min_size..=params.max_size) as i64 - 1;
        let intensity = rng.random_range(params.min_intensity..=1.0);
        let mut attempt = 0;
        let (cy, cx) = loop {
            if attempt == MAX_ATTEMPTS_PER_SOURCE {
                return Err(Error::config(format!(
                    "could not place source {} of {} without overlap on a {grid} grid",
                    i + 1,
                    params.count
                )));
            }
            attempt += 1;
            let cy = rng.random_range(0..h);
            let cx = rng.random_range(0..w);
            let clear = placed.iter().all(|&(py, px, pr)| {
                let dy = wrapped_distance(cy, py, h);
                let dx = wrapped_distance(cx, px, w);
                let gap = (radius + pr + 1) as f64;
                ((dy * dy + dx * dx) as f64).sqrt() > gap
            });
            if clear {
                break (cy, cx);
            }
        };
        placed.push((cy, cx, radius));
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dy * dy + dx * dx <= radius * radius {
                    let r = (cy + dy).rem_euclid(h) as usize;
                    let c = (cx + dx).rem_euclid(w) as usize;
                    img.set(r, c, intensity);
                }
            }
        }
    }
    Ok(img)
}

fn wrapped_distance(a: i64, b: i64, n: i64) -> i64 {
    let d = (a - b).rem_euclid(n);
    d.min(n - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_source() {
        let grid = Grid::square(16).unwrap();
        let params = PointSources { count: 1, min_size: 1, max_size: 1, min_intensity: 1.0, seed: 3 };
        let img = generate_object(grid, &params).unwrap();
        assert_eq!(img.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(img.max(), 1.0);
    }

    #[test]
    fn seeded() {
        let grid = Grid::square(64).unwrap();
        let p = PointSources::default();
        assert_eq!(generate_object(grid, &p).unwrap(), generate_object(grid, &p).unwrap());
        let q = PointSources { seed: 2, ..p.clone() };
        assert_ne!(generate_object(grid, &p).unwrap(), generate_object(grid, &q).unwrap());
    }

    #[test]
    fn default_scene_on_128_grid() {
        let grid = Grid::square(128).unwrap();
        let img = generate_object(grid, &PointSources::default()).unwrap();
        let lit = img.values().iter().filter(|&&v| v > 0.0).count();
        // a size-5 source is a radius-4 disk of 49 pixels
        assert!(lit >= 30 && lit <= 30 * 49, "{lit} lit pixels");
        assert!(img.min() >= 0.0 && img.max() <= 1.0);
    }

    #[test]
    fn sources_do_not_touch() {
        let grid = Grid::square(32).unwrap();
        let params = PointSources { count: 10, min_size: 2, max_size: 2, min_intensity: 1.0, seed: 5 };
        let img = generate_object(grid, &params).unwrap();
        // size-2 sources are 5-pixel crosses; with no overlap the lit count is exact
        assert_eq!(img.values().iter().filter(|&&v| v > 0.0).count(), 50);
    }

    #[test]
    fn crowded_grid_fails_cleanly() {
        let grid = Grid::square(8).unwrap();
        let params = PointSources { count: 40, min_size: 3, max_size: 3, min_intensity: 1.0, seed: 1 };
        assert!(matches!(generate_object(grid, &params), Err(Error::Config(_))));
        let bad = PointSources { min_size: 0, ..PointSources::default() };
        assert_eq!(PointSources::default().rescaled(128, 64).count, 8);
        assert_eq!(PointSources::default().rescaled(128, 16).count, 1);
        assert_eq!(PointSources::default().rescaled(64, 128).count, 120);
        assert!(generate_object(grid, &bad).is_err());
    }
}
