//! Images to RGBA bytes for `ImageData`.

use std::f64::consts::PI;

use ca_deconv::field::fftshift;
use ca_deconv::RealImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// Min-max normalized gray.
    Linear,
    /// Gray on a logarithmic scale spanning three decades below the maximum.
    Log,
    /// Cyclic hue for values in radians.
    Phase,
}

/// Row-major RGBA, four bytes per pixel. `centered` moves index (0, 0) to the
/// middle of the picture, for spectra and PSFs.
pub fn rgba(image: &RealImage, scale: Scale, centered: bool) -> Vec<u8> {
    let grid = image.grid();
    let values = if centered {
        fftshift(grid, image.values())
    } else {
        image.values().to_vec()
    };
    let (lo, hi) = (image.min(), image.max());
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        let px = match scale {
            Scale::Linear => gray(if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }),
            Scale::Log => gray(if hi > 0.0 { (1.0 + (v.max(0.0) / hi).max(1e-3).log10() / 3.0).clamp(0.0, 1.0) } else { 0.0 }),
            Scale::Phase => hue((v + PI).rem_euclid(2.0 * PI) / (2.0 * PI)),
        };
        out.extend_from_slice(&px);
    }
    out
}

fn gray(t: f64) -> [u8; 4] {
    let g = (t * 255.0).round() as u8;
    [g, g, g, 255]
}

/// Fully saturated hue, `t` in [0, 1).
fn hue(t: f64) -> [u8; 4] {
    let h = t * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let byte = |c: f64| (c * 255.0).round() as u8;
    [byte(r), byte(g), byte(b), 255]
}
