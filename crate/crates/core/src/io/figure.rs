//! 16-bit grayscale PNG export for figures. Export only: quantization makes
//! these files unsuitable for numerical interchange.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fftshift, RealImage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExportOptions {
    /// Treat values as phase: wrap to `[-π, π)` and map that interval to the
    /// full range.
    pub phase: bool,
    /// Move index `(0, 0)` to the image centre (for PSFs and pupil-plane maps).
    pub centered: bool,
}

/// Normalization written next to every PNG as `<name>.png.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PngSidecar {
    pub kind: String,
    /// Value mapped to 0.
    pub min: f64,
    /// Value mapped to 65535.
    pub max: f64,
    pub centered: bool,
}

fn wrap_phase(v: f64) -> f64 {
    (v + PI).rem_euclid(2.0 * PI) - PI
}

/// Quantizes `image` to 16 bits. Returns the samples and the bounds used.
pub fn quantize(image: &RealImage, opts: ExportOptions) -> Result<(Vec<u16>, PngSidecar)> {
    let values = if opts.centered {
        fftshift(image.grid(), image.values())
    } else {
        image.values().to_vec()
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("cannot export non-finite values"));
    }
    let (kind, min, max, values) = if opts.phase {
        ("phase", -PI, PI, values.into_iter().map(wrap_phase).collect::<Vec<_>>())
    } else {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ("intensity", min, max, values)
    };
    let span = max - min;
    let samples = values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - min) / span * 65535.0).round().clamp(0.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect();
    Ok((
        samples,
        PngSidecar {
            kind: kind.into(),
            min,
            max,
            centered: opts.centered,
        },
    ))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes a 16-bit grayscale PNG plus its JSON sidecar.
pub fn export_png(image: &RealImage, path: impl AsRef<Path>, opts: ExportOptions) -> Result<PngSidecar> {
    let path = path.as_ref();
    let (samples, sidecar) = quantize(image, opts)?;
    let grid = image.grid();
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(file, grid.width() as u32, grid.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header()?;
    let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_be_bytes()).collect();
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(sidecar)
}
