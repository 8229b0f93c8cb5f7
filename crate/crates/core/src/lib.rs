//! Single-shot blind deconvolution through phase aberrations with a coded
//! aperture on the pupil plane.
//!
//! The crate covers the whole pipeline: a discrete Fourier-optics forward
//! model ([`forward`]), Zernike aberrations ([`zernike`]), random binary
//! apertures ([`aperture`]), the PIE-style joint object/pupil solver
//! ([`pie`]), registered PSNR ([`metrics`]) and the file formats and
//! experiment runner behind the command-line tool ([`io`], [`experiment`]).

pub mod aperture;
pub mod error;
pub mod experiment;
pub mod field;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod object;
pub mod pie;
pub mod preprocess;
pub mod zernike;

pub use error::{Error, Result};
pub use field::{ComplexField, Grid, RealImage};
