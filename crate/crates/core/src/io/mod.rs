//! On-disk formats: binary array files and PNG figure export.

mod array;
mod figure;

pub use self::array::{
    decode_array, encode_array, read_array, read_complex, read_real, write_complex, write_real, ArrayData,
    ArrayHeader, DType,
};
pub use self::figure::{export_png, quantize, sidecar_path, ExportOptions, PngSidecar};
