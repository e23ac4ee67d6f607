//! File formats: raw volumes, label maps, portable anymaps and energy traces.
//!
//! All binary numerics are little-endian.

mod pnm;
mod raw;

use std::fs;
use std::path::Path;

pub use pnm::{
    decode_label_raster, load_color_image, load_image, palette_color, parse_pnm, read_label_raster,
    render_labels, write_label_raster, write_ppm, Image,
};
pub use raw::{
    parse_label_map, parse_volume, quantize_u8, read_label_map, read_volume, write_label_map,
    write_volume, ElementType, LabelMap, RawVolume, RawVolumeHeader, VolumeData, LABEL_MAGIC,
    VOLUME_MAGIC,
};

use crate::error::{Error, Result};
use crate::map_icm::EnergyTrace;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_trace(path: &Path, trace: &EnergyTrace) -> Result<()> {
    write_file(path, trace.to_csv().as_bytes())
}

pub fn read_trace(path: &Path) -> Result<EnergyTrace> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Format {
        offset: e.utf8_error().valid_up_to(),
        message: "trace is not UTF-8".into(),
    })?;
    EnergyTrace::from_csv(&text)
}
