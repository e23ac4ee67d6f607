//! Raw volume and label-map files.
//!
//! Volume layout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..8  | `HMRFVOL1` |
//! | 8..20 | extents as three `u32`, slowest axis first |
//! | 20..24 | element code `u32`: 0 = `u8`, 1 = `f32` |
//! | 24..  | payload, row-major (last extent fastest) |
//!
//! Label maps use the same header with magic `HMRFLBL1` and element code 0,
//! a `u8` payload, and a trailing `u32` label count `K`.

use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::lattice::GridShape;
use crate::map_icm::LabelField;
use crate::observation::ObservationField;

pub const VOLUME_MAGIC: &[u8; 8] = b"HMRFVOL1";
pub const LABEL_MAGIC: &[u8; 8] = b"HMRFLBL1";
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    U8,
    F32,
}

impl ElementType {
    pub fn code(self) -> u32 {
        match self {
            ElementType::U8 => 0,
            ElementType::F32 => 1,
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::F32 => 4,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ElementType::U8),
            1 => Some(ElementType::F32),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawVolumeHeader {
    pub extents: [u32; 3],
    pub element: ElementType,
}

impl RawVolumeHeader {
    pub fn site_count(&self) -> usize {
        self.extents.iter().map(|&e| e as usize).product()
    }

    pub fn shape(&self) -> Result<GridShape> {
        GridShape::new(&self.extents.map(|e| e as usize))
    }

    fn encode(&self, magic: &[u8; 8], out: &mut Vec<u8>) {
        out.extend_from_slice(magic);
        for e in self.extents {
            out.extend_from_slice(&e.to_le_bytes());
        }
        out.extend_from_slice(&self.element.code().to_le_bytes());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl VolumeData {
    pub fn len(&self) -> usize {
        match self {
            VolumeData::U8(v) => v.len(),
            VolumeData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn element(&self) -> ElementType {
        match self {
            VolumeData::U8(_) => ElementType::U8,
            VolumeData::F32(_) => ElementType::F32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawVolume {
    pub header: RawVolumeHeader,
    pub data: VolumeData,
}

impl RawVolume {
    pub fn new(extents: [usize; 3], data: VolumeData) -> Result<Self> {
        let header = RawVolumeHeader {
            extents: extents_u32(extents)?,
            element: data.element(),
        };
        if header.site_count() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: header.site_count(),
                found: data.len(),
            });
        }
        Ok(RawVolume { header, data })
    }

    /// `f32` volume from real observations; values are rounded to `f32`.
    pub fn from_f64(extents: [usize; 3], values: &[f64]) -> Result<Self> {
        Self::new(extents, VolumeData::F32(values.iter().map(|&v| v as f32).collect()))
    }

    pub fn to_observations(&self) -> Result<ObservationField> {
        let values = match &self.data {
            VolumeData::U8(v) => v.iter().map(|&b| f64::from(b)).collect(),
            VolumeData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
        };
        ObservationField::scalar(values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * self.header.element.size());
        self.header.encode(VOLUME_MAGIC, &mut out);
        match &self.data {
            VolumeData::U8(v) => out.extend_from_slice(v),
            VolumeData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }
}

/// Rounds to the nearest integer and clamps into `0..=255`.
pub fn quantize_u8(values: &[f64]) -> Vec<u8> {
    values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}

fn extents_u32(extents: [usize; 3]) -> Result<[u32; 3]> {
    let mut out = [0u32; 3];
    for (o, &e) in out.iter_mut().zip(&extents) {
        *o = u32::try_from(e).map_err(|_| Error::InvalidShape(format!("extent {e} exceeds u32")))?;
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Format {
            offset: bytes.len(),
            message: format!("truncated at byte {}, expected u32 at {offset}", bytes.len()),
        })
}

fn parse_header(bytes: &[u8], magic: &[u8; 8]) -> Result<RawVolumeHeader> {
    match bytes.get(..8) {
        Some(m) if m == magic => {}
        Some(_) => {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
            })
        }
        None => {
            return Err(Error::Format {
                offset: bytes.len(),
                message: "file shorter than magic".into(),
            })
        }
    }
    let extents = [u32_at(bytes, 8)?, u32_at(bytes, 12)?, u32_at(bytes, 16)?];
    let code = u32_at(bytes, 20)?;
    let element = ElementType::from_code(code).ok_or(Error::Format {
        offset: 20,
        message: format!("unknown element code {code}"),
    })?;
    if extents.contains(&0) {
        return Err(Error::Format {
            offset: 8,
            message: "zero extent".into(),
        });
    }
    Ok(RawVolumeHeader { extents, element })
}

fn payload<'a>(bytes: &'a [u8], header: &RawVolumeHeader, trailing: usize) -> Result<&'a [u8]> {
    let len = header.site_count() * header.element.size();
    let end = HEADER_LEN + len;
    if bytes.len() < end + trailing {
        return Err(Error::Format {
            offset: bytes.len(),
            message: format!("truncated payload, expected {} bytes", end + trailing),
        });
    }
    if bytes.len() > end + trailing {
        return Err(Error::Format {
            offset: end + trailing,
            message: "trailing bytes after payload".into(),
        });
    }
    Ok(&bytes[HEADER_LEN..end])
}

pub fn parse_volume(bytes: &[u8]) -> Result<RawVolume> {
    let header = parse_header(bytes, VOLUME_MAGIC)?;
    let body = payload(bytes, &header, 0)?;
    let data = match header.element {
        ElementType::U8 => VolumeData::U8(body.to_vec()),
        ElementType::F32 => VolumeData::F32(
            body.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        ),
    };
    Ok(RawVolume { header, data })
}

pub fn read_volume(path: &Path) -> Result<RawVolume> {
    parse_volume(&read_file(path)?)
}

pub fn write_volume(path: &Path, volume: &RawVolume) -> Result<()> {
    write_file(path, &volume.to_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub extents: [u32; 3],
    pub labels: LabelField,
}

impl LabelMap {
    pub fn new(extents: [usize; 3], labels: LabelField) -> Result<Self> {
        let extents = extents_u32(extents)?;
        let n: usize = extents.iter().map(|&e| e as usize).product();
        if n != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        if labels.num_labels() > 256 {
            return Err(Error::InvalidConfig(format!(
                "label maps hold at most 256 labels, got {}",
                labels.num_labels()
            )));
        }
        Ok(LabelMap { extents, labels })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = RawVolumeHeader {
            extents: self.extents,
            element: ElementType::U8,
        };
        let mut out = Vec::with_capacity(HEADER_LEN + self.labels.len() + 4);
        header.encode(LABEL_MAGIC, &mut out);
        out.extend(self.labels.as_slice().iter().map(|&l| l as u8));
        out.extend_from_slice(&(self.labels.num_labels() as u32).to_le_bytes());
        out
    }
}

pub fn parse_label_map(bytes: &[u8]) -> Result<LabelMap> {
    let header = parse_header(bytes, LABEL_MAGIC)?;
    if header.element != ElementType::U8 {
        return Err(Error::Format {
            offset: 20,
            message: "label maps must use u8 elements".into(),
        });
    }
    let body = payload(bytes, &header, 4)?;
    let k_offset = HEADER_LEN + body.len();
    let k = u32_at(bytes, k_offset)? as usize;
    if let Some(pos) = body.iter().position(|&l| l as usize >= k) {
        return Err(Error::Format {
            offset: HEADER_LEN + pos,
            message: format!("label {} not below K = {k}", body[pos]),
        });
    }
    let labels = LabelField::new(body.iter().map(|&l| l as usize).collect(), k.max(1))?;
    Ok(LabelMap {
        extents: header.extents,
        labels,
    })
}

pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    parse_label_map(&read_file(path)?)
}

pub fn write_label_map(path: &Path, map: &LabelMap) -> Result<()> {
    write_file(path, &map.to_bytes())
}
