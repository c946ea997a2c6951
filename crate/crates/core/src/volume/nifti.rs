//! NIfTI-1 single-file (`.nii`, `.nii.gz`) and header/image pair I/O.
//!
//! Only the fields needed to place a 3D grid in world space are honoured:
//! `dim`, `pixdim`, `datatype`, `scl_slope`/`scl_inter`, sform rows with a
//! qform fallback, and `intent_name`, which carries the label scheme of
//! integer label maps written by this crate.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix4, Vector4};

use super::{Geometry, LabelMap, LabelScheme, Volume3D};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

/// Decoded image, either intensities or integer labels.
#[derive(Clone, Debug, PartialEq)]
pub enum NiftiImage {
    Volume(Volume3D),
    Labels(LabelMap),
}

/// Borrowed container for writing.
#[derive(Clone, Copy, Debug)]
pub enum NiftiRef<'a> {
    Volume(&'a Volume3D),
    Labels(&'a LabelMap),
}

impl<'a> From<&'a Volume3D> for NiftiRef<'a> {
    fn from(v: &'a Volume3D) -> Self {
        NiftiRef::Volume(v)
    }
}

impl<'a> From<&'a LabelMap> for NiftiRef<'a> {
    fn from(v: &'a LabelMap) -> Self {
        NiftiRef::Labels(v)
    }
}

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct HeaderView<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl HeaderView<'_> {
    fn arr<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut a = [0u8; N];
        a.copy_from_slice(&self.bytes[off..off + N]);
        if let Endian::Big = self.endian {
            a.reverse();
        }
        a
    }
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.arr(off))
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.arr(off))
    }
    fn text(&self, off: usize, len: usize) -> String {
        let raw = &self.bytes[off..off + len];
        let end = raw.iter().position(|&b| b == 0).unwrap_or(len);
        String::from_utf8_lossy(&raw[..end]).into_owned()
    }
}

struct Header {
    dims: [usize; 3],
    datatype: i16,
    pixdim: [f32; 4],
    vox_offset: usize,
    slope: f32,
    inter: f32,
    affine: Matrix4<f64>,
    intent_name: String,
    endian: Endian,
    single_file: bool,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!(
            "header needs {HEADER_SIZE} bytes, file has {}",
            bytes.len()
        )));
    }
    let size_le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let size_be = i32::from_be_bytes(bytes[0..4].try_into().unwrap());
    let endian = if size_le == HEADER_SIZE as i32 {
        Endian::Little
    } else if size_be == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::Format(format!("sizeof_hdr is {size_le}, expected 348")));
    };
    let h = HeaderView { bytes, endian };

    let magic = &bytes[344..348];
    let single_file = match magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => return Err(Error::Format(format!("bad magic {magic:?}"))),
    };

    let dim: Vec<i16> = (0..8).map(|i| h.i16(40 + 2 * i)).collect();
    let ndim = dim[0];
    let extra_ok = (4..=7).all(|i| i > ndim as usize || dim[i] == 1);
    if !(ndim == 3 || (ndim == 4 && extra_ok)) {
        return Err(Error::UnsupportedShape(format!(
            "dim[0] = {ndim}, dims {:?}",
            &dim[1..=(ndim.clamp(1, 7) as usize)]
        )));
    }
    if dim[1..=3].iter().any(|&d| d < 1) {
        return Err(Error::Format(format!("non-positive dims {:?}", &dim[1..=3])));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let datatype = h.i16(70);
    if !matches!(datatype, DT_UINT8 | DT_INT16 | DT_INT32 | DT_FLOAT32 | DT_FLOAT64) {
        return Err(Error::UnsupportedDatatype(datatype));
    }

    let pixdim = [h.f32(76), h.f32(80), h.f32(84), h.f32(88)];
    let vox_offset_f = h.f32(108);
    if !(vox_offset_f >= 0.0) || !vox_offset_f.is_finite() {
        return Err(Error::Format(format!("bad vox_offset {vox_offset_f}")));
    }
    let vox_offset = vox_offset_f as usize;
    if single_file && vox_offset < SINGLE_FILE_OFFSET {
        return Err(Error::Format(format!("vox_offset {vox_offset} inside header")));
    }

    let spacing = [1, 2, 3].map(|i| {
        let s = pixdim[i].abs() as f64;
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    });

    let qform_code = h.i16(252);
    let sform_code = h.i16(254);
    let affine = if sform_code > 0 {
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = h.f32(280 + 16 * r + 4 * c) as f64;
            }
        }
        m
    } else if qform_code > 0 {
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let (b, c, d) = (h.f32(256) as f64, h.f32(260) as f64, h.f32(264) as f64);
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let r = [
            [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
            [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
            [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
        ];
        let scale = [spacing[0], spacing[1], qfac * spacing[2]];
        let mut m = Matrix4::identity();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = r[i][j] * scale[j];
            }
        }
        m[(0, 3)] = h.f32(268) as f64;
        m[(1, 3)] = h.f32(272) as f64;
        m[(2, 3)] = h.f32(276) as f64;
        m
    } else {
        Matrix4::from_diagonal(&Vector4::new(spacing[0], spacing[1], spacing[2], 1.0))
    };

    Ok(Header {
        dims,
        datatype,
        pixdim,
        vox_offset,
        slope: h.f32(112),
        inter: h.f32(116),
        affine,
        intent_name: h.text(328, 16),
        endian,
        single_file,
    })
}

fn pair_image_path(path: &Path) -> Result<PathBuf> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Format(format!("{}: no file name", path.display())))?;
    let img = if let Some(stem) = name.strip_suffix(".hdr.gz") {
        format!("{stem}.img.gz")
    } else if let Some(stem) = name.strip_suffix(".hdr") {
        format!("{stem}.img")
    } else {
        return Err(Error::Format(format!(
            "{}: header/image pair must be named *.hdr",
            path.display()
        )));
    };
    Ok(path.with_file_name(img))
}

enum RawData {
    Int(Vec<i64>),
    Float(Vec<f32>),
}

fn decode_data(hdr: &Header, bytes: &[u8]) -> Result<RawData> {
    let n = hdr.dims[0] * hdr.dims[1] * hdr.dims[2];
    let width = match hdr.datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_INT32 | DT_FLOAT32 => 4,
        _ => 8,
    };
    let start = hdr.vox_offset;
    let end = start + n * width;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "image data needs {} bytes after offset {start}, found {}",
            n * width,
            bytes.len().saturating_sub(start)
        )));
    }
    let raw = &bytes[start..end];
    let big = matches!(hdr.endian, Endian::Big);
    macro_rules! words {
        ($t:ty, $w:expr) => {
            raw.chunks_exact($w).map(|c| {
                let a: [u8; $w] = c.try_into().unwrap();
                if big {
                    <$t>::from_be_bytes(a)
                } else {
                    <$t>::from_le_bytes(a)
                }
            })
        };
    }
    Ok(match hdr.datatype {
        DT_UINT8 => RawData::Int(raw.iter().map(|&b| b as i64).collect()),
        DT_INT16 => RawData::Int(words!(i16, 2).map(|v| v as i64).collect()),
        DT_INT32 => RawData::Int(words!(i32, 4).map(|v| v as i64).collect()),
        DT_FLOAT32 => RawData::Float(words!(f32, 4).collect()),
        _ => RawData::Float(words!(f64, 8).map(|v| v as f32).collect()),
    })
}

fn load(path: &Path) -> Result<(Header, RawData)> {
    let bytes = read_maybe_gz(path)?;
    let hdr = parse_header(&bytes)?;
    let data = if hdr.single_file {
        decode_data(&hdr, &bytes)?
    } else {
        let img = read_maybe_gz(&pair_image_path(path)?)?;
        decode_data(&hdr, &img)?
    };
    Ok((hdr, data))
}

fn geometry_of(hdr: &Header) -> Result<Geometry> {
    let spacing = [1, 2, 3].map(|i| {
        let s = hdr.pixdim[i].abs() as f64;
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    });
    Geometry::new(hdr.dims, spacing, hdr.affine)
        .map_err(|e| Error::Format(format!("invalid geometry: {e}")))
}

fn trivial_scaling(hdr: &Header) -> bool {
    hdr.slope == 0.0 || !hdr.slope.is_finite() || (hdr.slope == 1.0 && hdr.inter == 0.0)
}

fn to_floats(hdr: &Header, data: RawData) -> Vec<f32> {
    let mut vals = match data {
        RawData::Int(v) => v.into_iter().map(|x| x as f32).collect(),
        RawData::Float(v) => v,
    };
    if !trivial_scaling(hdr) {
        let (s, b) = (hdr.slope, hdr.inter);
        vals.iter_mut().for_each(|v| *v = *v * s + b);
    }
    vals
}

fn to_codes(values: impl Iterator<Item = f64>, path: &Path) -> Result<Vec<u16>> {
    values
        .map(|v| {
            if v.fract() != 0.0 || !(0.0..=u16::MAX as f64).contains(&v) {
                Err(Error::Format(format!(
                    "{}: label value {v} is not a code in 0..=65535",
                    path.display()
                )))
            } else {
                Ok(v as u16)
            }
        })
        .collect()
}

/// Reads a NIfTI-1 file. Integer data whose `intent_name` declares a label
/// scheme decodes as a [`LabelMap`]; everything else as a [`Volume3D`] with
/// `scl_slope`/`scl_inter` applied.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiImage> {
    let path = path.as_ref();
    let (hdr, data) = load(path)?;
    let geom = geometry_of(&hdr)?;
    let scheme = LabelScheme::from_name(&hdr.intent_name);
    match (&data, scheme) {
        (RawData::Int(v), Some(scheme)) if trivial_scaling(&hdr) => {
            let codes = to_codes(v.iter().map(|&x| x as f64), path)?;
            Ok(NiftiImage::Labels(LabelMap::new(geom, codes, scheme)?))
        }
        _ => Ok(NiftiImage::Volume(Volume3D::new(geom, to_floats(&hdr, data))?)),
    }
}

/// Reads any supported NIfTI-1 file as intensities.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    let (hdr, data) = load(path)?;
    let geom = geometry_of(&hdr)?;
    Volume3D::new(geom, to_floats(&hdr, data))
}

/// Reads a NIfTI-1 file as labels under `scheme`. Float data is accepted
/// when every value is a non-negative integer.
pub fn read_labels(path: impl AsRef<Path>, scheme: LabelScheme) -> Result<LabelMap> {
    let path = path.as_ref();
    let (hdr, data) = load(path)?;
    let geom = geometry_of(&hdr)?;
    let codes = match data {
        RawData::Int(v) if trivial_scaling(&hdr) => to_codes(v.into_iter().map(|x| x as f64), path)?,
        other => to_codes(to_floats(&hdr, other).into_iter().map(|x| x as f64), path)?,
    };
    LabelMap::new(geom, codes, scheme)
}

fn put(buf: &mut [u8], off: usize, bytes: &[u8]) {
    buf[off..off + bytes.len()].copy_from_slice(bytes);
}

/// Uncompressed single-file NIfTI-1 encoding.
pub fn encode_nifti<'a>(img: impl Into<NiftiRef<'a>>) -> Vec<u8> {
    let img = img.into();
    let (geom, datatype, bitpix, intent, payload): (&Geometry, i16, i16, &str, Vec<u8>) = match img
    {
        NiftiRef::Volume(v) => (
            v.geometry(),
            DT_FLOAT32,
            32,
            "",
            v.data().iter().flat_map(|x| x.to_le_bytes()).collect(),
        ),
        NiftiRef::Labels(l) => {
            let max = l.data().iter().copied().max().unwrap_or(0);
            if max <= i16::MAX as u16 {
                (
                    l.geometry(),
                    DT_INT16,
                    16,
                    l.scheme().name(),
                    l.data()
                        .iter()
                        .flat_map(|&x| (x as i16).to_le_bytes())
                        .collect(),
                )
            } else {
                (
                    l.geometry(),
                    DT_INT32,
                    32,
                    l.scheme().name(),
                    l.data()
                        .iter()
                        .flat_map(|&x| (x as i32).to_le_bytes())
                        .collect(),
                )
            }
        }
    };

    let mut h = vec![0u8; SINGLE_FILE_OFFSET];
    put(&mut h, 0, &(HEADER_SIZE as i32).to_le_bytes());
    h[39] = 0; // dim_info
    let dims = geom.dims();
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put(&mut h, 40 + 2 * i, &d.to_le_bytes());
    }
    put(&mut h, 70, &datatype.to_le_bytes());
    put(&mut h, 72, &bitpix.to_le_bytes());
    let sp = geom.spacing();
    let pixdim: [f32; 8] = [1.0, sp[0] as f32, sp[1] as f32, sp[2] as f32, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        put(&mut h, 76 + 4 * i, &p.to_le_bytes());
    }
    put(&mut h, 108, &(SINGLE_FILE_OFFSET as f32).to_le_bytes());
    put(&mut h, 112, &1f32.to_le_bytes());
    put(&mut h, 116, &0f32.to_le_bytes());
    h[123] = 2; // xyzt_units: mm
    put(&mut h, 148, b"synthfetal");
    put(&mut h, 252, &0i16.to_le_bytes()); // qform_code
    put(&mut h, 254, &2i16.to_le_bytes()); // sform_code: aligned
    let a = geom.affine();
    for r in 0..3 {
        for c in 0..4 {
            put(&mut h, 280 + 16 * r + 4 * c, &(a[(r, c)] as f32).to_le_bytes());
        }
    }
    put(&mut h, 328, intent.as_bytes());
    put(&mut h, 344, b"n+1\0");
    // bytes 348..352: empty extension flag
    h.extend_from_slice(&payload);
    h
}

/// Writes a single-file NIfTI-1, gzip-compressed when `compress` is set.
/// The file appears atomically.
pub fn write_nifti<'a>(
    img: impl Into<NiftiRef<'a>>,
    path: impl AsRef<Path>,
    compress: bool,
) -> Result<()> {
    let path = path.as_ref();
    let raw = encode_nifti(img);
    let bytes = if compress {
        let mut enc = GzEncoder::new(Vec::with_capacity(raw.len() / 4), Compression::fast());
        enc.write_all(&raw).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        raw
    };
    atomic_write(path, &bytes)
}
