//! MetaImage-style single-file volume I/O.
//!
//! Text header (`Key = Value` lines) followed by the raw little-endian
//! payload in x-fastest order. Scalar volumes use `ElementType = MET_FLOAT`
//! (32-bit IEEE-754), label volumes `MET_UCHAR`. `ElementDataFile = LOCAL`
//! terminates the header.

use super::{Dims, LabelVolume, ScalarVolume, Spacing};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub enum MhdVolume {
    Scalar(ScalarVolume),
    Label(LabelVolume),
}

fn write_header(
    w: &mut impl Write,
    dims: Dims,
    spacing: Spacing,
    element_type: &str,
) -> std::io::Result<()> {
    writeln!(w, "ObjectType = Image")?;
    writeln!(w, "NDims = 3")?;
    writeln!(w, "DimSize = {} {} {}", dims.nx, dims.ny, dims.nz)?;
    writeln!(w, "ElementSpacing = {} {} {}", spacing.dx, spacing.dy, spacing.dz)?;
    writeln!(w, "ElementType = {element_type}")?;
    writeln!(w, "ElementDataFile = LOCAL")
}

impl ScalarVolume {
    /// Write as `MET_FLOAT`. Values are stored at 32-bit precision.
    pub fn write_mhd(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        write_header(&mut w, self.dims(), self.spacing(), "MET_FLOAT")?;
        for &v in self.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_mhd(path: impl AsRef<Path>) -> Result<Self> {
        match read_mhd(path.as_ref())? {
            MhdVolume::Scalar(v) => Ok(v),
            MhdVolume::Label(_) => Err(Error::parse(
                path.as_ref().display().to_string(),
                "ElementType: expected MET_FLOAT for a scalar volume, found MET_UCHAR",
            )),
        }
    }
}

impl LabelVolume {
    pub fn write_mhd(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        write_header(&mut w, self.dims(), self.spacing(), "MET_UCHAR")?;
        w.write_all(self.data())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_mhd(path: impl AsRef<Path>) -> Result<Self> {
        match read_mhd(path.as_ref())? {
            MhdVolume::Label(l) => Ok(l),
            MhdVolume::Scalar(_) => Err(Error::parse(
                path.as_ref().display().to_string(),
                "ElementType: expected MET_UCHAR for a label volume, found MET_FLOAT",
            )),
        }
    }
}

/// Read either volume kind, dispatching on `ElementType`.
pub fn read_mhd(path: impl AsRef<Path>) -> Result<MhdVolume> {
    let path = path.as_ref();
    let loc = || path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);

    let mut dims: Option<Dims> = None;
    let mut spacing: Option<Spacing> = None;
    let mut element_type: Option<String> = None;
    let mut saw_object_type = false;

    loop {
        let line = read_header_line(&mut r)
            .map_err(|_| Error::parse(loc(), "header ended before ElementDataFile"))?;
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::parse(loc(), format!("malformed header line {line:?}")))?;
        match key {
            "ObjectType" => {
                if value != "Image" {
                    return Err(Error::parse(loc(), format!("ObjectType: expected Image, got {value}")));
                }
                saw_object_type = true;
            }
            "NDims" => {
                if value != "3" {
                    return Err(Error::parse(loc(), format!("NDims: expected 3, got {value}")));
                }
            }
            "DimSize" => {
                let parts = parse_triple::<usize>(value)
                    .ok_or_else(|| Error::parse(loc(), format!("DimSize: expected three integers, got {value:?}")))?;
                dims = Some(
                    Dims::new(parts[0], parts[1], parts[2])
                        .map_err(|e| Error::parse(loc(), format!("DimSize: {e}")))?,
                );
            }
            "ElementSpacing" => {
                let parts = parse_triple::<f64>(value).ok_or_else(|| {
                    Error::parse(loc(), format!("ElementSpacing: expected three reals, got {value:?}"))
                })?;
                spacing = Some(
                    Spacing::new(parts[0], parts[1], parts[2])
                        .map_err(|e| Error::parse(loc(), format!("ElementSpacing: {e}")))?,
                );
            }
            "ElementType" => match value {
                "MET_FLOAT" | "MET_UCHAR" => element_type = Some(value.to_string()),
                other => {
                    return Err(Error::parse(loc(), format!("ElementType: unsupported type {other}")));
                }
            },
            "ElementDataFile" => {
                if value != "LOCAL" {
                    return Err(Error::parse(
                        loc(),
                        format!("ElementDataFile: only LOCAL payloads are supported, got {value}"),
                    ));
                }
                break;
            }
            other => {
                return Err(Error::parse(loc(), format!("unknown header key {other}")));
            }
        }
    }

    if !saw_object_type {
        return Err(Error::parse(loc(), "missing ObjectType"));
    }
    let dims = dims.ok_or_else(|| Error::parse(loc(), "missing DimSize"))?;
    let spacing = spacing.ok_or_else(|| Error::parse(loc(), "missing ElementSpacing"))?;
    let element_type = element_type.ok_or_else(|| Error::parse(loc(), "missing ElementType"))?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let elem_size = if element_type == "MET_FLOAT" { 4 } else { 1 };
    let expected = dims.len() * elem_size;
    if payload.len() != expected {
        return Err(Error::parse(
            loc(),
            format!(
                "DimSize: payload holds {} bytes but DimSize {}x{}x{} with {} requires {}",
                payload.len(),
                dims.nx,
                dims.ny,
                dims.nz,
                element_type,
                expected
            ),
        ));
    }

    if element_type == "MET_FLOAT" {
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let v = ScalarVolume::from_data(dims, spacing, data)
            .map_err(|e| Error::parse(loc(), format!("payload: {e}")))?;
        Ok(MhdVolume::Scalar(v))
    } else {
        let l = LabelVolume::from_data(dims, spacing, payload)
            .map_err(|e| Error::parse(loc(), format!("payload: {e}")))?;
        Ok(MhdVolume::Label(l))
    }
}

/// Read one text line of the header without consuming payload bytes.
fn read_header_line(r: &mut impl Read) -> std::io::Result<String> {
    let mut buf = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "eof in header",
            ));
        }
        if byte[0] == b'\n' {
            break;
        }
        buf.push(byte[0]);
        if buf.len() > 4096 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "header line too long",
            ));
        }
    }
    String::from_utf8(buf)
        .map(|s| s.trim_end_matches('\r').to_string())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, "non-utf8 header"))
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Option<[T; 3]> {
    let mut it = s.split_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    let c = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some([a, b, c])
}
