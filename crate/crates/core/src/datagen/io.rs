//! `AMCD` dataset file.
//!
//! Layout (little-endian): magic `AMCD`, u16 version = 1, u32 frame count,
//! u8 class count = 11, then the class-name table as u16-length-prefixed
//! UTF-8 strings, then per frame: u8 label, i8 SNR in dB, 256 × f32 (I row
//! then Q row). An optional trailer `SPLT` + u64 records the split seed.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Dataset, ModulationClass, SignalFrame, FRAME_LEN, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::ByteReader;

const MAGIC: &[u8; 4] = b"AMCD";
const VERSION: u16 = 1;
const SPLIT_TRAILER: &[u8; 4] = b"SPLT";

pub fn write_dataset<W: Write>(d: &Dataset, w: &mut W) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(64 + d.len() * (2 + 8 * FRAME_LEN));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(d.len() as u32).to_le_bytes());
    buf.push(NUM_CLASSES as u8);
    for c in ModulationClass::ALL {
        buf.extend_from_slice(&(c.name().len() as u16).to_le_bytes());
        buf.extend_from_slice(c.name().as_bytes());
    }
    for f in d.frames() {
        buf.push(f.label);
        buf.push(f.snr_db as u8);
        for v in &f.iq {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf.extend_from_slice(SPLIT_TRAILER);
    buf.extend_from_slice(&d.split_seed().to_le_bytes());
    w.write_all(&buf)
}

pub fn read_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::format("not an AMCD dataset (bad magic)"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    let count = r.u32()? as usize;
    let n_classes = r.u8()? as usize;
    if n_classes != NUM_CLASSES {
        return Err(Error::format(format!("expected {NUM_CLASSES} classes, found {n_classes}")));
    }
    for c in ModulationClass::ALL {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("class name is not UTF-8"))?;
        if name != c.name() {
            return Err(Error::format(format!(
                "class table mismatch: id {} is {name:?}, expected {:?}",
                c.id(),
                c.name()
            )));
        }
    }
    let frame_bytes = 2 + 4 * 2 * FRAME_LEN;
    let need = count
        .checked_mul(frame_bytes)
        .ok_or_else(|| Error::format("frame count overflow"))?;
    if r.remaining() < need {
        return Err(Error::format(format!(
            "truncated dataset: {count} frames need {need} bytes, {} present",
            r.remaining()
        )));
    }
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r.u8()?;
        let snr_db = r.u8()? as i8;
        if label as usize >= NUM_CLASSES {
            return Err(Error::format(format!("frame label {label} out of range")));
        }
        let iq = (0..2 * FRAME_LEN).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        frames.push(SignalFrame { iq, label, snr_db });
    }
    let split_seed = match r.remaining() {
        0 => 0,
        12 => {
            if r.take(4)? != SPLIT_TRAILER {
                return Err(Error::format("unknown dataset trailer"));
            }
            r.u64()?
        }
        n => return Err(Error::format(format!("{n} unexpected trailing bytes"))),
    };
    Ok(Dataset::from_frames(frames, split_seed))
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_dataset(d, &mut bytes).map_err(|e| Error::io(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_dataset(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::build_dataset;

    #[test]
    fn round_trip_is_bitwise() {
        let d = build_dataset(2, 5).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&d, &mut bytes).unwrap();
        let back = read_dataset(&bytes).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn truncation_and_header_only_fail() {
        let d = build_dataset(1, 5).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&d, &mut bytes).unwrap();
        assert!(read_dataset(&bytes[..bytes.len() - 20]).is_err());
        let header_len = 4 + 2 + 4 + 1
            + ModulationClass::ALL.iter().map(|c| 2 + c.name().len()).sum::<usize>();
        assert!(matches!(read_dataset(&bytes[..header_len]), Err(Error::Format(_))));
        assert!(read_dataset(&bytes[..3]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(read_dataset(&bad).is_err());
    }
}
