//! `AMCD` dataset files.
//!
//! Layout (little-endian): magic `AMCD`, version `u16`, frame length `u32`,
//! class count `u8`, frame count `u64`; then per frame a label `u8`, an SNR
//! `i8` and `2 * frame_len` `f32` values, I row then Q row. The clean
//! component is not stored.

use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{ModulationScheme, SignalFrame};

pub const DATASET_MAGIC: &[u8; 4] = b"AMCD";
pub const DATASET_VERSION: u16 = 1;
pub const DATASET_HEADER_LEN: usize = 19;

pub fn write_dataset<T: Scalar, W: Write>(ds: &Dataset<T>, mut w: W) -> Result<()> {
    let len = ds.meta.frame_len;
    let classes = u8::try_from(ds.class_count())
        .map_err(|_| Error::Config("class count exceeds 255".into()))?;
    let len32 = u32::try_from(len).map_err(|_| Error::Config("frame length exceeds u32".into()))?;
    for (i, f) in ds.frames.iter().enumerate() {
        if f.iq.len() != 2 * len {
            return Err(Error::Length(format!(
                "frame {i} has {} values, expected {}",
                f.iq.len(),
                2 * len
            )));
        }
        if i8::try_from(f.snr_db).is_err() {
            return Err(Error::Config(format!("frame {i} SNR {} does not fit i8", f.snr_db)));
        }
    }
    let mut header = Vec::with_capacity(DATASET_HEADER_LEN);
    header.extend_from_slice(DATASET_MAGIC);
    header.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    header.extend_from_slice(&len32.to_le_bytes());
    header.push(classes);
    header.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(2 + 8 * len);
    for f in &ds.frames {
        buf.clear();
        buf.push(f.label);
        buf.push(f.snr_db as i8 as u8);
        for v in &f.iq {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format {
            offset: *offset,
            reason: format!("truncated while reading {what}"),
        },
        _ => Error::Io(e),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

/// Decodes a whole file. Metadata not stored on disk (seed, scheme names)
/// is reconstructed: schemes are the first `class_count` canonical schemes
/// and the SNR list is the sorted set present in the frames.
pub fn read_dataset<T: Scalar, R: Read>(mut r: R) -> Result<Dataset<T>> {
    let mut off = 0u64;
    let mut h = [0u8; DATASET_HEADER_LEN];
    read_exact_at(&mut r, &mut h, &mut off, "header")?;
    if &h[0..4] != DATASET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad magic, expected AMCD".into(),
        });
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != DATASET_VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let len = u32::from_le_bytes([h[6], h[7], h[8], h[9]]) as usize;
    let classes = h[10] as usize;
    let count = u64::from_le_bytes(h[11..19].try_into().expect("8 bytes"));
    if classes > ModulationScheme::ALL.len() {
        return Err(Error::Format {
            offset: 10,
            reason: format!("class count {classes} exceeds known schemes"),
        });
    }
    let mut frames = Vec::new();
    let mut buf = vec![0u8; 2 + 8 * len];
    for _ in 0..count {
        let start = off;
        read_exact_at(&mut r, &mut buf, &mut off, "frame")?;
        let label = buf[0];
        let snr = buf[1] as i8 as i32;
        if label as usize >= classes {
            return Err(Error::Format {
                offset: start,
                reason: format!("label {label} out of range for {classes} classes"),
            });
        }
        let iq = buf[2..]
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        frames.push(SignalFrame::new(iq, label, snr));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format {
            offset: off,
            reason: "trailing bytes after last frame".into(),
        });
    }
    let mut snrs: Vec<i32> = frames.iter().map(|f| f.snr_db).collect();
    snrs.sort_unstable();
    snrs.dedup();
    Ok(Dataset::new(
        frames,
        DatasetMeta {
            seed: 0,
            schemes: ModulationScheme::ALL[..classes].to_vec(),
            snrs,
            frame_len: len,
        },
    ))
}

pub fn save_dataset<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_dataset(ds, std::io::BufWriter::new(f))
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<Dataset<T>> {
    let f = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(f))
}
