//! `FVNN` model checkpoints.
//!
//! Layout (little-endian): magic `FVNN`, version `u16`, parameterized layer
//! count `u16`, then for each layer its weight and bias tensors, each as rank
//! `u8`, dims `u32` each, and an `f32` payload.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{LayerParams, ModelParams};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FVNN";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(params: &ModelParams<T>, mut w: W) -> Result<()> {
    let count = u16::try_from(params.layers.len())
        .map_err(|_| Error::Config("too many layers for a checkpoint".into()))?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for t in params.tensors() {
        let rank = u8::try_from(t.shape().len())
            .map_err(|_| Error::Config("tensor rank exceeds 255".into()))?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::Config("tensor dim exceeds u32".into()))?;
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.as_f32().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, what)?;
        Ok(b)
    }

    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format {
                offset: self.offset,
                reason: format!("truncated while reading {what}"),
            },
            _ => Error::Io(e),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }
}

fn read_tensor<T: Scalar, R: Read>(c: &mut Cursor<R>) -> Result<Tensor<T>> {
    let [rank] = c.take::<1>("tensor rank")?;
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        shape.push(u32::from_le_bytes(c.take::<4>("tensor dim")?) as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .filter(|&n| n <= (1 << 31))
        .ok_or_else(|| Error::Format {
            offset: c.offset,
            reason: format!("implausible tensor shape {shape:?}"),
        })?;
    let mut buf = vec![0u8; n * 4];
    c.fill(&mut buf, "tensor payload")?;
    let data = buf
        .chunks_exact(4)
        .map(|b| T::of(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
        .collect();
    Tensor::from_vec(&shape, data)
}

pub fn read_checkpoint<T: Scalar, R: Read>(r: R) -> Result<ModelParams<T>> {
    let mut c = Cursor { inner: r, offset: 0 };
    if &c.take::<4>("magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad magic, expected FVNN".into(),
        });
    }
    let version = u16::from_le_bytes(c.take::<2>("version")?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let count = u16::from_le_bytes(c.take::<2>("layer count")?);
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let weight = read_tensor(&mut c)?;
        let bias = read_tensor(&mut c)?;
        layers.push(LayerParams { weight, bias });
    }
    let mut extra = [0u8; 1];
    if c.inner.read(&mut extra)? != 0 {
        return Err(Error::Format {
            offset: c.offset,
            reason: "trailing bytes after last tensor".into(),
        });
    }
    Ok(ModelParams { layers })
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(params, std::io::BufWriter::new(f))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
