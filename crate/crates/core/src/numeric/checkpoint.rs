//! Binary checkpoint format.
//!
//! ```text
//! "DEMO-CKPT"            9 bytes magic
//! version                u32 LE
//! in_dim hidden out_dim  3 × u64 LE
//! metadata length        u32 LE, followed by that many UTF-8 bytes of
//!                        `key=value` lines (empty for a bare network)
//! tensors                f64 LE, w1 w2 w3 b1 b2 b3, row-major
//! ```

use std::io::{Read, Write};

use super::matrix::Matrix;
use super::mlp::MlpParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 9] = b"DEMO-CKPT";
pub const FORMAT_VERSION: u32 = 1;

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        path: "<checkpoint>".into(),
        reason: reason.into(),
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &MlpParams, metadata: &[(String, String)]) -> Result<()> {
    params.validate()?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for d in [params.in_dim(), params.hidden_dim(), params.out_dim()] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut meta = String::new();
    for (k, v) in metadata {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(bad(format!("metadata entry {k:?} is not a single key=value line")));
        }
        meta.push_str(k);
        meta.push('=');
        meta.push_str(v);
        meta.push('\n');
    }
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    for t in params.tensors() {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(MlpParams, Vec<(String, String)>)> {
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = usize::try_from(read_u64(&mut r)?).map_err(|_| bad("dimension overflow"))?;
    }
    let [i, h, o] = dims;
    if i == 0 || h == 0 || o == 0 || h > 1 << 20 || i > 1 << 24 || o > 1 << 24 {
        return Err(bad(format!("implausible dims {i}/{h}/{o}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta = String::from_utf8(meta).map_err(|_| bad("metadata is not utf-8"))?;
    let metadata = meta
        .lines()
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| bad(format!("metadata line {l:?}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let w1 = Matrix::from_vec(h, i, read_f64s(&mut r, h * i)?)?;
    let w2 = Matrix::from_vec(h, h, read_f64s(&mut r, h * h)?)?;
    let w3 = Matrix::from_vec(o, h, read_f64s(&mut r, o * h)?)?;
    let b1 = read_f64s(&mut r, h)?;
    let b2 = read_f64s(&mut r, h)?;
    let b3 = read_f64s(&mut r, o)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    let params = MlpParams { w1, w2, w3, b1, b2, b3 };
    params.validate()?;
    Ok((params, metadata))
}

pub fn save(path: &std::path::Path, params: &MlpParams, metadata: &[(String, String)]) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params, metadata)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<(MlpParams, Vec<(String, String)>)> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice()).map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}
