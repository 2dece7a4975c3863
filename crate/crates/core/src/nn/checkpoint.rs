//! Encoder checkpoints: architecture plus `f32` parameters in one file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"CKPT"
//! u32    spec length        | JSON-encoded EncoderSpec
//! u32    parameter count
//! per parameter:
//!   u32  name length        | UTF-8 name
//!   u32  ndim, then u32 per dimension
//!   f32  data, row-major
//! ```
//!
//! Parameters are stored in insertion order and restored in the same
//! order, so save/load round-trips bit-exactly. Loading validates the
//! parameter list against the layout the stored encoder shape implies.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::encoder::{Encoder, EncoderSpec};
use crate::nn::params::ParamSet;
use crate::nn::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CKPT";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: EncoderSpec,
    pub params: ParamSet<f32>,
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    let spec_json =
        serde_json::to_vec(&ckpt.spec).map_err(|e| Error::Validation(e.to_string()))?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(spec_json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&spec_json).map_err(io)?;
    w.write_all(&(ckpt.params.entries().len() as u32).to_le_bytes())
        .map_err(io)?;
    for e in ckpt.params.entries() {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name).map_err(io)?;
        w.write_all(&(e.value.shape().len() as u32).to_le_bytes())
            .map_err(io)?;
        for &d in e.value.shape() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
        }
        for &v in e.value.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic, not a checkpoint file"));
    }
    let spec_len = read_u32(&mut r, path)? as usize;
    let mut spec_buf = vec![0u8; spec_len];
    read_exact(&mut r, &mut spec_buf, path)?;
    let spec: EncoderSpec = serde_json::from_slice(&spec_buf)
        .map_err(|e| Error::format(path, format!("bad spec json: {e}")))?;

    let n = read_u32(&mut r, path)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..n {
        let name_len = read_u32(&mut r, path)? as usize;
        let mut name_buf = vec![0u8; name_len];
        read_exact(&mut r, &mut name_buf, path)?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::format(path, "parameter name is not utf-8"))?;
        let ndim = read_u32(&mut r, path)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r, path)? as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        let mut buf = [0u8; 4];
        for _ in 0..count {
            read_exact(&mut r, &mut buf, path)?;
            data.push(f32::from_le_bytes(buf));
        }
        let tensor = Tensor::from_vec(&shape, data)?;
        params.insert(&name, tensor)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after parameters"));
    }

    // the stored parameters must match the encoder shape exactly
    let enc = Encoder::new(spec.clone())?;
    let layout = enc.param_layout();
    if layout.len() != params.entries().len() {
        return Err(Error::format(
            path,
            format!(
                "checkpoint has {} parameters but the encoder shape implies {}",
                params.entries().len(),
                layout.len()
            ),
        ));
    }
    for ((name, shape), entry) in layout.iter().zip(params.entries()) {
        if *name != entry.name || shape != entry.value.shape() {
            return Err(Error::format(
                path,
                format!(
                    "parameter {:?} with shape {:?} does not match expected {:?} {:?}",
                    entry.name,
                    entry.value.shape(),
                    name,
                    shape
                ),
            ));
        }
    }
    Ok(Checkpoint { spec, params })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(path, "file is truncated")
        } else {
            Error::io(path, e)
        }
    })
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path)?;
    Ok(u32::from_le_bytes(buf))
}
