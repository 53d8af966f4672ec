//! Versioned binary parameter checkpoints.
//!
//! Layout: magic `GLOM`, version u32, config digest u64, then every
//! parameter buffer in the fixed [`NetworkParams::buffers`] order as a u32
//! ndim, u32 dims, and little-endian f64 payload. Bias vectors are written
//! as 1-D tensors. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NetworkConfig, NetworkParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GLOM";
const VERSION: u32 = 1;

/// FNV-1a over the canonical config string.
fn config_digest(cfg: &NetworkConfig) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in cfg.canonical_string().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn write_tensor(w: &mut impl Write, shape: &[usize], data: &[f64]) -> std::io::Result<()> {
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_tensor(r: &mut impl Read, shape: &[usize], data: &mut [f64]) -> Result<()> {
    let bad = |what: &str| Error::Data(format!("checkpoint shape mismatch: {what}"));
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(checkpoint_io)?;
    if u32::from_le_bytes(u32buf) as usize != shape.len() {
        return Err(bad("rank"));
    }
    for &d in shape {
        r.read_exact(&mut u32buf).map_err(checkpoint_io)?;
        if u32::from_le_bytes(u32buf) as usize != d {
            return Err(bad("dimension"));
        }
    }
    let mut f64buf = [0u8; 8];
    for v in data {
        r.read_exact(&mut f64buf).map_err(checkpoint_io)?;
        *v = f64::from_le_bytes(f64buf);
    }
    Ok(())
}

fn checkpoint_io(e: std::io::Error) -> Error {
    Error::Data(format!("truncated or unreadable checkpoint: {e}"))
}

pub fn save_checkpoint(cfg: &NetworkConfig, params: &NetworkParams, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&config_digest(cfg).to_le_bytes())?;
        for l in &params.conv {
            write_tensor(&mut w, &l.weights.shape, &l.weights.data)?;
            write_tensor(&mut w, &[l.bias.len()], &l.bias)?;
        }
        for l in &params.dense {
            write_tensor(&mut w, &l.weights.shape, &l.weights.data)?;
            write_tensor(&mut w, &[l.bias.len()], &l.bias)?;
        }
        write_tensor(&mut w, &params.output.weights.shape, &params.output.weights.data)?;
        write_tensor(&mut w, &[params.output.bias.len()], &params.output.bias)?;
        w.flush()
    };
    run().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(cfg: &NetworkConfig, path: &Path) -> Result<NetworkParams> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(checkpoint_io)?;
    if &magic != MAGIC {
        return Err(Error::Data("not a GLOM checkpoint".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(checkpoint_io)?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {}",
            u32::from_le_bytes(u32buf)
        )));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(checkpoint_io)?;
    if u64::from_le_bytes(u64buf) != config_digest(cfg) {
        return Err(Error::Data(
            "checkpoint was written for a different network config".into(),
        ));
    }
    // zero template with the right shapes, then fill in place
    let mut params = NetworkParams::init(cfg, &mut crate::rng::Stream::new(0))?.zeros_like();
    for l in &mut params.conv {
        let shape = l.weights.shape.clone();
        read_exact_tensor(&mut r, &shape, &mut l.weights.data)?;
        let blen = l.bias.len();
        read_exact_tensor(&mut r, &[blen], &mut l.bias)?;
    }
    for l in &mut params.dense {
        let shape = l.weights.shape.clone();
        read_exact_tensor(&mut r, &shape, &mut l.weights.data)?;
        let blen = l.bias.len();
        read_exact_tensor(&mut r, &[blen], &mut l.bias)?;
    }
    let shape = params.output.weights.shape.clone();
    read_exact_tensor(&mut r, &shape, &mut params.output.weights.data)?;
    let blen = params.output.bias.len();
    read_exact_tensor(&mut r, &[blen], &mut params.output.bias)?;
    Ok(params)
}
