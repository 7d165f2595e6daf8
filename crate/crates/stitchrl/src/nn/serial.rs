//! Versioned binary serialization for networks.
//!
//! Layout (all integers little-endian, documented in `docs/formats.md`):
//!
//! ```text
//! magic   b"STNN"
//! version u32 (currently 1)
//! layers  u32                  number of layer sizes
//! sizes   u32 * layers
//! act     u8                   0 = tanh, 1 = relu
//! params  f64 * N              per layer: row-major weights, then biases
//! ```

use std::io::{Read, Write};

use super::{Activation, MlpNet};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"STNN";
pub const VERSION: u32 = 1;

pub fn write_net(w: &mut impl Write, net: &MlpNet) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(net.layer_sizes().len() as u32).to_le_bytes())?;
    for &s in net.layer_sizes() {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&[net.activation().tag()])?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Corrupt(format!("truncated network data while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_net(r: &mut impl Read) -> Result<MlpNet> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Corrupt("bad network magic bytes".into()));
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(Error::Corrupt(format!(
            "unsupported network format version {version} (expected {VERSION})"
        )));
    }
    let n_layers = read_u32(r, "layer count")? as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(Error::Corrupt(format!("implausible layer count {n_layers}")));
    }
    let mut sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let s = read_u32(r, "layer size")? as usize;
        if s == 0 || s > 1 << 20 {
            return Err(Error::Corrupt(format!("implausible layer size {s}")));
        }
        sizes.push(s);
    }
    let mut act = [0u8; 1];
    read_exact(r, &mut act, "activation")?;
    let activation = Activation::from_tag(act[0])?;
    let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut params = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut b, "parameters")?;
        params.push(f64::from_le_bytes(b));
    }
    MlpNet::from_parts(&sizes, activation, params)
}
