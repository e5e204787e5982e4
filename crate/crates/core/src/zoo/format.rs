//! CNM1 model container.
//!
//! Layout, all integers little-endian: magic `CNM1`, u32 version, u16 name
//! length + UTF-8 architecture name, u32 tensor count; then per tensor a u16
//! name length + UTF-8 name, u8 rank, rank × u32 dims and the f32 values.
//! Leading unit dims are dropped when writing, so a bias has rank 1.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::ArchSpec;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::tensor::{Dims, Float, Rng};

pub const MODEL_MAGIC: [u8; 4] = *b"CNM1";
pub const MODEL_VERSION: u32 = 1;

fn squeezed(dims: Dims) -> Vec<usize> {
    let all = dims.as_array();
    let first = all.iter().position(|&d| d != 1).unwrap_or(3);
    all[first..].to_vec()
}

fn short_len(s: &str, what: &str) -> Result<u16> {
    u16::try_from(s.len()).map_err(|_| Error::InvalidArgument(format!("{what} longer than 65535 bytes")))
}

/// Serializes `net`'s weights as f32.
pub fn write_model<T: Float, W: Write>(net: &Network<T>, mut out: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&short_len(net.name(), "model name")?.to_le_bytes());
    buf.extend_from_slice(net.name().as_bytes());
    let names = net.param_names();
    buf.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for (name, tensor) in names.iter().zip(net.params()) {
        buf.extend_from_slice(&short_len(name, "tensor name")?.to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        let dims = squeezed(tensor.dims());
        buf.push(dims.len() as u8);
        for d in dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save<T: Float>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_model(net, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::ModelMismatch(format!("{what} is not UTF-8")))
    }
}

/// Parses a CNM1 container and rebuilds the network it names.
pub fn read_model<R: Read>(mut input: R) -> Result<Network<f32>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(Error::BadMagic { expected: MODEL_MAGIC, found: magic });
    }
    let version = cur.u32("version")?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch { expected: MODEL_VERSION, found: version });
    }
    let arch_name = cur.string("model name")?;
    let spec = ArchSpec::from_name(&arch_name)?;
    let mut net: Network<f32> = spec.build(&mut Rng::new(0))?;
    let expected_names = net.param_names();
    let count = cur.u32("tensor count")? as usize;
    if count != expected_names.len() {
        return Err(Error::ModelMismatch(format!(
            "`{arch_name}` has {} tensors, file has {count}",
            expected_names.len()
        )));
    }
    for (expected, param) in expected_names.iter().zip(net.params_mut()) {
        let name = cur.string("tensor name")?;
        if &name != expected {
            return Err(Error::ModelMismatch(format!("expected tensor `{expected}`, found `{name}`")));
        }
        let rank = cur.u8("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32("tensor dims")? as usize);
        }
        if dims != squeezed(param.dims()) {
            return Err(Error::ModelMismatch(format!(
                "tensor `{name}` has dims {dims:?}, expected {:?}",
                squeezed(param.dims())
            )));
        }
        let raw = cur.take(4 * param.len(), &format!("values of `{name}`"))?;
        for (v, chunk) in param.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::ModelMismatch(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(net)
}

pub fn load(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let file = fs::File::open(path)?;
    read_model(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squeeze_keeps_at_least_rank_one() {
        assert_eq!(squeezed(Dims::of(1, 1, 1, 1)), vec![1]);
        assert_eq!(squeezed(Dims::of(1, 1, 1, 8)), vec![8]);
        assert_eq!(squeezed(Dims::of(1, 1, 10, 64)), vec![10, 64]);
        assert_eq!(squeezed(Dims::of(8, 1, 3, 3)), vec![8, 1, 3, 3]);
    }
}
