//! Binary checkpoint format.
//!
//! ```text
//! "FRCLNN01"
//! u32 LE length, then that many bytes of JSON {"network": config, "rng_state": u64}
//! per tensor: u16 LE name length, UTF-8 name, u8 rank, rank × u32 LE dims,
//!             product(dims) × f64 LE values
//! u32 LE CRC-32 of every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::NetworkConfig;
use super::network::ModelParameters;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"FRCLNN01";

#[derive(Serialize, Deserialize)]
struct Header {
    network: NetworkConfig,
    rng_state: u64,
}

pub fn encode(params: &ModelParameters) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let header = serde_json::to_vec(&Header { network: params.config, rng_state: params.rng_state })?;
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    for (name, t) in params.named_tensors() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corrupt("checkpoint ends mid-record".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParameters> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Version("missing FRCLNN01 magic".into()));
    }
    if bytes.len() < MAGIC.len() + 8 {
        return Err(Error::Corrupt("checkpoint too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }

    let mut cur = Cursor { bytes: body, pos: MAGIC.len() };
    let header_len = cur.u32()? as usize;
    let header: Header = serde_json::from_slice(cur.take(header_len)?)
        .map_err(|e| Error::Corrupt(format!("bad config block: {e}")))?;
    let mut params = ModelParameters::zeros(&header.network)?;
    params.rng_state = header.rng_state;

    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    for (expected, slot) in names.iter().zip(params.tensors_mut()) {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?).map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?;
        if name != expected {
            return Err(Error::Corrupt(format!("expected tensor `{expected}`, found `{name}`")));
        }
        let rank = cur.u8()? as usize;
        let dims = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != slot.shape() {
            return Err(Error::Corrupt(format!("tensor `{name}` has shape {dims:?}, config implies {:?}", slot.shape())));
        }
        let n: usize = dims.iter().product();
        let raw = cur.take(n * 8)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        *slot = Tensor::new(dims, values)?;
    }
    if cur.pos != body.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes after tensors", body.len() - cur.pos)));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParameters, path: &Path) -> Result<()> {
    std::fs::write(path, encode(params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParameters> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::Head;

    fn params() -> ModelParameters {
        let cfg = NetworkConfig {
            conv_filters: (3, 4),
            lstm_layers: 2,
            lstm_units: 3,
            dense_units: 4,
            head: Head::Linear { outputs: 2 },
            input_length: 12,
            ..Default::default()
        };
        ModelParameters::init(&cfg, 77).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(p.config, q.config);
        assert_eq!(p.rng_state, q.rng_state);
        for ((n, a), (_, b)) in p.named_tensors().iter().zip(q.named_tensors()) {
            let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb, "{n}");
        }
    }

    #[test]
    fn truncated_is_corrupt() {
        let bytes = encode(&params()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 12] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut bytes = encode(&params()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn wrong_magic_is_version_error() {
        let mut bytes = encode(&params()).unwrap();
        bytes[7] = b'2';
        assert!(matches!(decode(&bytes), Err(Error::Version(_))));
        assert!(matches!(decode(b"nope"), Err(Error::Version(_))));
    }

    #[test]
    fn layout_starts_with_magic_and_header() {
        let bytes = encode(&params()).unwrap();
        assert_eq!(&bytes[..8], b"FRCLNN01");
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + n]).unwrap();
        assert_eq!(header["network"]["lstm_units"], 3);
        let name_len = u16::from_le_bytes(bytes[12 + n..14 + n].try_into().unwrap()) as usize;
        assert_eq!(&bytes[14 + n..14 + n + name_len], b"conv1.kernel");
    }
}
