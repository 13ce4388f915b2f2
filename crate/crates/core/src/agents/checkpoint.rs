//! Network checkpoints.
//!
//! Layout: magic `CRLQ1`, layer count (`u32` LE), layer sizes (`u32` LE
//! each), parameters (`f64` LE each), CRC32 of everything before it
//! (`u32` LE).

use std::path::Path;

use super::mlp::Mlp;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"CRLQ1";

pub fn encode(net: &Mlp) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(MAGIC.len() + 4 * (net.sizes().len() + 2) + 8 * net.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
    for &s in net.sizes() {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Mlp> {
    let bad = |msg: String| Error::Checkpoint(msg);
    if bytes.len() < MAGIC.len() + 8 {
        return Err(bad(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("bad magic; not a CRLQ1 checkpoint".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(bad(format!(
            "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut rest = &body[MAGIC.len()..];
    let mut take = |n: usize| -> Result<&[u8]> {
        if rest.len() < n {
            return Err(Error::Checkpoint("truncated body".into()));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    let n_layers = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if n_layers > 64 {
        return Err(bad(format!("implausible layer count {n_layers}")));
    }
    let mut sizes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        sizes.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
    }
    let shape = Mlp::zeros(&sizes).map_err(|e| bad(e.to_string()))?;
    let mut params = Vec::with_capacity(shape.n_params());
    for _ in 0..shape.n_params() {
        params.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    if !rest.is_empty() {
        return Err(bad(format!(
            "{} trailing bytes after parameters",
            rest.len()
        )));
    }
    Mlp::from_params(&sizes, params).map_err(|e| bad(e.to_string()))
}

pub fn save(path: &Path, net: &Mlp) -> Result<()> {
    std::fs::write(path, encode(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Mlp> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let net = Mlp::new(&[3, 7, 2], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let bytes = encode(&net);
        assert_eq!(&bytes[..5], b"CRLQ1");
        assert_eq!(bytes.len(), 5 + 4 + 12 + 8 * net.n_params() + 4);
        assert_eq!(decode(&bytes).unwrap(), net);
    }

    #[test]
    fn corruption_detected() {
        let net = Mlp::new(&[2, 4, 1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut bytes = encode(&net);
        bytes[20] ^= 0x01;
        assert!(matches!(decode(&bytes), Err(Error::Checkpoint(m)) if m.contains("CRC")));
        assert!(decode(b"CRLQ0aaaaaaaaaaa").is_err());
        assert!(decode(b"CR").is_err());
    }
}
