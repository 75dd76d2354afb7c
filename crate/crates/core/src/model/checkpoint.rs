//! Binary checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic      8 bytes  "SPRDCKPT"
//! version    u32
//! spec       vocab_size u64, hidden_dim u64, n_layers u64, n_heads u64,
//!            max_seq_len u64, mask_id u32, seed u64
//! params     count u64, then count × f32
//! vocab      count u64, then count × (len u32, utf-8 bytes)   (count may be 0)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{ModelSpec, ToyTransformer};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

const MAGIC: &[u8; 8] = b"SPRDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ToyTransformer,
    pub tokenizer: Option<Tokenizer>,
}

pub fn save_checkpoint(path: &Path, model: &ToyTransformer, tokenizer: Option<&Tokenizer>) -> Result<()> {
    let spec = model.spec();
    let mut buf = Vec::with_capacity(64 + model.num_params() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        spec.vocab_size,
        spec.hidden_dim,
        spec.n_layers,
        spec.n_heads,
        spec.max_seq_len,
    ] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    buf.extend_from_slice(&spec.mask_id.to_le_bytes());
    buf.extend_from_slice(&spec.seed.to_le_bytes());
    buf.extend_from_slice(&(model.num_params() as u64).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let tokens = tokenizer.map(Tokenizer::tokens).unwrap_or(&[]);
    buf.extend_from_slice(&(tokens.len() as u64).to_le_bytes());
    for t in tokens {
        buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.as_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|e| e.to_string())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8).map_err(&fail)? != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = r.u32().map_err(&fail)?;
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let parse = |r: &mut Reader| -> std::result::Result<(ModelSpec, Vec<f32>, Vec<String>), String> {
        let spec = ModelSpec {
            vocab_size: r.usize()?,
            hidden_dim: r.usize()?,
            n_layers: r.usize()?,
            n_heads: r.usize()?,
            max_seq_len: r.usize()?,
            mask_id: r.u32()?,
            seed: r.u64()?,
        };
        let count = r.usize()?;
        let raw = r.take(count.checked_mul(4).ok_or("parameter count overflow")?)?;
        let params = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n_tokens = r.usize()?;
        let mut tokens = Vec::new();
        for _ in 0..n_tokens {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?).map_err(|e| e.to_string())?;
            tokens.push(s.to_string());
        }
        if r.pos != r.bytes.len() {
            return Err(format!("{} trailing bytes", r.bytes.len() - r.pos));
        }
        Ok((spec, params, tokens))
    };
    let (spec, params, tokens) = parse(&mut r).map_err(&fail)?;
    let model = ToyTransformer::from_parts(spec, params)?;
    let tokenizer = if tokens.is_empty() {
        None
    } else {
        Some(Tokenizer::from_tokens(tokens))
    };
    Ok(Checkpoint { model, tokenizer })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = ModelSpec {
            vocab_size: 9,
            hidden_dim: 8,
            n_layers: 2,
            n_heads: 2,
            max_seq_len: 6,
            mask_id: 2,
            seed: 123,
        };
        let model = ToyTransformer::new(spec).unwrap();
        let tok = Tokenizer::fit(["alpha beta gamma"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &model, Some(&tok)).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.model, model);
        let a: Vec<u32> = model.params().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u32> = loaded.model.params().iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(loaded.tokenizer.as_ref(), Some(&tok));

        save_checkpoint(&path, &model, None).unwrap();
        assert!(load_checkpoint(&path).unwrap().tokenizer.is_none());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"SPRDCKPT\x09\x00\x00\x00").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));
        std::fs::write(&path, b"NOTACKPT").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));
    }
}
