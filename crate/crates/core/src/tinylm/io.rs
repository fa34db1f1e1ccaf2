//! Checkpoint file format, version 1.
//!
//! ```text
//! magic      4 bytes   "TLM1"
//! version    u32 LE    1
//! header_len u32 LE    byte length of the JSON header
//! header     UTF-8     {"config":…,"tokenizer":…,"provenance":…,"blocks":[[name,len],…]}
//! blocks     f32 LE    row-major, in `Checkpoint::blocks` order:
//!                      tok_emb, pos_emb,
//!                      per layer: ln1_g ln1_b wq wk wv wo ln2_g ln2_b w_in b_in w_out b_out,
//!                      lnf_g, lnf_b, unembed
//! ```
//!
//! No padding, no trailing bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{Checkpoint, LayerParams};
use super::tokenizer::Tokenizer;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TLM1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tokenizer: Tokenizer,
    provenance: String,
    blocks: Vec<(String, usize)>,
}

pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let header = Header {
        config: ckpt.config,
        tokenizer: ckpt.tokenizer.clone(),
        provenance: ckpt.provenance.clone(),
        blocks: ckpt
            .blocks()
            .iter()
            .map(|(id, b)| (id.to_string(), b.len()))
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * ckpt.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, block) in ckpt.blocks() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated while reading {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(4 * n, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not a TLM1 checkpoint".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let len = r.u32("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(len, "header")?)
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    let cfg = header.config;
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    if header.tokenizer.vocab_size() != cfg.vocab_size {
        return Err(Error::Format("tokenizer size disagrees with config".into()));
    }
    let shapes = Checkpoint::block_shapes(&cfg);
    let declared: Vec<usize> = header.blocks.iter().map(|(_, n)| *n).collect();
    if declared != shapes {
        return Err(Error::Format("block shapes disagree with config".into()));
    }

    let mut blocks = header
        .blocks
        .iter()
        .map(|(name, n)| r.f32s(*n, name))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let mut next = || blocks.next().expect("block count checked");
    let tok_emb = next();
    let pos_emb = next();
    let layers = (0..cfg.n_layers)
        .map(|_| LayerParams {
            ln1_g: next(),
            ln1_b: next(),
            wq: next(),
            wk: next(),
            wv: next(),
            wo: next(),
            ln2_g: next(),
            ln2_b: next(),
            w_in: next(),
            b_in: next(),
            w_out: next(),
            b_out: next(),
        })
        .collect();
    Ok(Checkpoint {
        config: cfg,
        tokenizer: header.tokenizer,
        provenance: header.provenance,
        tok_emb,
        pos_emb,
        layers,
        lnf_g: next(),
        lnf_b: next(),
        unembed: next(),
    })
}

pub fn save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(ckpt)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Checkpoint {
        let tok = Tokenizer::build(&["x y z"]).unwrap();
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 4,
            n_heads: 2,
            d_mlp: 8,
            vocab_size: tok.vocab_size(),
            max_seq_len: 4,
            seed: 3,
        };
        Checkpoint::init(cfg, tok).unwrap().with_provenance("unit")
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let c = tiny();
        let bytes = to_bytes(&c).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert!(back.bit_identical(&c));
        assert_eq!(back.provenance, "unit");
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn structured_errors() {
        let bytes = to_bytes(&tiny()).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format(m)) if m.contains("magic")));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(from_bytes(truncated), Err(Error::Format(m)) if m.contains("truncated")));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(from_bytes(&long), Err(Error::Format(m)) if m.contains("trailing")));

        let mut version = bytes;
        version[4] = 9;
        assert!(matches!(from_bytes(&version), Err(Error::Format(m)) if m.contains("version")));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let c = tiny();
        let mut bytes = to_bytes(&c).unwrap();
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[12..12 + len].to_vec()).unwrap();
        let patched = header.replace("\"d_mlp\":8", "\"d_mlp\":9");
        assert_eq!(patched.len(), header.len());
        bytes[12..12 + len].copy_from_slice(patched.as_bytes());
        assert!(matches!(from_bytes(&bytes), Err(Error::Format(m)) if m.contains("shapes")));
    }
}
