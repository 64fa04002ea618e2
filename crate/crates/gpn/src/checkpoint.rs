//! Binary checkpoint format.
//!
//! Layout (little-endian): magic `MCGPNCK\0`, `u32` version, `u32` config
//! length and config JSON, `u64` step, rng seed (32 bytes), `u64` stream,
//! `u128` word position, `u32` block count, then per block `u16` name
//! length, name, `u32` rows, `u32` cols and `rows * cols` `f32` values in
//! row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{GpnError, Result};
use crate::params::ModelParams;

pub const MAGIC: &[u8; 8] = b"MCGPNCK\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub params: ModelParams<f32>,
}

impl Checkpoint {
    pub fn new(params: ModelParams<f32>, step: u64, rng: ChaCha8Rng) -> Self {
        Checkpoint {
            config: params.config.clone(),
            step,
            rng,
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = serde_json::to_vec(&self.config).expect("config serialization cannot fail");
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "header")? != MAGIC {
            return Err(GpnError::Checkpoint("bad magic: not a checkpoint file".into()));
        }
        let version = r.u32("header")?;
        if version != VERSION {
            return Err(GpnError::Checkpoint(format!(
                "unsupported version {version} (expected {VERSION})"
            )));
        }
        let len = r.u32("header")? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)
            .map_err(|e| GpnError::Checkpoint(format!("config: {e}")))?;
        let step = u64::from_le_bytes(r.array("header")?);
        let seed: [u8; 32] = r.array("rng state")?;
        let stream = u64::from_le_bytes(r.array("rng state")?);
        let word_pos = u128::from_le_bytes(r.array("rng state")?);
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let count = r.u32("header")? as usize;
        let mut named = Vec::with_capacity(count);
        for i in 0..count {
            let what = format!("block #{i}");
            let nlen = u16::from_le_bytes(r.array(&what)?) as usize;
            let name = String::from_utf8(r.take(nlen, &what)?.to_vec())
                .map_err(|_| GpnError::Checkpoint(format!("{what}: name is not UTF-8")))?;
            let what = format!("block {name}");
            let rows = r.u32(&what)? as usize;
            let cols = r.u32(&what)? as usize;
            let need = rows * cols * 4;
            if r.remaining() < need {
                return Err(GpnError::Checkpoint(format!("block {name}: expected {need} bytes")));
            }
            let data = r.take(need, &what)?;
            let values = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                .collect();
            let t = Array2::from_shape_vec((rows, cols), values).map_err(|e| GpnError::Checkpoint(e.to_string()))?;
            named.push((name, t));
        }
        if r.remaining() != 0 {
            return Err(GpnError::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        let params = ModelParams::from_tensors(&config, named).map_err(|e| GpnError::Checkpoint(e.to_string()))?;
        Ok(Checkpoint {
            config,
            step,
            rng,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Loads and rejects a checkpoint whose model config differs from `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if &ck.config != expected {
            return Err(GpnError::Checkpoint(format!(
                "config mismatch: file has {} ({}), expected {} ({})",
                ck.config.variant(),
                serde_json::to_string(&ck.config).unwrap_or_default(),
                expected.variant(),
                serde_json::to_string(expected).unwrap_or_default()
            )));
        }
        Ok(ck)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(GpnError::Checkpoint(format!("{what}: expected {n} bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
}
