//! Versioned little-endian checkpoint files.
//!
//! Layout: magic, format version, element tag, config text, vocabulary,
//! labels, step, best validation loss, named parameter tensors in declared
//! order (rows, cols, data), then the optimizer step and moment tensors.
//! Identical contents always serialize to identical bytes.

use std::path::Path;

use bpt_core::model::{ModelParams, RunConfig};
use bpt_core::numeric::{AdamState, Matrix};
use bpt_core::Real;

use crate::config::{config_to_string, parse_config};
use crate::corpus::Vocab;
use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 8] = b"BPTCKPT\0";
const VERSION: u32 = 1;

/// Element types that can be stored in a checkpoint.
pub trait Scalar: Real {
    const TAG: u8;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const WIDTH: usize;
}

impl Scalar for f64 {
    const TAG: u8 = 64;
    const WIDTH: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Scalar for f32 {
    const TAG: u8 = 32;
    const WIDTH: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: RunConfig,
    pub vocab: Vocab,
    pub labels: Vec<String>,
    /// Number of optimizer steps taken.
    pub step: u64,
    pub best_valid: f64,
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&(x as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_matrix<T: Scalar>(out: &mut Vec<u8>, m: &Matrix<T>) {
    put_u32(out, m.rows());
    put_u32(out, m.cols());
    for &x in m.data() {
        x.write_le(out);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| HarnessError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()?;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| HarnessError::Checkpoint("string is not UTF-8".into()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u32()?;
        (0..n).map(|_| self.string()).collect()
    }

    fn matrix<T: Scalar>(&mut self, expect: (usize, usize), name: &str) -> Result<Matrix<T>> {
        let (rows, cols) = (self.u32()?, self.u32()?);
        if (rows, cols) != expect {
            return Err(HarnessError::Checkpoint(format!(
                "tensor {name} is {rows}x{cols}, config implies {}x{}",
                expect.0, expect.1
            )));
        }
        let raw = self.take(rows * cols * T::WIDTH)?;
        let data = raw.chunks_exact(T::WIDTH).map(T::read_le).collect();
        Ok(Matrix::from_vec(rows, cols, data)?)
    }
}

/// Element tag stored in the header of `bytes` (64 or 32).
pub fn peek_element_tag(bytes: &[u8]) -> Result<u8> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(HarnessError::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(HarnessError::Checkpoint(format!("unsupported version {version}")));
    }
    r.u8()
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::TAG);
        put_str(&mut out, &config_to_string(&self.config));
        for list in [self.vocab.symbols(), &self.labels[..]] {
            put_u32(&mut out, list.len());
            for s in list {
                put_str(&mut out, s);
            }
        }
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.best_valid.to_le_bytes());
        let names = self.params.tensor_names();
        put_u32(&mut out, names.len());
        for (name, m) in names.iter().zip(self.params.tensors()) {
            put_str(&mut out, name);
            put_matrix(&mut out, m);
        }
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for m in self.adam.m.iter().chain(&self.adam.v) {
            put_matrix(&mut out, m);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let tag = peek_element_tag(bytes)?;
        if tag != T::TAG {
            return Err(HarnessError::Checkpoint(format!("checkpoint holds f{tag} values, expected {}", T::NAME)));
        }
        let mut r = Reader { bytes, pos: MAGIC.len() + 5 };
        let config = parse_config(&r.string()?, RunConfig::default())
            .map_err(|e| HarnessError::Checkpoint(format!("embedded config: {e}")))?;
        let vocab = Vocab::from_table(r.strings()?)?;
        let labels = r.strings()?;
        let step = r.u64()?;
        let best_valid = r.f64()?;

        let mut params = ModelParams::<T>::zeros(&config)?;
        let names = params.tensor_names();
        if r.u32()? != names.len() {
            return Err(HarnessError::Checkpoint("tensor count does not match config".into()));
        }
        let shapes = params.shapes();
        for ((name, shape), slot) in names.iter().zip(&shapes).zip(params.tensors_mut()) {
            let stored = r.string()?;
            if stored != *name {
                return Err(HarnessError::Checkpoint(format!("expected tensor {name}, found {stored}")));
            }
            *slot = r.matrix(*shape, name)?;
        }
        let mut adam = AdamState::new(shapes.iter().copied());
        adam.step = r.u64()?;
        for (i, slot) in adam.m.iter_mut().chain(adam.v.iter_mut()).enumerate() {
            *slot = r.matrix(shapes[i % shapes.len()], "optimizer moment")?;
        }
        if r.pos != bytes.len() {
            return Err(HarnessError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if vocab.len() != config.vocab_size {
            return Err(HarnessError::Checkpoint("vocabulary size does not match config".into()));
        }
        Ok(Self { config, vocab, labels, step, best_valid, params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
