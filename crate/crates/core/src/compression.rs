//! Unbiased compression operators and their bit accounting.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::vecops::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    Identity,
    RandK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compressor {
    pub kind: CompressorKind,
    pub k: usize,
    pub d: usize,
    /// Bits charged per transmitted value.
    pub value_bits: u64,
}

impl Compressor {
    pub fn identity(d: usize) -> Self {
        Self { kind: CompressorKind::Identity, k: d, d, value_bits: 64 }
    }

    pub fn rand_k(k: usize, d: usize) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::InvalidArgument(format!("rand_k needs 1 <= k <= d, got k = {k}, d = {d}")));
        }
        Ok(Self { kind: CompressorKind::RandK, k, d, value_bits: 64 })
    }

    pub fn with_value_bits(mut self, bits: u64) -> Self {
        self.value_bits = bits;
        self
    }

    /// Variance parameter: `E||Q(x) - x||^2 <= omega ||x||^2`.
    pub fn omega(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => 0.0,
            CompressorKind::RandK => self.d as f64 / self.k as f64 - 1.0,
        }
    }

    /// Expected number of transmitted components.
    pub fn expected_density(&self) -> f64 {
        match self.kind {
            CompressorKind::Identity => self.d as f64,
            CompressorKind::RandK => self.k as f64,
        }
    }

    pub fn index_bits(&self) -> u64 {
        index_bits(self.d)
    }

    /// Bits of one compressed message (deterministic for both kinds).
    pub fn message_bits(&self) -> u64 {
        match self.kind {
            CompressorKind::Identity => self.value_bits * self.d as u64,
            CompressorKind::RandK => (self.value_bits + self.index_bits()) * self.k as u64,
        }
    }

    /// Bits of an uncompressed dense vector.
    pub fn dense_bits(&self) -> u64 {
        self.value_bits * self.d as u64
    }

    /// Draws the kept coordinate set (sorted) with a partial Fisher-Yates
    /// shuffle consuming exactly `k` draws. Identity keeps everything and
    /// consumes nothing.
    pub fn draw_support(&self, rng: &mut RngStream) -> Vec<u32> {
        match self.kind {
            CompressorKind::Identity => (0..self.d as u32).collect(),
            CompressorKind::RandK => {
                let mut scratch: Vec<u32> = (0..self.d as u32).collect();
                for i in 0..self.k {
                    let j = rng.below(i, self.d);
                    scratch.swap(i, j);
                }
                scratch.truncate(self.k);
                scratch.sort_unstable();
                scratch
            }
        }
    }

    pub fn compress(&self, x: &[f64], rng: &mut RngStream) -> Result<CompressedMessage> {
        check_dim(self.d, x.len())?;
        match self.kind {
            CompressorKind::Identity => Ok(CompressedMessage {
                payload: Payload::Dense(x.to_vec()),
                bit_cost: self.message_bits(),
            }),
            CompressorKind::RandK => {
                let support = self.draw_support(rng);
                Ok(self.compress_on_support(x, support))
            }
        }
    }

    /// RandK output restricted to a given support.
    pub fn compress_on_support(&self, x: &[f64], support: Vec<u32>) -> CompressedMessage {
        let scale = self.d as f64 / self.k as f64;
        let values = support.iter().map(|&i| scale * x[i as usize]).collect();
        CompressedMessage {
            payload: Payload::Sparse { indices: support, values },
            bit_cost: self.message_bits(),
        }
    }
}

/// `ceil(log2 d)`; zero for `d <= 1`.
pub fn index_bits(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(ParamVector),
    Sparse { indices: Vec<u32>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub payload: Payload,
    pub bit_cost: u64,
}

impl CompressedMessage {
    /// Number of transmitted components.
    pub fn components(&self) -> usize {
        match &self.payload {
            Payload::Dense(v) => v.len(),
            Payload::Sparse { indices, .. } => indices.len(),
        }
    }

    /// `out += decompress(self)`
    pub fn add_into(&self, out: &mut [f64]) -> Result<()> {
        match &self.payload {
            Payload::Dense(v) => {
                check_dim(out.len(), v.len())?;
                for (o, x) in out.iter_mut().zip(v) {
                    *o += x;
                }
            }
            Payload::Sparse { indices, values } => {
                for (&i, &v) in indices.iter().zip(values) {
                    let i = i as usize;
                    if i >= out.len() {
                        return Err(Error::IndexOutOfRange { index: i, dim: out.len() });
                    }
                    out[i] += v;
                }
            }
        }
        Ok(())
    }
}

pub fn decompress(msg: &CompressedMessage, d: usize) -> Result<ParamVector> {
    match &msg.payload {
        Payload::Dense(v) => {
            check_dim(d, v.len())?;
            Ok(v.clone())
        }
        Payload::Sparse { indices, values } => {
            let mut out = vec![0.0; d];
            for (&i, &v) in indices.iter().zip(values) {
                let i = i as usize;
                if i >= d {
                    return Err(Error::IndexOutOfRange { index: i, dim: d });
                }
                out[i] = v;
            }
            Ok(out)
        }
    }
}
