//! Dataset ingestion (LIBSVM text), synthetic fixtures and per-worker sharding.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRole};

/// Sparse feature row with 0-based, strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn from_dense(values: &[f64]) -> Self {
        let mut row = SparseRow::default();
        for (i, &v) in values.iter().enumerate() {
            if v != 0.0 {
                row.indices.push(i as u32);
                row.values.push(v);
            }
        }
        row
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * x[i as usize])
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `out += alpha * row`
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] += alpha * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy_into(1.0, &mut out);
        out
    }
}

/// Binary classification samples `(a_j, y_j)` with `y_j` in {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseRow>,
    labels: Vec<u8>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<u8>, dim: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidArgument(format!("label {bad} not in {{0,1}}")));
        }
        for row in &rows {
            if row.indices.len() != row.values.len() {
                return Err(Error::InvalidArgument("row index/value length mismatch".into()));
            }
            if row.indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument("row indices must be strictly increasing".into()));
            }
            if let Some(&last) = row.indices.last() {
                if last as usize >= dim {
                    return Err(Error::IndexOutOfRange { index: last as usize, dim });
                }
            }
        }
        Ok(Self { rows, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &SparseRow {
        &self.rows[j]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j] as f64
    }

    /// Subset by sample indices (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&j| self.rows[j].clone()).collect();
        let labels = indices.iter().map(|&j| self.labels[j]).collect();
        Self::new(rows, labels, self.dim)
    }

    /// Copy with `y -> 1 - y`.
    pub fn with_flipped_labels(&self) -> Self {
        Self {
            rows: self.rows.clone(),
            labels: self.labels.iter().map(|&y| 1 - y).collect(),
            dim: self.dim,
        }
    }

    /// Copy with a constant-1 feature appended at index `dim`.
    pub fn with_bias(&self) -> Self {
        let bias = self.dim as u32;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.indices.push(bias);
                r.values.push(1.0);
                r
            })
            .collect();
        Self { rows, labels: self.labels.clone(), dim: self.dim + 1 }
    }

    /// Serialize to LIBSVM text (1-based indices, labels 0/1).
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            out.push_str(if y == 1 { "1" } else { "0" });
            for (&i, &v) in row.indices.iter().zip(&row.values) {
                let _ = write!(out, " {}:{}", i + 1, v);
            }
            out.push('\n');
        }
        out
    }
}

/// Parse LIBSVM text. Labels `<= 0` map to 0, all others to 1.
///
/// `dim_override` fixes the feature dimension (it must cover every index seen);
/// otherwise the dimension is the largest 1-based index present.
pub fn parse_libsvm(text: &str, dim_override: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno + 1;
        let bad = |reason: String| Error::Parse { line: lineno, reason };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| bad(format!("non-numeric label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(bad(format!("non-finite label {label_tok:?}")));
        }
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| bad(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| bad(format!("non-numeric index in {tok:?}")))?;
            if idx == 0 {
                return Err(bad("feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| bad(format!("non-numeric value in {tok:?}")))?;
            if idx > u32::MAX as usize {
                return Err(bad(format!("index {idx} too large")));
            }
            max_index = max_index.max(idx);
            pairs.push(((idx - 1) as u32, val));
        }
        pairs.sort_by_key(|&(i, _)| i);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(bad(format!("duplicate feature index {}", w[0].0 + 1)));
        }
        rows.push(SparseRow {
            indices: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        });
        labels.push(if label <= 0.0 { 0 } else { 1 });
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = match dim_override {
        Some(d) if d < max_index => {
            return Err(Error::InvalidArgument(format!(
                "dimension override {d} smaller than max feature index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    Dataset::new(rows, labels, dim)
}

pub fn load_libsvm(path: impl AsRef<Path>, dim_override: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_libsvm(&text, dim_override)
}

/// Synthetic logistic-regression data: unit-norm Gaussian features and
/// labels drawn from a logistic model with a Gaussian ground-truth weight.
pub fn synthetic_logistic(n_samples: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if n_samples == 0 || dim == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = RngStream::new(seed, StreamRole::Data, 0);
    let truth: Vec<f64> = (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        })
        .collect();
    let mut rows = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut a: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        a.iter_mut().for_each(|v| *v /= norm);
        let margin: f64 = a.iter().zip(&truth).map(|(x, w)| x * w).sum();
        let prob = 1.0 / (1.0 + (-margin).exp());
        labels.push(u8::from(rng.uniform() < prob));
        rows.push(SparseRow::from_dense(&a));
    }
    Dataset::new(rows, labels, dim)
}

/// Diagonal least-squares samples `f_j(x) = 1/2 sum_t h_{j,t} (x_t - c_{j,t})^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSamples {
    /// Per-sample curvature, one row of length `dim` per sample; entries > 0.
    pub curvature: Vec<Vec<f64>>,
    /// Per-sample center, same layout as `curvature`.
    pub center: Vec<Vec<f64>>,
    pub dim: usize,
}

impl QuadraticSamples {
    pub fn new(curvature: Vec<Vec<f64>>, center: Vec<Vec<f64>>) -> Result<Self> {
        if curvature.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = curvature[0].len();
        if center.len() != curvature.len() {
            return Err(Error::InvalidArgument("curvature/center count mismatch".into()));
        }
        for (h, c) in curvature.iter().zip(&center) {
            if h.len() != dim || c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: h.len().max(c.len()) });
            }
            if h.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument("quadratic curvature must be positive".into()));
            }
        }
        Ok(Self { curvature, center, dim })
    }

    pub fn len(&self) -> usize {
        self.curvature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curvature.is_empty()
    }
}

/// Samples held by one worker.
#[derive(Debug, Clone)]
pub enum Samples {
    Labeled(Arc<Dataset>),
    Quadratic(Arc<QuadraticSamples>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Labeled(d) => d.len(),
            Samples::Quadratic(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Samples::Labeled(d) => d.dim(),
            Samples::Quadratic(q) => q.dim,
        }
    }

    /// True when both refer to the same underlying allocation.
    pub fn same_as(&self, other: &Samples) -> bool {
        match (self, other) {
            (Samples::Labeled(a), Samples::Labeled(b)) => Arc::ptr_eq(a, b),
            (Samples::Quadratic(a), Samples::Quadratic(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// One worker's local dataset.
#[derive(Debug, Clone)]
pub struct WorkerShard {
    pub worker_id: usize,
    pub samples: Samples,
}

impl WorkerShard {
    pub fn labeled(worker_id: usize, data: Arc<Dataset>) -> Self {
        Self { worker_id, samples: Samples::Labeled(data) }
    }

    pub fn quadratic(worker_id: usize, data: Arc<QuadraticSamples>) -> Self {
        Self { worker_id, samples: Samples::Quadratic(data) }
    }

    /// Local sample count `m`.
    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    /// Label-flipped copy (identity for quadratic shards, which carry no labels).
    pub fn label_flipped(&self) -> Self {
        let samples = match &self.samples {
            Samples::Labeled(d) => Samples::Labeled(Arc::new(d.with_flipped_labels())),
            other => other.clone(),
        };
        Self { worker_id: self.worker_id, samples }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardMode {
    /// Every worker holds the entire dataset.
    FullCopy,
    /// Seeded shuffle, then contiguous balanced blocks.
    DisjointShuffle,
}

/// Split a dataset among `n_good` workers.
pub fn shard(dataset: &Arc<Dataset>, n_good: usize, mode: ShardMode, seed: u64) -> Result<Vec<WorkerShard>> {
    if n_good == 0 {
        return Err(Error::InvalidArgument("n_good must be >= 1".into()));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match mode {
        ShardMode::FullCopy => Ok((0..n_good).map(|i| WorkerShard::labeled(i, Arc::clone(dataset))).collect()),
        ShardMode::DisjointShuffle => {
            let total = dataset.len();
            if total < n_good {
                return Err(Error::InvalidArgument(format!(
                    "{total} samples cannot fill {n_good} disjoint shards"
                )));
            }
            let perm = RngStream::new(seed, StreamRole::Sharding, 0).permutation(total);
            let base = total / n_good;
            let extra = total % n_good;
            let mut start = 0;
            let mut shards = Vec::with_capacity(n_good);
            for i in 0..n_good {
                let size = base + usize::from(i < extra);
                let part = dataset.select(&perm[start..start + size])?;
                shards.push(WorkerShard::labeled(i, Arc::new(part)));
                start += size;
            }
            Ok(shards)
        }
    }
}

/// Pull disjoint shards toward the homogeneous setting: each worker's new
/// local set is `own_copies` copies of its own samples plus one copy of the
/// whole dataset. The local gradient deviation from the global one scales
/// roughly by `own_copies * m_i / (own_copies * m_i + N)`.
pub fn blend_with_global(shards: &[WorkerShard], dataset: &Dataset, own_copies: usize) -> Result<Vec<WorkerShard>> {
    shards
        .iter()
        .map(|s| {
            let Samples::Labeled(own) = &s.samples else {
                return Err(Error::UnsupportedModel("blending needs labeled shards".into()));
            };
            let mut rows = Vec::with_capacity(own_copies * own.len() + dataset.len());
            let mut labels = Vec::with_capacity(rows.capacity());
            for _ in 0..own_copies {
                rows.extend_from_slice(own.rows());
                labels.extend_from_slice(own.labels());
            }
            rows.extend_from_slice(dataset.rows());
            labels.extend_from_slice(dataset.labels());
            let blended = Dataset::new(rows, labels, dataset.dim())?;
            Ok(WorkerShard::labeled(s.worker_id, Arc::new(blended)))
        })
        .collect()
}
