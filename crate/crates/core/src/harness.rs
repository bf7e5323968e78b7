//! Experiment driver: typed run configs, data and worker setup, the f*
//! reference, multi-seed runs and trace/summary output.
//!
//! Configs are flat TOML documents. Unknown keys, missing structural keys and
//! invalid values are all collected and reported together before any compute.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{Aggregator, AggregatorBase};
use crate::attacks::{Attack, AttackKind};
use crate::compression::{Compressor, CompressorKind};
use crate::data::{self, Dataset, ShardMode, WorkerShard};
use crate::error::{Error, Result};
use crate::optimizers::{self, Algorithm, OptimizerConfig, RunOutput, TraceRow, Workers};
use crate::problems::{self, GlobalObjective, LossKind, LossModel, QuadraticConstants, SamplingScheme};
use crate::vecops;

/// Header of every trace CSV.
pub const TRACE_HEADER: &str = "seed,k,gap,grad_norm_sq,cum_bits,cum_oracle,diag_msg_var,diag_gdist";

const REQUIRED_KEYS: &[&str] = &[
    "dataset",
    "model",
    "n_workers",
    "byz_count",
    "shard_mode",
    "algorithm",
    "gammas",
    "aggregator",
    "compressor",
    "attack",
    "rounds",
];

/// One experiment. Structural keys are mandatory; hyperparameters default
/// to batch size 32, seeds {1, 2, 3}, bucket size 2, 8 Weiszfeld iterations,
/// IPM epsilon 0.1, momentum 0.9 and RandK with `k = ceil(0.1 d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `"synthetic"`, `"quadratic"` or a LIBSVM file path.
    pub dataset: String,
    pub model: LossKind,
    #[serde(default)]
    pub lambda: f64,
    /// Samples of the synthetic logistic dataset, or per worker for `quadratic`.
    #[serde(default = "default_samples")]
    pub synthetic_samples: usize,
    #[serde(default = "default_dim")]
    pub synthetic_dim: usize,
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
    /// Dimension override for LIBSVM files.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub add_bias: bool,
    #[serde(default = "default_h_lo")]
    pub quadratic_h_lo: f64,
    #[serde(default = "default_h_hi")]
    pub quadratic_h_hi: f64,
    #[serde(default)]
    pub quadratic_shift: f64,

    pub n_workers: usize,
    pub byz_count: usize,
    pub shard_mode: ShardMode,

    pub algorithm: Algorithm,
    pub gammas: Vec<f64>,
    /// Communication probability; defaults to `min(b/m, 1/(1+omega))`.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingScheme,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub epoch_len: Option<usize>,

    pub aggregator: AggregatorBase,
    #[serde(default = "default_bucket")]
    pub bucket_size: usize,
    #[serde(default = "default_rfa_iters")]
    pub rfa_iters: usize,
    #[serde(default = "default_rfa_smoothing")]
    pub rfa_smoothing: f64,
    /// Byzantine count assumed by Krum; defaults to the true count.
    #[serde(default)]
    pub krum_byz: Option<usize>,

    pub compressor: CompressorKind,
    /// Kept coordinates of RandK; defaults to `ceil(k_fraction * d)`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_k_fraction")]
    pub k_fraction: f64,
    #[serde(default = "default_value_bits")]
    pub value_bits: u64,

    pub attack: AttackKind,
    #[serde(default = "default_ipm_epsilon")]
    pub ipm_epsilon: f64,
    #[serde(default)]
    pub alie_z: Option<f64>,
    #[serde(default = "default_alie_floor")]
    pub alie_z_floor: f64,
    #[serde(default = "default_true")]
    pub sparse_framing: bool,

    pub rounds: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_fstar_epochs")]
    pub fstar_epochs: usize,
    #[serde(default)]
    pub parallel_workers: bool,
}

fn default_samples() -> usize {
    2000
}
fn default_dim() -> usize {
    50
}
fn default_data_seed() -> u64 {
    0
}
fn default_h_lo() -> f64 {
    0.5
}
fn default_h_hi() -> f64 {
    2.0
}
fn default_batch() -> usize {
    32
}
fn default_sampling() -> SamplingScheme {
    SamplingScheme::Uniform
}
fn default_beta() -> f64 {
    0.9
}
fn default_bucket() -> usize {
    2
}
fn default_rfa_iters() -> usize {
    8
}
fn default_rfa_smoothing() -> f64 {
    1e-6
}
fn default_k_fraction() -> f64 {
    0.1
}
fn default_value_bits() -> u64 {
    64
}
fn default_ipm_epsilon() -> f64 {
    0.1
}
fn default_alie_floor() -> f64 {
    0.3
}
fn default_true() -> bool {
    true
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_fstar_epochs() -> usize {
    1000
}

fn known_keys() -> BTreeSet<&'static str> {
    [
        "dataset",
        "model",
        "lambda",
        "synthetic_samples",
        "synthetic_dim",
        "data_seed",
        "dim",
        "add_bias",
        "quadratic_h_lo",
        "quadratic_h_hi",
        "quadratic_shift",
        "n_workers",
        "byz_count",
        "shard_mode",
        "algorithm",
        "gammas",
        "p",
        "batch_size",
        "sampling",
        "beta",
        "epoch_len",
        "aggregator",
        "bucket_size",
        "rfa_iters",
        "rfa_smoothing",
        "krum_byz",
        "compressor",
        "k",
        "k_fraction",
        "value_bits",
        "attack",
        "ipm_epsilon",
        "alie_z",
        "alie_z_floor",
        "sparse_framing",
        "rounds",
        "seeds",
        "output",
        "fstar_epochs",
        "parallel_workers",
    ]
    .into_iter()
    .collect()
}

/// Parses a `key=value` override; the value is read as a TOML value and
/// falls back to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, toml::Value)> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override `{spec}` is not of the form key=value")]))?;
    let key = key.trim().to_string();
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

impl RunConfig {
    /// Parses and validates a config document with optional overrides.
    pub fn from_toml_str(text: &str, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(vec![format!("malformed config: {e}")]))?;
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        let known = known_keys();
        let mut errs: Vec<String> = table
            .keys()
            .filter(|k| !known.contains(k.as_str()))
            .map(|k| format!("unknown key `{k}`"))
            .collect();
        errs.extend(
            REQUIRED_KEYS
                .iter()
                .filter(|k| !table.contains_key(**k))
                .map(|k| format!("missing required key `{k}`")),
        );
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_workers == 0 {
            errs.push("n_workers must be >= 1".to_string());
        }
        if 2 * self.byz_count >= self.n_workers.max(1) && self.byz_count > 0 {
            errs.push(format!("byz_count must be < n_workers / 2, got {} of {}", self.byz_count, self.n_workers));
        }
        if self.gammas.is_empty() {
            errs.push("gammas must be nonempty".into());
        }
        if self.gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            errs.push("every gamma must be finite and > 0".into());
        }
        if self.rounds == 0 {
            errs.push("rounds must be >= 1".into());
        }
        if self.seeds.is_empty() {
            errs.push("seeds must be nonempty".into());
        }
        if !(self.lambda >= 0.0) {
            errs.push("lambda must be >= 0".into());
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p <= 1.0) {
                errs.push(format!("p must lie in (0, 1], got {p}"));
            }
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.beta) {
            errs.push("beta must lie in [0, 1)".into());
        }
        if self.epoch_len == Some(0) {
            errs.push("epoch_len must be >= 1".into());
        }
        if self.bucket_size == 0 {
            errs.push("bucket_size must be >= 1".into());
        }
        if self.rfa_iters == 0 {
            errs.push("rfa_iters must be >= 1".into());
        }
        if !(self.rfa_smoothing > 0.0) {
            errs.push("rfa_smoothing must be > 0".into());
        }
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            errs.push("k_fraction must lie in (0, 1]".into());
        }
        if self.k == Some(0) {
            errs.push("k must be >= 1".into());
        }
        if self.attack == AttackKind::Ipm && !(self.ipm_epsilon > 0.0) {
            errs.push("ipm_epsilon must be > 0".into());
        }
        let quadratic_data = self.dataset == "quadratic";
        if quadratic_data != (self.model == LossKind::Quadratic) {
            errs.push("model `quadratic` goes with dataset `quadratic` and only with it".into());
        }
        if quadratic_data {
            if self.attack == AttackKind::Lf {
                errs.push("label flipping needs labeled data".into());
            }
            if !(self.quadratic_h_lo > 0.0 && self.quadratic_h_hi >= self.quadratic_h_lo) {
                errs.push("quadratic curvature range must satisfy 0 < h_lo <= h_hi".into());
            }
        }
        if self.algorithm == Algorithm::Sgd && self.compressor != CompressorKind::Identity {
            errs.push("algorithm `sgd` is uncompressed; use `csgd` with a compressor".into());
        }
        if self.aggregator == AggregatorBase::Krum {
            let buckets = self.n_workers.div_ceil(self.bucket_size.max(1));
            let byz = self.krum_byz.unwrap_or(self.byz_count);
            if buckets < byz + 3 {
                errs.push(format!("krum needs at least assumed_byz + 3 inputs, has {buckets} (bucketed) for {byz}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn n_good(&self) -> usize {
        self.n_workers - self.byz_count
    }
}

/// A fully built experiment: data, workers, objective and reference value.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub workers: Workers,
    pub objective: GlobalObjective,
    pub fstar: FStar,
    pub compressor: Compressor,
    pub aggregator: Aggregator,
    pub attack: Attack,
    pub p: f64,
    /// Mean number of samples per good worker.
    pub m: f64,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FStar {
    pub value: f64,
    pub x_star: Vec<f64>,
    /// Set for non-convex models, where GD only finds a stationary value.
    pub approximate: bool,
    pub epochs_run: usize,
}

/// Reference optimum of `f`: closed form for the quadratic fixture, else
/// gradient descent with step `1/l_smooth` from the origin for `epochs`
/// iterations or until `||grad f|| < 1e-12`, returning the best value seen.
pub fn compute_fstar(objective: &GlobalObjective, l_smooth: f64, epochs: usize, shards: &[WorkerShard]) -> Result<FStar> {
    let model = *objective.model();
    if model.kind == LossKind::Quadratic {
        let c = QuadraticConstants::new(&model, shards)?;
        return Ok(FStar { value: c.f_star, x_star: c.x_star, approximate: false, epochs_run: 0 });
    }
    let step = 1.0 / l_smooth;
    let mut x = vec![0.0; objective.dim()];
    let mut best = (f64::INFINITY, x.clone());
    let mut epochs_run = 0;
    for _ in 0..=epochs {
        let (loss, grad) = objective.loss_and_grad(&x)?;
        if loss < best.0 {
            best = (loss, x.clone());
        }
        if vecops::norm_sq(&grad).sqrt() < 1e-12 || epochs_run == epochs {
            break;
        }
        vecops::axpy(-step, &grad, &mut x);
        epochs_run += 1;
    }
    Ok(FStar { value: best.0, x_star: best.1, approximate: !model.is_convex(), epochs_run })
}

/// Upper bound on the smoothness constant of `f` for the configured model.
pub fn smoothness_bound(model: &LossModel, shards: &[WorkerShard]) -> Result<f64> {
    match model.kind {
        LossKind::Quadratic => Ok(QuadraticConstants::new(model, shards)?.l),
        _ => Ok(problems::smoothness_table(model, shards)?.global),
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let ds = if cfg.dataset == "synthetic" {
        data::synthetic_logistic(cfg.synthetic_samples, cfg.synthetic_dim, cfg.data_seed)?
    } else {
        data::load_libsvm(&cfg.dataset, cfg.dim)?
    };
    Ok(if cfg.add_bias { ds.with_bias() } else { ds })
}

impl Experiment {
    pub fn build(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let model = LossModel::new(config.model, config.lambda)?;
        let n_good = config.n_good();
        let (good, byz) = if config.dataset == "quadratic" {
            let good = problems::synthetic_quadratic_shards(
                n_good,
                config.synthetic_samples,
                config.synthetic_dim,
                config.quadratic_h_lo,
                config.quadratic_h_hi,
                config.quadratic_shift,
                config.data_seed,
            )?;
            let good = match config.shard_mode {
                ShardMode::FullCopy => vec![good[0].clone(); n_good]
                    .into_iter()
                    .enumerate()
                    .map(|(i, s)| WorkerShard { worker_id: i, ..s })
                    .collect(),
                ShardMode::DisjointShuffle => good,
            };
            let byz = (0..config.byz_count)
                .map(|j| WorkerShard { worker_id: n_good + j, ..good[0].clone() })
                .collect();
            (good, byz)
        } else {
            let ds = Arc::new(load_dataset(config)?);
            let good = data::shard(&ds, n_good, config.shard_mode, config.data_seed)?;
            let byz_data = if config.attack == AttackKind::Lf { Arc::new(ds.with_flipped_labels()) } else { ds };
            let byz = (0..config.byz_count).map(|j| WorkerShard::labeled(n_good + j, byz_data.clone())).collect();
            (good, byz)
        };
        let dim = good[0].dim();
        let workers = Workers { model, good, byz };
        let objective = GlobalObjective::new(model, &workers.good)?;
        let l_smooth = smoothness_bound(&model, &workers.good)?;
        let fstar = compute_fstar(&objective, l_smooth, config.fstar_epochs, &workers.good)?;
        let compressor = match config.compressor {
            CompressorKind::Identity => Compressor::identity(dim),
            CompressorKind::RandK => {
                let k = config.k.unwrap_or_else(|| ((config.k_fraction * dim as f64).ceil() as usize).clamp(1, dim));
                Compressor::rand_k(k, dim)?
            }
        }
        .with_value_bits(config.value_bits);
        let aggregator = Aggregator {
            base: config.aggregator,
            bucket_size: config.bucket_size,
            rfa_iters: config.rfa_iters,
            rfa_smoothing: config.rfa_smoothing,
            krum_byz_count: config.krum_byz.unwrap_or(config.byz_count),
        };
        let attack = Attack {
            kind: config.attack,
            ipm_epsilon: config.ipm_epsilon,
            alie_z: config.alie_z,
            alie_z_floor: config.alie_z_floor,
        };
        let m = workers.good.iter().map(|s| s.m() as f64).sum::<f64>() / workers.good.len() as f64;
        let p = config.p.unwrap_or_else(|| optimizers::default_p(config.batch_size, m.round() as usize, compressor.omega()));
        Ok(Self { config: config.clone(), workers, objective, fstar, compressor, aggregator, attack, p, m, dim })
    }

    pub fn optimizer_config(&self, gamma: f64, seed: u64) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::new(self.config.algorithm, gamma, self.aggregator, self.compressor);
        cfg.p = if self.config.algorithm == Algorithm::Marina { self.p } else { 1.0 };
        cfg.batch_size = self.config.batch_size;
        cfg.sampling = self.config.sampling;
        cfg.attack = self.attack;
        cfg.beta = self.config.beta;
        cfg.epoch_len = self.config.epoch_len;
        cfg.sparse_framing = self.config.sparse_framing;
        cfg.seed = seed;
        cfg.parallel = self.config.parallel_workers;
        cfg
    }

    /// One `(gamma, seed)` cell from `x^0 = 0`.
    pub fn run_cell(&self, gamma: f64, seed: u64) -> Result<RunOutput> {
        let cfg = self.optimizer_config(gamma, seed);
        optimizers::train(&self.workers, &cfg, vec![0.0; self.dim], self.config.rounds, &self.objective, self.fstar.value)
    }

    /// Bits of one full-precision message.
    pub fn dense_bits(&self) -> f64 {
        self.compressor.dense_bits() as f64
    }
}

/// `cum_bits / dense_bits / m` for every row.
pub fn relative_compression(rows: &[TraceRow], dense_bits: f64, m: f64) -> Vec<f64> {
    rows.iter().map(|r| r.cum_bits / dense_bits / m).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSummary {
    pub gamma: f64,
    /// Mean final gap over non-diverged seeds; `null` when all diverged.
    pub mean_final_gap: Option<f64>,
    pub stderr: Option<f64>,
    pub diverged_seeds: Vec<u64>,
    /// Mean over seeds of the final-quarter mean gap (selection criterion).
    pub mean_final_quarter_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub best_gamma: Option<f64>,
    pub per_gamma: Vec<GammaSummary>,
    pub f_star: f64,
    pub f_star_approximate: bool,
    pub m: f64,
    pub d: usize,
    pub p: f64,
    pub omega: f64,
    pub dense_bits_per_round: f64,
}

impl RunSummary {
    pub fn all_diverged(&self) -> bool {
        self.per_gamma.iter().all(|g| g.mean_final_gap.is_none())
    }
}

/// Mean and standard error (`sample std / sqrt(n)`; zero for `n = 1`).
pub fn mean_stderr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Summaries per gamma and the selected step: fewest diverged seeds first,
/// then smallest mean final-quarter gap.
pub fn summarize(gammas: &[f64], seeds: &[u64], outputs: &[Vec<RunOutput>]) -> (Option<f64>, Vec<GammaSummary>) {
    let mut per_gamma = Vec::with_capacity(gammas.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        let runs = &outputs[gi];
        let diverged_seeds: Vec<u64> =
            runs.iter().zip(seeds).filter(|(r, _)| r.diverged_at.is_some()).map(|(_, s)| *s).collect();
        let finals: Vec<f64> = runs.iter().filter(|r| r.diverged_at.is_none()).map(|r| r.final_gap()).collect();
        let quarters: Vec<f64> =
            runs.iter().filter(|r| r.diverged_at.is_none()).map(|r| r.final_quarter_gap()).collect();
        let ms = mean_stderr(&finals);
        per_gamma.push(GammaSummary {
            gamma,
            mean_final_gap: ms.map(|(m, _)| m),
            stderr: ms.map(|(_, s)| s),
            diverged_seeds,
            mean_final_quarter_gap: mean_stderr(&quarters).map(|(m, _)| m),
        });
    }
    let best = per_gamma
        .iter()
        .filter(|g| g.mean_final_quarter_gap.is_some())
        .min_by(|a, b| {
            a.diverged_seeds
                .len()
                .cmp(&b.diverged_seeds.len())
                .then(a.mean_final_quarter_gap.unwrap().total_cmp(&b.mean_final_quarter_gap.unwrap()))
        })
        .map(|g| g.gamma);
    (best, per_gamma)
}

/// Runs every `(gamma, seed)` cell (in parallel across cells) and returns
/// the outputs indexed `[gamma][seed]`.
pub fn run_grid(exp: &Experiment) -> Result<Vec<Vec<RunOutput>>> {
    let cfg = &exp.config;
    let cells: Vec<(usize, usize)> =
        (0..cfg.gammas.len()).flat_map(|g| (0..cfg.seeds.len()).map(move |s| (g, s))).collect();
    let results: Vec<RunOutput> = cells
        .par_iter()
        .map(|&(g, s)| exp.run_cell(cfg.gammas[g], cfg.seeds[s]))
        .collect::<Result<_>>()?;
    let mut grid: Vec<Vec<RunOutput>> = vec![Vec::with_capacity(cfg.seeds.len()); cfg.gammas.len()];
    for ((g, _), out) in cells.into_iter().zip(results) {
        grid[g].push(out);
    }
    Ok(grid)
}

/// Trace CSV text for one run.
pub fn trace_csv(seed: u64, rows: &[TraceRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            seed, r.k, r.gap, r.grad_norm_sq, r.cum_bits, r.cum_oracle, r.diag_msg_var, r.diag_gdist
        ));
    }
    s
}

pub fn trace_file_name(gamma_index: usize, seed: u64) -> String {
    format!("trace_gamma{gamma_index}_seed{seed}.csv")
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Full driver: builds the experiment, runs the grid and writes one CSV per
/// `(gamma, seed)` plus `summary.json` into `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let exp = Experiment::build(config)?;
    let grid = run_grid(&exp)?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io { path: out_dir.display().to_string(), source })?;
    for (gi, runs) in grid.iter().enumerate() {
        for (run, &seed) in runs.iter().zip(&config.seeds) {
            write_atomic(&out_dir.join(trace_file_name(gi, seed)), trace_csv(seed, &run.rows).as_bytes())?;
        }
    }
    let (best_gamma, per_gamma) = summarize(&config.gammas, &config.seeds, &grid);
    let summary = RunSummary {
        best_gamma,
        per_gamma,
        f_star: exp.fstar.value,
        f_star_approximate: exp.fstar.approximate,
        m: exp.m,
        d: exp.dim,
        p: exp.optimizer_config(config.gammas[0], 0).p,
        omega: exp.compressor.omega(),
        dense_bits_per_round: exp.dense_bits(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_atomic(&out_dir.join("summary.json"), json.as_bytes())?;
    Ok(summary)
}

/// Input document of the aggregator audit.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub aggregator: AggregatorBase,
    #[serde(default = "default_bucket")]
    pub bucket_size: usize,
    #[serde(default)]
    pub krum_byz: Option<usize>,
    #[serde(default = "default_rfa_iters")]
    pub rfa_iters: usize,
    #[serde(default = "default_rfa_smoothing")]
    pub rfa_smoothing: f64,
    #[serde(default = "default_certify_good")]
    pub good: usize,
    #[serde(default = "default_certify_byz")]
    pub byz: usize,
    #[serde(default = "default_certify_dim")]
    pub dim: usize,
    #[serde(default = "default_certify_sigma")]
    pub sigma: f64,
    #[serde(default = "default_certify_far")]
    pub far: f64,
    #[serde(default = "default_certify_trials")]
    pub trials: usize,
    #[serde(default = "default_certify_seed")]
    pub seed: u64,
}

fn default_certify_good() -> usize {
    18
}
fn default_certify_byz() -> usize {
    2
}
fn default_certify_dim() -> usize {
    10
}
fn default_certify_sigma() -> f64 {
    1.0
}
fn default_certify_far() -> f64 {
    100.0
}
fn default_certify_trials() -> usize {
    200
}
fn default_certify_seed() -> u64 {
    1
}

impl CertifyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
    }

    pub fn aggregator(&self) -> Aggregator {
        Aggregator {
            base: self.aggregator,
            bucket_size: self.bucket_size,
            rfa_iters: self.rfa_iters,
            rfa_smoothing: self.rfa_smoothing,
            krum_byz_count: self.krum_byz.unwrap_or(self.byz),
        }
    }

    pub fn spec(&self) -> crate::aggregation::CertifySpec {
        crate::aggregation::CertifySpec {
            good: self.good,
            byz: self.byz,
            dim: self.dim,
            sigma: self.sigma,
            far: self.far,
            trials: self.trials,
            seed: self.seed,
        }
    }
}

/// Parses bound-calculator inputs from TOML.
pub fn theory_inputs_from_toml(text: &str) -> Result<crate::theory::TheoryInputs> {
    let t: crate::theory::TheoryInputs = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
    t.validate()?;
    Ok(t)
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
dataset = "synthetic"
synthetic_samples = 64
synthetic_dim = 5
model = "logistic_l2"
lambda = 0.01
n_workers = 5
byz_count = 1
shard_mode = "full_copy"
algorithm = "marina"
gammas = [0.5]
aggregator = "cm"
compressor = "rand_k"
attack = "ipm"
rounds = 5
seeds = [1]
"#;

    #[test]
    fn parses_and_defaults() {
        let cfg = RunConfig::from_toml_str(BASE, &[]).unwrap();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.bucket_size, 2);
        assert_eq!(cfg.ipm_epsilon, 0.1);
        assert_eq!(cfg.rfa_iters, 8);
    }

    #[test]
    fn reports_every_problem() {
        let text = format!("{BASE}\nbogus = 1\ntypo_key = \"x\"\n").replace("rounds = 5\n", "");
        let Err(Error::Config(errs)) = RunConfig::from_toml_str(&text, &[]) else { panic!() };
        assert_eq!(errs.len(), 3, "{errs:?}");
        let bad = BASE.replace("byz_count = 1", "byz_count = 3").replace("gammas = [0.5]", "gammas = []");
        let Err(Error::Config(errs)) = RunConfig::from_toml_str(&bad, &[]) else { panic!() };
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn overrides_apply() {
        let ov = vec![parse_override("attack=alie").unwrap(), parse_override("gammas=[0.1, 0.2]").unwrap()];
        let cfg = RunConfig::from_toml_str(BASE, &ov).unwrap();
        assert_eq!(cfg.attack, AttackKind::Alie);
        assert_eq!(cfg.gammas, vec![0.1, 0.2]);
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn stderr_convention() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trips_floats() {
        let row = TraceRow {
            k: 3,
            loss: 0.0,
            gap: 0.1 + 0.2,
            grad_norm_sq: 1e-300,
            cum_bits: 12345.0,
            cum_components: 0.0,
            cum_oracle: 7.5,
            diag_msg_var: f64::NAN,
            diag_gdist: 2.0 / 3.0,
        };
        let text = trace_csv(9, &[row]);
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(fields[7].parse::<f64>().unwrap(), 2.0 / 3.0);
        assert!(fields[6].parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn relative_compression_starts_at_zero() {
        let cfg = RunConfig::from_toml_str(BASE, &[]).unwrap();
        let exp = Experiment::build(&cfg).unwrap();
        let out = exp.run_cell(0.5, 1).unwrap();
        let rc = relative_compression(&out.rows, exp.dense_bits(), exp.m);
        assert_eq!(rc[0], 0.0);
        assert!(rc.windows(2).all(|w| w[1] >= w[0]));
    }
}
