//! Training loops: Byz-VR-MARINA and the SGD-family baselines, sharing the
//! aggregation, attack and compression plumbing.
//!
//! Stream layout (see [`crate::rng`]): good worker `i` owns sampling and
//! compression streams with index `i`; Byzantine worker `j` uses index
//! `G + j`. The server's coin and bucketing streams have index 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::Aggregator;
use crate::attacks::{byz_message, project_sparse, Attack, AttackContext, AttackKind};
use crate::compression::{Compressor, CompressorKind};
use crate::data::WorkerShard;
use crate::error::{Error, Result};
use crate::problems::{self, GlobalObjective, LossModel, SamplingScheme, WorkerSampler};
use crate::rng::{RngStream, StreamRole};
use crate::vecops::{self, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(alias = "byz_vr_marina")]
    Marina,
    Sgd,
    Csgd,
    BrSgdm,
    ByrdSvrg,
}

/// Good and Byzantine workers' data. Byzantine shards feed the honest
/// pipeline used by NA, LF and BF.
#[derive(Debug, Clone)]
pub struct Workers {
    pub model: LossModel,
    pub good: Vec<WorkerShard>,
    pub byz: Vec<WorkerShard>,
}

impl Workers {
    pub fn n(&self) -> usize {
        self.good.len() + self.byz.len()
    }

    pub fn dim(&self) -> usize {
        self.good.first().map_or(0, |s| s.dim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub p: f64,
    pub batch_size: usize,
    pub sampling: SamplingScheme,
    pub aggregator: Aggregator,
    pub compressor: Compressor,
    pub attack: Attack,
    /// Worker momentum for BR-SGDm.
    pub beta: f64,
    /// Anchor refresh period of Byrd-SVRG; `None` means `ceil(m / b)`.
    pub epoch_len: Option<usize>,
    /// Project crafted messages onto the sparsity pattern of compressed
    /// rounds (`k` coordinates) when RandK is in use.
    pub sparse_framing: bool,
    pub seed: u64,
    pub parallel: bool,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, aggregator: Aggregator, compressor: Compressor) -> Self {
        Self {
            algorithm,
            gamma,
            p: 1.0,
            batch_size: 32,
            sampling: SamplingScheme::Uniform,
            aggregator,
            compressor,
            attack: Attack::new(AttackKind::Na),
            beta: 0.9,
            epoch_len: None,
            sparse_framing: true,
            seed: 1,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            errs.push(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            errs.push(format!("p must lie in (0, 1], got {}", self.p));
        }
        if self.batch_size == 0 {
            errs.push("batch size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.beta) {
            errs.push(format!("beta must lie in [0, 1), got {}", self.beta));
        }
        if self.epoch_len == Some(0) {
            errs.push("epoch_len must be >= 1".into());
        }
        if let Err(e) = self.aggregator.validate() {
            errs.push(e.to_string());
        }
        if let Err(e) = self.attack.validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Default communication probability `min(b/m, 1/(1+omega))`.
pub fn default_p(batch_size: usize, m: usize, omega: f64) -> f64 {
    (batch_size as f64 / m as f64).min(1.0 / (1.0 + omega)).min(1.0)
}

/// Per-good-worker cost of one round, averaged over good workers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundCost {
    pub bits: f64,
    pub components: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundInfo {
    /// The shared coin `c_k` (always true for baselines).
    pub coin: bool,
    pub cost: RoundCost,
}

#[derive(Debug, Clone)]
struct Worker {
    shard: WorkerShard,
    sampler: WorkerSampler,
    sample_rng: RngStream,
    comp_rng: RngStream,
    momentum: ParamVector,
    anchor: Option<(ParamVector, ParamVector)>,
}

impl Worker {
    fn new(shard: WorkerShard, model: &LossModel, scheme: SamplingScheme, seed: u64, index: u32) -> Result<Self> {
        let sampler = WorkerSampler::new(scheme, model, &shard)?;
        let d = shard.dim();
        Ok(Self {
            shard,
            sampler,
            sample_rng: RngStream::new(seed, StreamRole::Sampling, index),
            comp_rng: RngStream::new(seed, StreamRole::Compression, index),
            momentum: vec![0.0; d],
            anchor: None,
        })
    }

    fn reseed(&mut self, seed: u64, role_index: u32) {
        self.sample_rng = RngStream::new(seed, StreamRole::Replay, 2 * role_index);
        self.comp_rng = RngStream::new(seed, StreamRole::Replay, 2 * role_index + 1);
    }

    fn m(&self) -> usize {
        self.shard.m()
    }

    fn marina_message(
        &mut self,
        model: &LossModel,
        compressor: &Compressor,
        batch: usize,
        coin: bool,
        x_new: &[f64],
        x_old: &[f64],
        g: &[f64],
    ) -> Result<(ParamVector, RoundCost)> {
        if coin {
            let grad = problems::full_grad(model, &self.shard, x_new)?;
            let cost = RoundCost {
                bits: compressor.dense_bits() as f64,
                components: compressor.d as f64,
                oracle: self.m() as f64,
            };
            return Ok((grad, cost));
        }
        let draws = self.sampler.draw_batch(batch, &mut self.sample_rng);
        let delta = problems::delta_from_draws(model, &self.shard, &self.sampler, &draws, x_new, x_old)?;
        let msg = compressor.compress(&delta, &mut self.comp_rng)?;
        let mut out = g.to_vec();
        msg.add_into(&mut out)?;
        let cost = RoundCost {
            bits: msg.bit_cost as f64,
            components: msg.components() as f64,
            oracle: 2.0 * batch as f64,
        };
        Ok((out, cost))
    }

    /// Mini-batch gradient; a batch covering the shard uses the exact local gradient.
    fn stochastic_grad(&mut self, model: &LossModel, batch: usize, x: &[f64]) -> Result<(ParamVector, f64)> {
        if batch >= self.m() {
            return Ok((problems::full_grad(model, &self.shard, x)?, self.m() as f64));
        }
        let grad = problems::minibatch_grad(model, &self.shard, &self.sampler, batch, x, &mut self.sample_rng)?;
        Ok((grad, batch as f64))
    }

    fn baseline_message(
        &mut self,
        model: &LossModel,
        cfg: &OptimizerConfig,
        round: usize,
        x: &[f64],
    ) -> Result<(ParamVector, RoundCost)> {
        let dense = |oracle: f64| RoundCost {
            bits: cfg.compressor.dense_bits() as f64,
            components: cfg.compressor.d as f64,
            oracle,
        };
        match cfg.algorithm {
            Algorithm::Sgd => {
                let (grad, oracle) = self.stochastic_grad(model, cfg.batch_size, x)?;
                Ok((grad, dense(oracle)))
            }
            Algorithm::Csgd => {
                let (grad, oracle) = self.stochastic_grad(model, cfg.batch_size, x)?;
                let msg = cfg.compressor.compress(&grad, &mut self.comp_rng)?;
                let out = crate::compression::decompress(&msg, grad.len())?;
                Ok((out, RoundCost { bits: msg.bit_cost as f64, components: msg.components() as f64, oracle }))
            }
            Algorithm::BrSgdm => {
                let (grad, oracle) = self.stochastic_grad(model, cfg.batch_size, x)?;
                for (m, g) in self.momentum.iter_mut().zip(&grad) {
                    *m = cfg.beta * *m + (1.0 - cfg.beta) * g;
                }
                Ok((self.momentum.clone(), dense(oracle)))
            }
            Algorithm::ByrdSvrg => {
                let epoch = cfg.epoch_len.unwrap_or_else(|| self.m().div_ceil(cfg.batch_size));
                let mut oracle = 0.0;
                if self.anchor.is_none() || round % epoch == 0 {
                    let full = problems::full_grad(model, &self.shard, x)?;
                    self.anchor = Some((x.to_vec(), full));
                    oracle += self.m() as f64;
                }
                let (anchor_x, anchor_g) = self.anchor.as_ref().expect("anchor set above");
                let draws = self.sampler.draw_batch(cfg.batch_size, &mut self.sample_rng);
                let mut msg = problems::delta_from_draws(model, &self.shard, &self.sampler, &draws, x, anchor_x)?;
                vecops::axpy(1.0, anchor_g, &mut msg);
                oracle += 2.0 * cfg.batch_size as f64;
                Ok((msg, dense(oracle)))
            }
            Algorithm::Marina => unreachable!("marina uses marina_message"),
        }
    }
}

/// A training run in progress.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: LossModel,
    cfg: OptimizerConfig,
    good: Vec<Worker>,
    byz: Vec<Worker>,
    coin_rng: RngStream,
    bucket_rng: RngStream,
    x: ParamVector,
    /// MARINA: the estimate `g^k`. Baselines: the last aggregate.
    g: ParamVector,
    k: usize,
    last_good: Vec<ParamVector>,
}

impl Trainer {
    /// Sets up workers and, for MARINA, the initial estimate
    /// `g^0 = ARAgg(grad f_1(x^0), ..., grad f_n(x^0))`.
    pub fn new(workers: &Workers, cfg: &OptimizerConfig, x0: ParamVector) -> Result<Self> {
        cfg.validate()?;
        if workers.good.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = workers.dim();
        crate::error::check_dim(d, x0.len())?;
        crate::error::check_dim(d, cfg.compressor.d)?;
        // Streams follow the shard's worker id, so relabelling workers
        // relabels their randomness with them.
        let mut seen = std::collections::HashSet::new();
        for s in workers.good.iter().chain(&workers.byz) {
            crate::error::check_dim(d, s.dim())?;
            if !seen.insert(s.worker_id) {
                return Err(Error::InvalidArgument(format!("duplicate worker id {}", s.worker_id)));
            }
        }
        let make = |s: &WorkerShard| Worker::new(s.clone(), &workers.model, cfg.sampling, cfg.seed, s.worker_id as u32);
        let good = workers.good.iter().map(make).collect::<Result<Vec<_>>>()?;
        let byz = workers.byz.iter().map(make).collect::<Result<Vec<_>>>()?;
        let mut t = Self {
            model: workers.model,
            cfg: *cfg,
            good,
            byz,
            coin_rng: RngStream::new(cfg.seed, StreamRole::ServerCoin, 0),
            bucket_rng: RngStream::new(cfg.seed, StreamRole::ServerBucketing, 0),
            x: x0,
            g: vec![0.0; d],
            k: 0,
            last_good: Vec::new(),
        };
        if cfg.algorithm == Algorithm::Marina {
            t.init_g0()?;
        }
        Ok(t)
    }

    fn init_g0(&mut self) -> Result<()> {
        let model = self.model;
        let x = self.x.clone();
        let good = self.map_good(|w| problems::full_grad(&model, &w.shard, &x))?;
        let byz = self.byzantine_messages(&good, None, |w| problems::full_grad(&model, &w.shard, &x))?;
        self.g = self.aggregate(&good, byz)?;
        self.last_good = good;
        Ok(())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// MARINA's `g^k`; for baselines the aggregate of the last round.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn round(&self) -> usize {
        self.k
    }

    /// Good messages aggregated in the last round (or at initialisation).
    pub fn last_good_messages(&self) -> &[ParamVector] {
        &self.last_good
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.good.len() + self.byz.len()
    }

    /// Replaces every random stream with fresh replay streams; used for
    /// Monte-Carlo replays of a single round from a frozen state.
    pub fn reseed_for_replay(&mut self, seed: u64, replay: u32) {
        let n = self.n() as u32;
        let base = replay * (n + 2);
        for (i, w) in self.good.iter_mut().chain(self.byz.iter_mut()).enumerate() {
            w.reseed(seed, base + i as u32);
        }
        self.coin_rng = RngStream::new(seed, StreamRole::Replay, 2 * (base + n));
        self.bucket_rng = RngStream::new(seed, StreamRole::Replay, 2 * (base + n) + 1);
    }

    fn map_good<F>(&mut self, f: F) -> Result<Vec<ParamVector>>
    where
        F: Fn(&mut Worker) -> Result<ParamVector> + Sync + Send,
    {
        if self.cfg.parallel && self.good.len() > 1 {
            self.good.par_iter_mut().map(f).collect()
        } else {
            self.good.iter_mut().map(f).collect()
        }
    }

    fn map_good_with_cost<F>(&mut self, f: F) -> Result<Vec<(ParamVector, RoundCost)>>
    where
        F: Fn(&mut Worker) -> Result<(ParamVector, RoundCost)> + Sync + Send,
    {
        if self.cfg.parallel && self.good.len() > 1 {
            self.good.par_iter_mut().map(f).collect()
        } else {
            self.good.iter_mut().map(f).collect()
        }
    }

    /// Byzantine messages. `sparse_base` is the vector that compressed
    /// honest messages are sparse corrections of, if the round is compressed.
    fn byzantine_messages<F>(&mut self, good: &[ParamVector], sparse_base: Option<&[f64]>, honest: F) -> Result<Vec<ParamVector>>
    where
        F: Fn(&mut Worker) -> Result<ParamVector>,
    {
        let n = self.n();
        let byz_count = self.byz.len();
        let attack = self.cfg.attack;
        let ctx = AttackContext { good_messages: good, n, byz_count, round: self.k };
        let project = match (self.cfg.sparse_framing, sparse_base, self.cfg.compressor.kind) {
            (true, Some(base), CompressorKind::RandK) => Some((base, self.cfg.compressor.k)),
            _ => None,
        };
        let mut out = Vec::with_capacity(byz_count);
        if attack.kind.is_crafted() {
            if byz_count == 0 {
                return Ok(out);
            }
            let mut v = byz_message(&attack, &ctx, || unreachable!("crafted attacks ignore the pipeline"))?;
            if let Some((base, k)) = project {
                v = project_sparse(base, &v, k);
            }
            out.resize(byz_count, v);
            return Ok(out);
        }
        for w in self.byz.iter_mut() {
            out.push(byz_message(&attack, &ctx, || honest(w))?);
        }
        Ok(out)
    }

    fn aggregate(&mut self, good: &[ParamVector], byz: Vec<ParamVector>) -> Result<ParamVector> {
        let mut all = Vec::with_capacity(good.len() + byz.len());
        all.extend_from_slice(good);
        all.extend(byz);
        self.cfg.aggregator.aggregate(&all, &mut self.bucket_rng)
    }

    /// One round. `force_coin` overrides MARINA's server coin (used by
    /// replays); the coin stream is still advanced.
    pub fn step_with_coin(&mut self, force_coin: Option<bool>) -> Result<RoundInfo> {
        let info = match self.cfg.algorithm {
            Algorithm::Marina => self.marina_round(force_coin)?,
            _ => self.baseline_round()?,
        };
        self.k += 1;
        if !vecops::is_finite(&self.x) {
            return Err(Error::Diverged { round: self.k });
        }
        Ok(info)
    }

    pub fn step(&mut self) -> Result<RoundInfo> {
        self.step_with_coin(None)
    }

    fn marina_round(&mut self, force_coin: Option<bool>) -> Result<RoundInfo> {
        let drawn = self.coin_rng.bernoulli(self.cfg.p);
        let coin = force_coin.unwrap_or(drawn);
        let gamma = self.cfg.gamma;
        let x_old = std::mem::take(&mut self.x);
        let x_new: ParamVector = x_old.iter().zip(&self.g).map(|(x, g)| x - gamma * g).collect();
        let g = std::mem::take(&mut self.g);
        let model = self.model;
        let comp = self.cfg.compressor;
        let batch = self.cfg.batch_size;
        let results =
            self.map_good_with_cost(|w| w.marina_message(&model, &comp, batch, coin, &x_new, &x_old, &g))?;
        let cost = average_cost(&results);
        let good: Vec<ParamVector> = results.into_iter().map(|(v, _)| v).collect();
        let base = if coin { None } else { Some(g.as_slice()) };
        let byz = self.byzantine_messages(&good, base, |w| {
            w.marina_message(&model, &comp, batch, coin, &x_new, &x_old, &g).map(|(v, _)| v)
        })?;
        self.g = self.aggregate(&good, byz)?;
        self.x = x_new;
        self.last_good = good;
        Ok(RoundInfo { coin, cost })
    }

    fn baseline_round(&mut self) -> Result<RoundInfo> {
        let model = self.model;
        let cfg = self.cfg;
        let round = self.k;
        let x = std::mem::take(&mut self.x);
        let results = self.map_good_with_cost(|w| w.baseline_message(&model, &cfg, round, &x))?;
        let cost = average_cost(&results);
        let good: Vec<ParamVector> = results.into_iter().map(|(v, _)| v).collect();
        let zeros = vec![0.0; x.len()];
        let base = (cfg.algorithm == Algorithm::Csgd).then_some(zeros.as_slice());
        let byz = self.byzantine_messages(&good, base, |w| w.baseline_message(&model, &cfg, round, &x).map(|(v, _)| v))?;
        let agg = self.aggregate(&good, byz)?;
        self.x = x.iter().zip(&agg).map(|(x, g)| x - cfg.gamma * g).collect();
        self.g = agg;
        self.last_good = good;
        Ok(RoundInfo { coin: true, cost })
    }
}

fn average_cost(results: &[(ParamVector, RoundCost)]) -> RoundCost {
    let n = results.len() as f64;
    let mut c = RoundCost::default();
    for (_, r) in results {
        c.bits += r.bits;
        c.components += r.components;
        c.oracle += r.oracle;
    }
    RoundCost { bits: c.bits / n, components: c.components / n, oracle: c.oracle / n }
}

/// One row of a run trace, describing iterate `x^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub loss: f64,
    pub gap: f64,
    pub grad_norm_sq: f64,
    /// Bits sent per good worker to reach `x^k`.
    pub cum_bits: f64,
    pub cum_components: f64,
    pub cum_oracle: f64,
    /// Pairwise variance of the good messages behind the estimate at `x^k`.
    pub diag_msg_var: f64,
    /// `||g^k - grad f(x^k)||^2`; for baselines the aggregate computed at `x^k`.
    pub diag_gdist: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<TraceRow>,
    /// Round at which the iterate or loss became non-finite.
    pub diverged_at: Option<usize>,
    pub final_x: ParamVector,
}

impl RunOutput {
    /// Mean gap over the last quarter of the recorded rows; infinite if the
    /// run diverged.
    pub fn final_quarter_gap(&self) -> f64 {
        if self.diverged_at.is_some() || self.rows.is_empty() {
            return f64::INFINITY;
        }
        let n = self.rows.len();
        let start = n - (n / 4).max(1);
        let tail = &self.rows[start..];
        tail.iter().map(|r| r.gap).sum::<f64>() / tail.len() as f64
    }

    pub fn final_gap(&self) -> f64 {
        if self.diverged_at.is_some() {
            return f64::INFINITY;
        }
        self.rows.last().map_or(f64::INFINITY, |r| r.gap)
    }
}

/// Runs `rounds` rounds and records a trace row for every `k = 0..=rounds`.
pub fn train(
    workers: &Workers,
    cfg: &OptimizerConfig,
    x0: ParamVector,
    rounds: usize,
    objective: &GlobalObjective,
    f_star: f64,
) -> Result<RunOutput> {
    let mut trainer = Trainer::new(workers, cfg, x0)?;
    let is_marina = cfg.algorithm == Algorithm::Marina;
    let mut rows = Vec::with_capacity(rounds + 1);
    let mut cum = RoundCost::default();
    let mut diverged_at = None;

    let (loss, grad) = objective.loss_and_grad(trainer.x())?;
    let mut last_grad = grad;
    rows.push(make_row(0, loss, f_star, &last_grad, cum, &trainer, is_marina));
    if !loss.is_finite() {
        diverged_at = Some(0);
    }
    for k in 0..rounds {
        if diverged_at.is_some() {
            break;
        }
        let info = match trainer.step() {
            Ok(info) => info,
            Err(Error::Diverged { round }) => {
                diverged_at = Some(round);
                break;
            }
            Err(e) => return Err(e),
        };
        if !is_marina {
            let row = rows.last_mut().expect("row 0 exists");
            row.diag_gdist = vecops::dist_sq(trainer.g(), &last_grad);
            row.diag_msg_var = vecops::pairwise_variance(trainer.last_good_messages());
        }
        cum.bits += info.cost.bits;
        cum.components += info.cost.components;
        cum.oracle += info.cost.oracle;
        let (loss, grad) = objective.loss_and_grad(trainer.x())?;
        if !loss.is_finite() || !vecops::is_finite(&grad) {
            diverged_at = Some(k + 1);
            break;
        }
        last_grad = grad;
        rows.push(make_row(k + 1, loss, f_star, &last_grad, cum, &trainer, is_marina));
    }
    Ok(RunOutput { rows, diverged_at, final_x: trainer.x().to_vec() })
}

fn make_row(
    k: usize,
    loss: f64,
    f_star: f64,
    grad: &[f64],
    cum: RoundCost,
    trainer: &Trainer,
    is_marina: bool,
) -> TraceRow {
    let (msg_var, gdist) = if is_marina {
        (vecops::pairwise_variance(trainer.last_good_messages()), vecops::dist_sq(trainer.g(), grad))
    } else {
        (f64::NAN, f64::NAN)
    };
    TraceRow {
        k,
        loss,
        gap: loss - f_star,
        grad_norm_sq: vecops::norm_sq(grad),
        cum_bits: cum.bits,
        cum_components: cum.components,
        cum_oracle: cum.oracle,
        diag_msg_var: msg_var,
        diag_gdist: gdist,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::AggregatorBase;
    use crate::data::QuadraticSamples;
    use crate::problems::LossKind;
    use std::sync::Arc;

    fn one_d_quadratic() -> Workers {
        let q = QuadraticSamples::new(vec![vec![1.0]], vec![vec![0.0]]).unwrap();
        Workers {
            model: LossModel::new(LossKind::Quadratic, 0.0).unwrap(),
            good: vec![WorkerShard::quadratic(0, Arc::new(q))],
            byz: vec![],
        }
    }

    fn mean_agg() -> Aggregator {
        Aggregator::new(AggregatorBase::Mean).with_bucket_size(1)
    }

    #[test]
    fn hand_computed_compressed_round() {
        let w = one_d_quadratic();
        let mut cfg = OptimizerConfig::new(Algorithm::Marina, 0.5, mean_agg(), Compressor::identity(1));
        cfg.batch_size = 1;
        let mut t = Trainer::new(&w, &cfg, vec![1.0]).unwrap();
        assert_eq!(t.g(), &[1.0]);
        t.step_with_coin(Some(false)).unwrap();
        assert_eq!(t.x(), &[0.5]);
        assert_eq!(t.g(), &[0.5]);
    }

    #[test]
    fn zero_step_is_a_fixed_point() {
        let w = one_d_quadratic();
        let mut cfg = OptimizerConfig::new(Algorithm::Marina, 0.0, mean_agg(), Compressor::identity(1));
        cfg.p = 0.3;
        let mut t = Trainer::new(&w, &cfg, vec![2.0]).unwrap();
        for _ in 0..10 {
            t.step_with_coin(Some(false)).unwrap();
            assert_eq!(t.x(), &[2.0]);
            assert_eq!(t.g(), &[2.0]);
        }
    }

    #[test]
    fn svrg_at_anchor_sends_full_gradient() {
        let data = Arc::new(crate::data::synthetic_logistic(30, 3, 4).unwrap());
        let model = LossModel::new(LossKind::LogisticL2, 0.01).unwrap();
        let w = Workers { model, good: vec![WorkerShard::labeled(0, data)], byz: vec![] };
        let mut cfg = OptimizerConfig::new(Algorithm::ByrdSvrg, 0.1, mean_agg(), Compressor::identity(3));
        cfg.batch_size = 4;
        cfg.epoch_len = Some(1);
        let mut t = Trainer::new(&w, &cfg, vec![0.1, 0.2, 0.3]).unwrap();
        for _ in 0..3 {
            let x = t.x().to_vec();
            t.step().unwrap();
            assert_eq!(t.g(), problems::full_grad(&model, &w.good[0], &x).unwrap().as_slice());
        }
    }

    #[test]
    fn momentum_converges_geometrically_on_constant_gradient() {
        // gamma = 0 freezes x, so every stochastic gradient is the constant 3
        let w = one_d_quadratic();
        let mut cfg = OptimizerConfig::new(Algorithm::BrSgdm, 0.0, mean_agg(), Compressor::identity(1));
        cfg.batch_size = 1;
        let mut t = Trainer::new(&w, &cfg, vec![3.0]).unwrap();
        for k in 1..=20 {
            t.step().unwrap();
            let expected = 3.0 * (1.0 - 0.9f64.powi(k));
            assert!((t.g()[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn default_p_formula() {
        assert_eq!(default_p(32, 3200, 9.0), 0.01);
        assert_eq!(default_p(32, 64, 0.0), 0.5);
        assert_eq!(default_p(32, 16, 0.0), 1.0);
    }
}
