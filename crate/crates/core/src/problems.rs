//! Loss functions, exact gradients, per-sample smoothness constants and the
//! mini-batched gradient-difference estimators.
//!
//! Supported local losses (all averaged over the worker's `m` samples):
//!
//! * `LogisticL2`: `softplus(a.x) - y a.x + lambda ||x||^2`
//! * `LogisticNonconvex`: `softplus(a.x) - y a.x + lambda sum_t x_t^2 / (1 + x_t^2)`
//! * `Quadratic`: `1/2 sum_t h_t (x_t - c_t)^2 + lambda ||x||^2` (diagonal fixture)
//!
//! The regularizer is `lambda ||x||^2`, not `lambda/2 ||x||^2`, so the
//! strong-convexity modulus contributed by it is `2 lambda`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, QuadraticSamples, Samples, WorkerShard};
use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::vecops::{self, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    LogisticL2,
    LogisticNonconvex,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    pub lambda: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { kind, lambda })
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.kind, LossKind::LogisticNonconvex)
    }

    fn check(&self, samples: &Samples) -> Result<()> {
        match (self.kind, samples) {
            (LossKind::Quadratic, Samples::Quadratic(_)) => Ok(()),
            (LossKind::LogisticL2 | LossKind::LogisticNonconvex, Samples::Labeled(_)) => Ok(()),
            (kind, _) => Err(Error::UnsupportedModel(format!("{kind:?} does not match shard sample type"))),
        }
    }

    fn regularizer(&self, x: &[f64]) -> f64 {
        match self.kind {
            LossKind::LogisticNonconvex => self.lambda * x.iter().map(|v| v * v / (1.0 + v * v)).sum::<f64>(),
            _ => self.lambda * vecops::norm_sq(x),
        }
    }

    /// `out += alpha * grad(regularizer)(x)`
    fn add_regularizer_grad(&self, x: &[f64], alpha: f64, out: &mut [f64]) {
        if self.lambda == 0.0 {
            return;
        }
        match self.kind {
            LossKind::LogisticNonconvex => {
                for (o, &v) in out.iter_mut().zip(x) {
                    let q = 1.0 + v * v;
                    *o += alpha * self.lambda * 2.0 * v / (q * q);
                }
            }
            _ => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o += alpha * 2.0 * self.lambda * v;
                }
            }
        }
    }
}

/// Logistic function computed without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` computed without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn logistic_data_loss(data: &Dataset, j: usize, x: &[f64]) -> f64 {
    let z = data.row(j).dot(x);
    softplus(z) - data.label(j) * z
}

/// Data part (no regularizer) of one sample's gradient, accumulated into `out`.
fn add_sample_data_grad(samples: &Samples, j: usize, x: &[f64], alpha: f64, out: &mut [f64]) {
    match samples {
        Samples::Labeled(data) => {
            let row = data.row(j);
            let residual = sigmoid(row.dot(x)) - data.label(j);
            row.axpy_into(alpha * residual, out);
        }
        Samples::Quadratic(q) => {
            for t in 0..q.dim {
                out[t] += alpha * q.curvature[j][t] * (x[t] - q.center[j][t]);
            }
        }
    }
}

/// Data-part gradient difference `grad f_j(x) - grad f_j(y)` accumulated into `out`.
fn add_sample_data_diff(samples: &Samples, j: usize, x: &[f64], y: &[f64], alpha: f64, out: &mut [f64]) {
    match samples {
        Samples::Labeled(data) => {
            let row = data.row(j);
            let coef = sigmoid(row.dot(x)) - sigmoid(row.dot(y));
            row.axpy_into(alpha * coef, out);
        }
        Samples::Quadratic(q) => {
            for t in 0..q.dim {
                out[t] += alpha * q.curvature[j][t] * (x[t] - y[t]);
            }
        }
    }
}

fn sample_data_loss(samples: &Samples, j: usize, x: &[f64]) -> f64 {
    match samples {
        Samples::Labeled(data) => logistic_data_loss(data, j, x),
        Samples::Quadratic(q) => {
            0.5 * (0..q.dim)
                .map(|t| q.curvature[j][t] * (x[t] - q.center[j][t]).powi(2))
                .sum::<f64>()
        }
    }
}

/// Local loss `f_i(x) = 1/m sum_j f_{i,j}(x)`.
pub fn loss(model: &LossModel, shard: &WorkerShard, x: &[f64]) -> Result<f64> {
    model.check(&shard.samples)?;
    check_dim(shard.dim(), x.len())?;
    let m = shard.m();
    let data: f64 = (0..m).map(|j| sample_data_loss(&shard.samples, j, x)).sum();
    Ok(data / m as f64 + model.regularizer(x))
}

/// Loss of a single sample `f_{i,j}(x)`.
pub fn sample_loss(model: &LossModel, shard: &WorkerShard, j: usize, x: &[f64]) -> Result<f64> {
    model.check(&shard.samples)?;
    check_dim(shard.dim(), x.len())?;
    Ok(sample_data_loss(&shard.samples, j, x) + model.regularizer(x))
}

/// Gradient of a single sample `grad f_{i,j}(x)`.
pub fn grad_sample(model: &LossModel, shard: &WorkerShard, j: usize, x: &[f64]) -> Result<ParamVector> {
    model.check(&shard.samples)?;
    check_dim(shard.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    add_sample_data_grad(&shard.samples, j, x, 1.0, &mut out);
    model.add_regularizer_grad(x, 1.0, &mut out);
    Ok(out)
}

/// Full local gradient `grad f_i(x)`; samples are summed in index order.
pub fn full_grad(model: &LossModel, shard: &WorkerShard, x: &[f64]) -> Result<ParamVector> {
    model.check(&shard.samples)?;
    check_dim(shard.dim(), x.len())?;
    Ok(full_grad_unchecked(model, &shard.samples, x))
}

fn full_grad_unchecked(model: &LossModel, samples: &Samples, x: &[f64]) -> ParamVector {
    let m = samples.len();
    let mut out = vec![0.0; x.len()];
    for j in 0..m {
        add_sample_data_grad(samples, j, x, 1.0, &mut out);
    }
    vecops::scale(1.0 / m as f64, &mut out);
    model.add_regularizer_grad(x, 1.0, &mut out);
    out
}

/// Loss and gradient in one pass over the samples.
pub fn loss_and_grad(model: &LossModel, shard: &WorkerShard, x: &[f64]) -> Result<(f64, ParamVector)> {
    model.check(&shard.samples)?;
    check_dim(shard.dim(), x.len())?;
    let samples = &shard.samples;
    let m = samples.len();
    let mut out = vec![0.0; x.len()];
    let mut total = 0.0;
    match samples {
        Samples::Labeled(data) => {
            for j in 0..m {
                let row = data.row(j);
                let z = row.dot(x);
                let y = data.label(j);
                total += softplus(z) - y * z;
                row.axpy_into(sigmoid(z) - y, &mut out);
            }
        }
        Samples::Quadratic(_) => {
            for j in 0..m {
                total += sample_data_loss(samples, j, x);
                add_sample_data_grad(samples, j, x, 1.0, &mut out);
            }
        }
    }
    vecops::scale(1.0 / m as f64, &mut out);
    model.add_regularizer_grad(x, 1.0, &mut out);
    Ok((total / m as f64 + model.regularizer(x), out))
}

/// Lipschitz constant of `grad f_{i,j}`.
///
/// Logistic (both regularizers): `||a||^2 / 4 + 2 lambda`, since the sigmoid
/// has slope at most 1/4 and both regularizers have curvature at most `2 lambda`.
/// Quadratic: `max_t h_t + 2 lambda`.
pub fn sample_smoothness(model: &LossModel, samples: &Samples, j: usize) -> f64 {
    match samples {
        Samples::Labeled(data) => data.row(j).norm_sq() / 4.0 + 2.0 * model.lambda,
        Samples::Quadratic(q) => q.curvature[j].iter().cloned().fold(f64::MIN, f64::max) + 2.0 * model.lambda,
    }
}

/// Per-sample and per-worker smoothness constants for logistic models.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessTable {
    /// `L_{i,j}` for worker `i`, sample `j`.
    pub per_sample: Vec<Vec<f64>>,
    /// `bar L_i = 1/m sum_j L_{i,j}`.
    pub per_worker_mean: Vec<f64>,
    /// Upper bound on the smoothness of `f`: `max_i bar L_i`.
    pub global: f64,
}

impl SmoothnessTable {
    /// Upper bound on the global Hessian variance `L_pm`, from
    /// `L_pm^2 <= 1/G sum_i L_i^2 <= 1/G sum_i bar L_i^2`.
    /// Zero when every shard holds identical data.
    pub fn hessian_variance_bound(&self, shards: &[WorkerShard]) -> f64 {
        if shards.windows(2).all(|w| w[0].samples.same_as(&w[1].samples)) {
            return 0.0;
        }
        let g = self.per_worker_mean.len() as f64;
        (self.per_worker_mean.iter().map(|l| l * l).sum::<f64>() / g).sqrt()
    }

    /// Upper bound on the local Hessian variance `calL_pm` of the given
    /// sampling scheme: uniform uses `1/G sum_i 1/m sum_j L_{i,j}^2`,
    /// importance uses `1/G sum_i bar L_i^2`.
    pub fn local_hessian_variance_bound(&self, scheme: SamplingScheme) -> f64 {
        let g = self.per_worker_mean.len() as f64;
        let sq = match scheme {
            SamplingScheme::Uniform => {
                self.per_sample
                    .iter()
                    .map(|ls| ls.iter().map(|l| l * l).sum::<f64>() / ls.len() as f64)
                    .sum::<f64>()
                    / g
            }
            SamplingScheme::Importance => self.per_worker_mean.iter().map(|l| l * l).sum::<f64>() / g,
        };
        sq.sqrt()
    }
}

pub fn smoothness_table(model: &LossModel, shards: &[WorkerShard]) -> Result<SmoothnessTable> {
    if model.kind == LossKind::Quadratic {
        return Err(Error::UnsupportedModel("quadratic constants are closed-form; use QuadraticConstants".into()));
    }
    if shards.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut per_sample = Vec::with_capacity(shards.len());
    let mut per_worker_mean = Vec::with_capacity(shards.len());
    for shard in shards {
        model.check(&shard.samples)?;
        let ls: Vec<f64> = (0..shard.m()).map(|j| sample_smoothness(model, &shard.samples, j)).collect();
        per_worker_mean.push(ls.iter().sum::<f64>() / ls.len() as f64);
        per_sample.push(ls);
    }
    let global = per_worker_mean.iter().cloned().fold(0.0, f64::max);
    Ok(SmoothnessTable { per_sample, per_worker_mean, global })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    Uniform,
    Importance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimator {
    pub scheme: SamplingScheme,
    pub batch_size: usize,
}

/// Sampling distribution over one worker's sample indices.
///
/// Importance sampling draws `j` with probability `L_j / sum_t L_t` and
/// reweights by `bar L / L_j`. When all `L_j` are equal it degenerates to the
/// uniform sampler exactly (same draws, unit weights).
#[derive(Debug, Clone)]
pub struct WorkerSampler {
    m: usize,
    weighted: Option<WeightedIndex>,
}

#[derive(Debug, Clone)]
struct WeightedIndex {
    cumulative: Vec<f64>,
    total: f64,
    weights: Vec<f64>,
}

impl WorkerSampler {
    pub fn uniform(m: usize) -> Self {
        Self { m, weighted: None }
    }

    pub fn new(scheme: SamplingScheme, model: &LossModel, shard: &WorkerShard) -> Result<Self> {
        model.check(&shard.samples)?;
        let m = shard.m();
        match scheme {
            SamplingScheme::Uniform => Ok(Self::uniform(m)),
            SamplingScheme::Importance => {
                let ls: Vec<f64> = (0..m).map(|j| sample_smoothness(model, &shard.samples, j)).collect();
                Self::importance(&ls)
            }
        }
    }

    /// Importance sampler from explicit smoothness constants.
    pub fn importance(ls: &[f64]) -> Result<Self> {
        if ls.is_empty() {
            return Err(Error::EmptyInput);
        }
        if ls.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("smoothness constants must be positive".into()));
        }
        let m = ls.len();
        if ls.iter().all(|&l| l == ls[0]) {
            return Ok(Self::uniform(m));
        }
        let mut cumulative = Vec::with_capacity(m);
        let mut acc = 0.0;
        for &l in ls {
            acc += l;
            cumulative.push(acc);
        }
        let mean = acc / m as f64;
        let weights = ls.iter().map(|&l| mean / l).collect();
        Ok(Self { m, weighted: Some(WeightedIndex { cumulative, total: acc, weights }) })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Probability of drawing each index.
    pub fn probabilities(&self) -> Vec<f64> {
        match &self.weighted {
            None => vec![1.0 / self.m as f64; self.m],
            Some(w) => {
                let mut prev = 0.0;
                w.cumulative
                    .iter()
                    .map(|&c| {
                        let p = (c - prev) / w.total;
                        prev = c;
                        p
                    })
                    .collect()
            }
        }
    }

    /// Estimator weight applied to sample `j`.
    pub fn weight(&self, j: usize) -> f64 {
        self.weighted.as_ref().map_or(1.0, |w| w.weights[j])
    }

    /// One index draw; consumes exactly one uniform variate.
    pub fn draw(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        match &self.weighted {
            None => ((u * self.m as f64) as usize).min(self.m - 1),
            Some(w) => {
                let target = u * w.total;
                w.cumulative.partition_point(|&c| c <= target).min(self.m - 1)
            }
        }
    }

    pub fn draw_batch(&self, b: usize, rng: &mut RngStream) -> Vec<usize> {
        (0..b).map(|_| self.draw(rng)).collect()
    }
}

/// `1/b sum_{j in draws} w_j (grad f_{i,j}(x) - grad f_{i,j}(y))` for fixed draws.
pub fn delta_from_draws(
    model: &LossModel,
    shard: &WorkerShard,
    sampler: &WorkerSampler,
    draws: &[usize],
    x: &[f64],
    y: &[f64],
) -> Result<ParamVector> {
    model.check(&shard.samples)?;
    check_dim(shard.dim(), x.len())?;
    check_dim(shard.dim(), y.len())?;
    if draws.is_empty() {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let inv_b = 1.0 / draws.len() as f64;
    let mut out = vec![0.0; x.len()];
    let mut weight_sum = 0.0;
    for &j in draws {
        let w = sampler.weight(j);
        weight_sum += w;
        add_sample_data_diff(&shard.samples, j, x, y, w * inv_b, &mut out);
    }
    let reg_scale = weight_sum * inv_b;
    model.add_regularizer_grad(x, reg_scale, &mut out);
    model.add_regularizer_grad(y, -reg_scale, &mut out);
    Ok(out)
}

/// Unbiased mini-batched estimator of `grad f_i(x) - grad f_i(y)` from `b`
/// i.i.d. draws (with replacement) of the sampler's distribution.
pub fn delta_hat(
    estimator: &DeltaEstimator,
    model: &LossModel,
    shard: &WorkerShard,
    sampler: &WorkerSampler,
    x: &[f64],
    y: &[f64],
    rng: &mut RngStream,
) -> Result<ParamVector> {
    if estimator.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let draws = sampler.draw_batch(estimator.batch_size, rng);
    delta_from_draws(model, shard, sampler, &draws, x, y)
}

/// Unbiased mini-batch gradient `1/b sum_j w_j grad f_{i,j}(x)`.
pub fn minibatch_grad(
    model: &LossModel,
    shard: &WorkerShard,
    sampler: &WorkerSampler,
    batch_size: usize,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<ParamVector> {
    model.check(&shard.samples)?;
    check_dim(shard.dim(), x.len())?;
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let inv_b = 1.0 / batch_size as f64;
    let mut out = vec![0.0; x.len()];
    let mut weight_sum = 0.0;
    for _ in 0..batch_size {
        let j = sampler.draw(rng);
        let w = sampler.weight(j);
        weight_sum += w;
        add_sample_data_grad(&shard.samples, j, x, w * inv_b, &mut out);
    }
    model.add_regularizer_grad(x, weight_sum * inv_b, &mut out);
    Ok(out)
}

/// The objective of the good workers, `f = 1/G sum_i f_i`.
///
/// Shards that share the same allocation are evaluated once and weighted by
/// their multiplicity, so the full-copy setting costs one pass.
#[derive(Debug, Clone)]
pub struct GlobalObjective {
    model: LossModel,
    groups: Vec<(WorkerShard, usize)>,
    workers: usize,
    dim: usize,
}

impl GlobalObjective {
    pub fn new(model: LossModel, shards: &[WorkerShard]) -> Result<Self> {
        let first = shards.first().ok_or(Error::EmptyInput)?;
        let dim = first.dim();
        let mut groups: Vec<(WorkerShard, usize)> = Vec::new();
        for s in shards {
            model.check(&s.samples)?;
            check_dim(dim, s.dim())?;
            match groups.iter_mut().find(|(g, _)| g.samples.same_as(&s.samples)) {
                Some((_, count)) => *count += 1,
                None => groups.push((s.clone(), 1)),
            }
        }
        Ok(Self { model, groups, workers: shards.len(), dim })
    }

    pub fn model(&self) -> &LossModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// True when every worker holds the same data.
    pub fn is_homogeneous(&self) -> bool {
        self.groups.len() == 1
    }

    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (shard, count) in &self.groups {
            total += *count as f64 * loss(&self.model, shard, x)?;
        }
        Ok(total / self.workers as f64)
    }

    pub fn grad(&self, x: &[f64]) -> Result<ParamVector> {
        Ok(self.loss_and_grad(x)?.1)
    }

    pub fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, ParamVector)> {
        if self.groups.len() == 1 {
            return loss_and_grad(&self.model, &self.groups[0].0, x);
        }
        let mut total = 0.0;
        let mut grad = vec![0.0; self.dim];
        for (shard, count) in &self.groups {
            let (l, g) = loss_and_grad(&self.model, shard, x)?;
            total += *count as f64 * l;
            vecops::axpy(*count as f64, &g, &mut grad);
        }
        let inv = 1.0 / self.workers as f64;
        vecops::scale(inv, &mut grad);
        Ok((total * inv, grad))
    }

    /// Per-worker gradients in worker order.
    pub fn worker_grads(&self, shards: &[WorkerShard], x: &[f64]) -> Result<Vec<ParamVector>> {
        shards.iter().map(|s| full_grad(&self.model, s, x)).collect()
    }
}

/// Closed-form constants of the diagonal quadratic problem over the good
/// workers' shards (uniform sampling for the local Hessian variance).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstants {
    /// Smoothness of `f`.
    pub l: f64,
    /// PL / strong-convexity constant of `f`.
    pub mu: f64,
    /// Global Hessian variance `L_pm`.
    pub l_pm: f64,
    /// Local Hessian variance `calL_pm` under uniform sampling.
    pub call_pm_uniform: f64,
    /// Local Hessian variance `calL_pm` under importance sampling.
    pub call_pm_importance: f64,
    pub x_star: ParamVector,
    pub f_star: f64,
}

impl QuadraticConstants {
    pub fn new(model: &LossModel, shards: &[WorkerShard]) -> Result<Self> {
        if model.kind != LossKind::Quadratic {
            return Err(Error::UnsupportedModel(format!("{:?} is not quadratic", model.kind)));
        }
        let first = shards.first().ok_or(Error::EmptyInput)?;
        let dim = first.dim();
        let reg = 2.0 * model.lambda;
        let g = shards.len() as f64;
        let mut mean_h = vec![0.0; dim];
        let mut mean_hc = vec![0.0; dim];
        let mut mean_sq_h = vec![0.0; dim];
        let mut local_var_uniform = vec![0.0; dim];
        let mut local_var_importance = vec![0.0; dim];
        for shard in shards {
            let Samples::Quadratic(q) = &shard.samples else {
                return Err(Error::UnsupportedModel("quadratic model needs quadratic shards".into()));
            };
            check_dim(dim, q.dim)?;
            let m = q.len() as f64;
            let ls: Vec<f64> = (0..q.len()).map(|j| sample_smoothness(model, &shard.samples, j)).collect();
            let l_bar = ls.iter().sum::<f64>() / m;
            for t in 0..dim {
                let h_bar = q.curvature.iter().map(|h| h[t] + reg).sum::<f64>() / m;
                let hc_bar = q.curvature.iter().zip(&q.center).map(|(h, c)| h[t] * c[t]).sum::<f64>() / m;
                mean_h[t] += h_bar / g;
                mean_hc[t] += hc_bar / g;
                mean_sq_h[t] += h_bar * h_bar / g;
                local_var_uniform[t] += q.curvature.iter().map(|h| (h[t] + reg - h_bar).powi(2)).sum::<f64>() / m / g;
                let second: f64 = q
                    .curvature
                    .iter()
                    .zip(&ls)
                    .map(|(h, &l)| (l_bar / (m * l)) * (h[t] + reg).powi(2))
                    .sum();
                local_var_importance[t] += (second - h_bar * h_bar) / g;
            }
        }
        let l = mean_h.iter().cloned().fold(f64::MIN, f64::max);
        let mu = mean_h.iter().cloned().fold(f64::MAX, f64::min);
        let l_pm_sq = (0..dim).map(|t| mean_sq_h[t] - mean_h[t] * mean_h[t]).fold(0.0, f64::max);
        let call_u = local_var_uniform.iter().cloned().fold(0.0, f64::max);
        let call_i = local_var_importance.iter().cloned().fold(0.0, f64::max);
        let x_star: ParamVector = (0..dim).map(|t| mean_hc[t] / mean_h[t]).collect();
        let objective = GlobalObjective::new(*model, shards)?;
        let f_star = objective.loss(&x_star)?;
        Ok(Self {
            l,
            mu,
            l_pm: l_pm_sq.sqrt(),
            call_pm_uniform: call_u.sqrt(),
            call_pm_importance: call_i.max(0.0).sqrt(),
            x_star,
            f_star,
        })
    }
}

/// Random diagonal-quadratic shards: curvature in `[h_lo, h_hi]`, centers
/// standard normal shifted per worker by `worker_shift * u_i`.
pub fn synthetic_quadratic_shards(
    workers: usize,
    m: usize,
    dim: usize,
    h_lo: f64,
    h_hi: f64,
    worker_shift: f64,
    seed: u64,
) -> Result<Vec<WorkerShard>> {
    use rand_distr::{Distribution, StandardNormal};
    use std::sync::Arc;
    let mut rng = RngStream::new(seed, crate::rng::StreamRole::Data, 1);
    let mut shards = Vec::with_capacity(workers);
    for i in 0..workers {
        let shift: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                worker_shift * z
            })
            .collect();
        let mut curvature = Vec::with_capacity(m);
        let mut center = Vec::with_capacity(m);
        for _ in 0..m {
            curvature.push((0..dim).map(|_| h_lo + (h_hi - h_lo) * rng.uniform()).collect());
            center.push(
                (0..dim)
                    .map(|t| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        shift[t] + z
                    })
                    .collect(),
            );
        }
        shards.push(WorkerShard::quadratic(i, Arc::new(QuadraticSamples::new(curvature, center)?)));
    }
    Ok(shards)
}
