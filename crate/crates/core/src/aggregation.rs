//! Aggregation rules and the bucketing wrapper.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::vecops::{self, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorBase {
    Mean,
    Cm,
    Krum,
    Rfa,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregator {
    pub base: AggregatorBase,
    /// Bucket size; 1 disables bucketing.
    pub bucket_size: usize,
    pub rfa_iters: usize,
    pub rfa_smoothing: f64,
    /// Byzantine count assumed by Krum.
    pub krum_byz_count: usize,
}

/// Asymptotic robustness class of `base o bucketing`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Robustness {
    /// Largest tolerated Byzantine fraction (exclusive); 0 for the mean.
    pub delta_max: f64,
    /// Growth of the robustness constant: `"O(1)"`, `"O(d)"` or `"none"`.
    pub c_order: &'static str,
}

impl Aggregator {
    pub fn new(base: AggregatorBase) -> Self {
        Self { base, bucket_size: 2, rfa_iters: 8, rfa_smoothing: 1e-6, krum_byz_count: 0 }
    }

    pub fn with_bucket_size(mut self, s: usize) -> Self {
        self.bucket_size = s;
        self
    }

    pub fn with_krum_byz(mut self, byz: usize) -> Self {
        self.krum_byz_count = byz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bucket_size == 0 {
            return Err(Error::InvalidArgument("bucket size must be >= 1".into()));
        }
        if self.rfa_iters == 0 {
            return Err(Error::InvalidArgument("rfa iterations must be >= 1".into()));
        }
        if !(self.rfa_smoothing > 0.0) {
            return Err(Error::InvalidArgument("rfa smoothing must be > 0".into()));
        }
        Ok(())
    }

    pub fn robustness(&self) -> Robustness {
        match self.base {
            AggregatorBase::Mean => Robustness { delta_max: 0.0, c_order: "none" },
            AggregatorBase::Cm => Robustness { delta_max: 0.5, c_order: "O(d)" },
            AggregatorBase::Krum => Robustness { delta_max: 0.25, c_order: "O(1)" },
            AggregatorBase::Rfa => Robustness { delta_max: 0.5, c_order: "O(1)" },
        }
    }

    /// Applies the base rule without bucketing.
    pub fn apply_base(&self, vectors: &[ParamVector]) -> Result<ParamVector> {
        match self.base {
            AggregatorBase::Mean => mean(vectors),
            AggregatorBase::Cm => coordinate_median(vectors),
            AggregatorBase::Krum => krum(vectors, self.krum_byz_count),
            AggregatorBase::Rfa => rfa(vectors, self.rfa_iters, self.rfa_smoothing),
        }
    }

    /// Bucketed aggregation. With `bucket_size == 1` no randomness is drawn.
    pub fn aggregate(&self, vectors: &[ParamVector], rng: &mut RngStream) -> Result<ParamVector> {
        self.validate()?;
        if self.bucket_size == 1 {
            return self.apply_base(vectors);
        }
        bucketing_aggregate(self, vectors, rng)
    }
}

fn check_inputs(vectors: &[ParamVector]) -> Result<usize> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    let d = first.len();
    for v in vectors {
        check_dim(d, v.len())?;
    }
    Ok(d)
}

/// Arithmetic mean, summed in input order then divided by `n`.
pub fn mean(vectors: &[ParamVector]) -> Result<ParamVector> {
    let d = check_inputs(vectors)?;
    let mut out = vec![0.0; d];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    for o in out.iter_mut() {
        *o /= n;
    }
    Ok(out)
}

/// Coordinate-wise median; even counts use the midpoint of the middle pair.
pub fn coordinate_median(vectors: &[ParamVector]) -> Result<ParamVector> {
    let d = check_inputs(vectors)?;
    let n = vectors.len();
    let mut column = vec![0.0; n];
    let mut out = Vec::with_capacity(d);
    for t in 0..d {
        for (c, v) in column.iter_mut().zip(vectors) {
            *c = v[t];
        }
        column.sort_unstable_by(f64::total_cmp);
        out.push(if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        });
    }
    Ok(out)
}

/// Krum scores: sum of squared distances to the `n - byz - 2` nearest others.
pub fn krum_scores(vectors: &[ParamVector], assumed_byz: usize) -> Result<Vec<f64>> {
    check_inputs(vectors)?;
    let n = vectors.len();
    if n < assumed_byz + 3 {
        return Err(Error::KrumPrecondition { n, byz: assumed_byz });
    }
    let neighbours = n - assumed_byz - 2;
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dd = vecops::dist_sq(&vectors[i], &vectors[j]);
            dist[i][j] = dd;
            dist[j][i] = dd;
        }
    }
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[i][j]).collect();
            row.sort_unstable_by(f64::total_cmp);
            row[..neighbours].iter().sum()
        })
        .collect())
}

/// Index selected by Krum, ties broken by lowest index.
pub fn krum_select(vectors: &[ParamVector], assumed_byz: usize) -> Result<usize> {
    let scores = krum_scores(vectors, assumed_byz)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn krum(vectors: &[ParamVector], assumed_byz: usize) -> Result<ParamVector> {
    let i = krum_select(vectors, assumed_byz)?;
    Ok(vectors[i].clone())
}

/// Smoothed Weiszfeld iterates, starting from the mean; returns every iterate
/// `z^0, ..., z^T`.
pub fn rfa_trajectory(vectors: &[ParamVector], iters: usize, smoothing: f64) -> Result<Vec<ParamVector>> {
    let d = check_inputs(vectors)?;
    if iters == 0 || !(smoothing > 0.0) {
        return Err(Error::InvalidArgument("rfa needs T >= 1 and nu > 0".into()));
    }
    let mut z = mean(vectors)?;
    let mut traj = Vec::with_capacity(iters + 1);
    traj.push(z.clone());
    for _ in 0..iters {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for v in vectors {
            let w = 1.0 / vecops::dist_sq(&z, v).sqrt().max(smoothing);
            vecops::axpy(w, v, &mut num);
            den += w;
        }
        vecops::scale(1.0 / den, &mut num);
        z = num;
        traj.push(z.clone());
    }
    Ok(traj)
}

pub fn rfa(vectors: &[ParamVector], iters: usize, smoothing: f64) -> Result<ParamVector> {
    Ok(rfa_trajectory(vectors, iters, smoothing)?.pop().expect("trajectory is nonempty"))
}

/// Bucket membership for a permutation: consecutive chunks of size `s`.
pub fn buckets(permutation: &[usize], s: usize) -> Vec<Vec<usize>> {
    permutation.chunks(s.max(1)).map(|c| c.to_vec()).collect()
}

/// Draws one permutation of the inputs, averages each bucket of `s`
/// consecutive entries (the last may be short) and applies the base rule to
/// the bucket means.
pub fn bucketing_aggregate(agg: &Aggregator, vectors: &[ParamVector], rng: &mut RngStream) -> Result<ParamVector> {
    check_inputs(vectors)?;
    let perm = rng.permutation(vectors.len());
    let means = bucket_means(vectors, &perm, agg.bucket_size)?;
    agg.apply_base(&means)
}

pub fn bucket_means(vectors: &[ParamVector], permutation: &[usize], s: usize) -> Result<Vec<ParamVector>> {
    buckets(permutation, s)
        .iter()
        .map(|b| {
            let members: Vec<ParamVector> = b.iter().map(|&i| vectors[i].clone()).collect();
            mean(&members)
        })
        .collect()
}

/// Parameters of the empirical robustness audit: `good` points drawn i.i.d.
/// from `N(0, sigma^2 I_dim)` plus `byz` copies of the far point
/// `(far, ..., far)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifySpec {
    pub good: usize,
    pub byz: usize,
    pub dim: usize,
    pub sigma: f64,
    pub far: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self { good: 18, byz: 2, dim: 10, sigma: 1.0, far: 100.0, trials: 200, seed: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifyReport {
    pub delta: f64,
    /// Mean `||x_hat - x_bar||^2` at `sigma` and at `sigma / 10`.
    pub mse: f64,
    pub mse_small: f64,
    /// Fitted `c` in `E||x_hat - x_bar||^2 <= c delta sigma_pair^2`, where
    /// `sigma_pair^2 = 2 sigma^2 dim` is the expected pairwise variance.
    pub c_hat: f64,
    pub c_hat_small: f64,
    /// True when shrinking `sigma` tenfold does not inflate `c_hat` by more
    /// than a factor of two.
    pub scale_robust: bool,
}

fn certify_mse(agg: &Aggregator, spec: &CertifySpec, sigma: f64) -> Result<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut draw_rng = RngStream::new(spec.seed, crate::rng::StreamRole::Audit, 0);
    let mut bucket_rng = RngStream::new(spec.seed, crate::rng::StreamRole::Audit, 1);
    let far = vec![spec.far; spec.dim];
    let mut total = 0.0;
    for _ in 0..spec.trials {
        let mut all: Vec<ParamVector> = (0..spec.good)
            .map(|_| (0..spec.dim).map(|_| normal.sample(&mut draw_rng)).collect())
            .collect();
        let good_mean = mean(&all)?;
        all.extend(std::iter::repeat(far.clone()).take(spec.byz));
        let out = agg.aggregate(&all, &mut bucket_rng)?;
        total += vecops::dist_sq(&out, &good_mean);
    }
    Ok(total / spec.trials as f64)
}

/// Empirical check of the robust-aggregation inequality, run at `sigma` and
/// `sigma / 10` with identical random streams.
pub fn certify(agg: &Aggregator, spec: &CertifySpec) -> Result<CertifyReport> {
    agg.validate()?;
    if spec.good == 0 || spec.dim == 0 || spec.trials == 0 {
        return Err(Error::InvalidArgument("good, dim and trials must be >= 1".into()));
    }
    if !(spec.sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be > 0".into()));
    }
    let delta = spec.byz as f64 / (spec.good + spec.byz) as f64;
    let mse = certify_mse(agg, spec, spec.sigma)?;
    let mse_small = certify_mse(agg, spec, spec.sigma / 10.0)?;
    let pair = |s: f64| 2.0 * s * s * spec.dim as f64;
    let c_hat = mse / (delta.max(f64::MIN_POSITIVE) * pair(spec.sigma));
    let c_hat_small = mse_small / (delta.max(f64::MIN_POSITIVE) * pair(spec.sigma / 10.0));
    Ok(CertifyReport { delta, mse, mse_small, c_hat, c_hat_small, scale_robust: c_hat_small <= 2.0 * c_hat })
}
