//! Closed-form constants and convergence bounds, plus runtime audits of the
//! heterogeneity bound and the per-round variance/distortion bounds.

use serde::{Deserialize, Serialize};

use crate::data::WorkerShard;
use crate::error::{Error, Result};
use crate::optimizers::Trainer;
use crate::problems::{self, GlobalObjective, LossModel};
use crate::vecops::{self, ParamVector};

/// Scalars entering the bounds. `l_pm` and `call_pm` are the global and local
/// Hessian-variance constants, `g` the number of good workers, `big_b` and
/// `zeta2` the heterogeneity parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryInputs {
    pub l: f64,
    pub l_pm: f64,
    pub call_pm: f64,
    #[serde(default)]
    pub mu: f64,
    pub p: f64,
    pub b: f64,
    pub omega: f64,
    pub g: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub big_b: f64,
    #[serde(default)]
    pub zeta2: f64,
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("l", self.l),
            ("l_pm", self.l_pm),
            ("call_pm", self.call_pm),
            ("mu", self.mu),
            ("b", self.b),
            ("omega", self.omega),
            ("g", self.g),
            ("c", self.c),
            ("delta", self.delta),
            ("big_b", self.big_b),
            ("zeta2", self.zeta2),
        ];
        let mut errs: Vec<String> = fields
            .iter()
            .filter(|(_, v)| !(*v >= 0.0) || v.is_nan())
            .map(|(k, v)| format!("{k} must be >= 0, got {v}"))
            .collect();
        if !(self.p > 0.0 && self.p <= 1.0) {
            errs.push(format!("p must lie in (0, 1], got {}", self.p));
        }
        if self.delta >= 0.5 {
            errs.push(format!("delta must be < 1/2, got {}", self.delta));
        }
        if self.b < 1.0 {
            errs.push(format!("b must be >= 1, got {}", self.b));
        }
        if self.g < 1.0 {
            errs.push(format!("g must be >= 1, got {}", self.g));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn cd(&self) -> f64 {
        self.c * self.delta
    }
}

/// The constant `A` of the step-size condition. The `48 B L^2 c delta / p`
/// term is present only when `B > 0`.
pub fn compute_a(t: &TheoryInputs) -> Result<f64> {
    if !(t.p > 0.0) {
        return Err(Error::InvalidArgument("p must be > 0".into()));
    }
    let p = t.p;
    let cd = t.cd();
    let hetero = if t.big_b > 0.0 { 48.0 * t.big_b * t.l * t.l * cd / p } else { 0.0 };
    let w = t.omega;
    let first = 6.0 * (1.0 - p) / p
        * (4.0 * cd / p + 1.0 / (2.0 * t.g))
        * (w * t.l * t.l + (1.0 + w) * t.call_pm * t.call_pm / t.b);
    let second = 6.0 * (1.0 - p) / p * (4.0 * cd * (1.0 + w) / p + w / (2.0 * t.g)) * t.l_pm * t.l_pm;
    Ok(hetero + first + second)
}

/// `A'` of the pairwise-variance bound.
pub fn compute_a_prime(t: &TheoryInputs) -> f64 {
    let w = t.omega;
    8.0 * t.big_b * t.p * t.l * t.l
        + 4.0 * (1.0 - t.p) * (w * t.l * t.l + (1.0 + w) * t.l_pm * t.l_pm + (1.0 + w) * t.call_pm * t.call_pm / t.b)
}

fn check_delta(t: &TheoryInputs, factor: f64) -> Result<()> {
    if t.big_b > 0.0 && t.cd() > 0.0 && t.delta >= t.p / (factor * t.c * t.big_b) {
        return Err(Error::Infeasible(format!(
            "delta = {} must be < p / ({factor} c B) = {}",
            t.delta,
            t.p / (factor * t.c * t.big_b)
        )));
    }
    Ok(())
}

/// `1 / (L + sqrt(A))`.
pub fn gamma_max_nc(t: &TheoryInputs) -> Result<f64> {
    check_delta(t, 48.0)?;
    Ok(1.0 / (t.l + compute_a(t)?.sqrt()))
}

/// `min(1 / (L + sqrt(2A)), p / (4 mu (1 - 96 B c delta / p)))`; the second
/// term is dropped when `mu = 0`.
pub fn gamma_max_pl(t: &TheoryInputs) -> Result<f64> {
    check_delta(t, 96.0)?;
    let a = compute_a(t)?;
    let first = 1.0 / (t.l + (2.0 * a).sqrt());
    if t.mu == 0.0 {
        return Ok(first);
    }
    let shrink = 1.0 - 96.0 * t.big_b * t.cd() / t.p;
    Ok(first.min(t.p / (4.0 * t.mu * shrink)))
}

pub fn gamma_bounds(t: &TheoryInputs) -> Result<(f64, f64)> {
    Ok((gamma_max_nc(t)?, gamma_max_pl(t)?))
}

/// Asymptotic error floor of the non-convex bound, `24 c delta zeta^2 / (p - 48 B c delta)`.
pub fn neighborhood_nc(t: &TheoryInputs) -> f64 {
    24.0 * t.cd() * t.zeta2 / (t.p - 48.0 * t.big_b * t.cd())
}

/// Asymptotic error floor of the PL bound, `24 c delta zeta^2 / (mu (p - 96 B c delta))`.
pub fn neighborhood_pl(t: &TheoryInputs) -> f64 {
    if t.cd() * t.zeta2 == 0.0 {
        return 0.0;
    }
    24.0 * t.cd() * t.zeta2 / (t.mu * (t.p - 96.0 * t.big_b * t.cd()))
}

/// `Phi_0` of the non-convex bound.
pub fn phi0_nc(gap0: f64, gdist0: f64, gamma: f64, p: f64) -> f64 {
    gap0 + gamma / p * gdist0
}

/// `Phi_0` of the PL bound.
pub fn phi0_pl(gap0: f64, gdist0: f64, gamma: f64, p: f64) -> f64 {
    gap0 + 2.0 * gamma / p * gdist0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    /// False when `gamma` exceeds the admissible ceiling or the inputs are
    /// infeasible; `value` is then not a guarantee.
    pub admissible: bool,
}

/// Bound on `E||grad f(x_hat)||^2` after `k` rounds, `x_hat` uniform over `x^0..x^k`.
pub fn nonconvex_rate_bound(t: &TheoryInputs, phi0: f64, k: usize, gamma: f64) -> Result<Bound> {
    t.validate()?;
    let admissible = gamma > 0.0 && gamma_max_nc(t).map_or(false, |g| gamma <= g);
    let shrink = 1.0 - 48.0 * t.big_b * t.cd() / t.p;
    let value = 2.0 * phi0 / (gamma * shrink * (k as f64 + 1.0)) + neighborhood_nc(t);
    Ok(Bound { value, admissible })
}

/// Bound on `E[f(x^k) - f*]` under the PL condition.
pub fn pl_rate_bound(t: &TheoryInputs, phi0: f64, k: usize, gamma: f64) -> Result<Bound> {
    t.validate()?;
    let admissible = gamma > 0.0 && t.mu > 0.0 && gamma_max_pl(t).map_or(false, |g| gamma <= g);
    let rate = 1.0 - gamma * t.mu * (1.0 - 96.0 * t.big_b * t.cd() / t.p);
    let value = rate.powi(k.min(i32::MAX as usize) as i32) * phi0 + neighborhood_pl(t);
    Ok(Bound { value, admissible })
}

/// Summary of every closed-form quantity for one input set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryOutputs {
    pub a: f64,
    pub a_prime: f64,
    pub gamma_max_nc: Option<f64>,
    pub gamma_max_pl: Option<f64>,
    pub neighborhood_nc: f64,
    pub neighborhood_pl: f64,
}

pub fn evaluate(t: &TheoryInputs) -> Result<TheoryOutputs> {
    t.validate()?;
    Ok(TheoryOutputs {
        a: compute_a(t)?,
        a_prime: compute_a_prime(t),
        gamma_max_nc: gamma_max_nc(t).ok(),
        gamma_max_pl: gamma_max_pl(t).ok(),
        neighborhood_nc: neighborhood_nc(t),
        neighborhood_pl: if t.mu > 0.0 { neighborhood_pl(t) } else { f64::INFINITY },
    })
}

/// Rounds predicted by inverting the bounds at the largest admissible step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundPrediction {
    pub gamma_nc: f64,
    /// Rounds until `E||grad f(x_hat)||^2 <= epsilon^2`; `None` when the
    /// target lies inside the error floor.
    pub rounds_nc: Option<u64>,
    pub gamma_pl: Option<f64>,
    /// Rounds until `E[f(x^k) - f*] <= epsilon`.
    pub rounds_pl: Option<u64>,
    /// Expected gradient-oracle calls per worker for `rounds_nc` rounds,
    /// `m p + 2 b (1 - p)` per round.
    pub oracle_nc: Option<f64>,
}

pub fn predict_rounds(t: &TheoryInputs, epsilon: f64, gap0: f64, gdist0: f64, m: f64) -> Result<RoundPrediction> {
    t.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be > 0".into()));
    }
    let gamma_nc = gamma_max_nc(t)?;
    let shrink = 1.0 - 48.0 * t.big_b * t.cd() / t.p;
    let room = epsilon * epsilon - neighborhood_nc(t);
    let rounds_nc = (room > 0.0).then(|| {
        let phi = phi0_nc(gap0, gdist0, gamma_nc, t.p);
        let k1 = 2.0 * phi / (gamma_nc * shrink * room);
        (k1 - 1.0).max(0.0).ceil() as u64
    });
    let (gamma_pl, rounds_pl) = if t.mu > 0.0 {
        let gamma = gamma_max_pl(t)?;
        let rate = 1.0 - gamma * t.mu * (1.0 - 96.0 * t.big_b * t.cd() / t.p);
        let phi = phi0_pl(gap0, gdist0, gamma, t.p);
        let room = epsilon - neighborhood_pl(t);
        let k = if room <= 0.0 {
            None
        } else if phi <= room {
            Some(0)
        } else {
            Some(((room / phi).ln() / rate.ln()).ceil() as u64)
        };
        (Some(gamma), k)
    } else {
        (None, None)
    };
    let per_round = m * t.p + 2.0 * t.b * (1.0 - t.p);
    Ok(RoundPrediction { gamma_nc, rounds_nc, gamma_pl, rounds_pl, oracle_nc: rounds_nc.map(|k| k as f64 * per_round) })
}

/// Measured heterogeneity over a set of probe points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Heterogeneity {
    /// `max_x 1/G sum_i ||grad f_i(x) - grad f(x)||^2`.
    pub zeta2_max: f64,
    /// Nonnegative least-squares fit of `lhs ~ B ||grad f||^2 + zeta^2`.
    pub fit_b: f64,
    pub fit_zeta2: f64,
}

/// Left-hand side `1/G sum_i ||grad f_i(x) - grad f(x)||^2` at one point.
pub fn heterogeneity_at(model: &LossModel, shards: &[WorkerShard], x: &[f64]) -> Result<(f64, f64)> {
    let objective = GlobalObjective::new(*model, shards)?;
    let grad = objective.grad(x)?;
    let mut total = 0.0;
    for s in shards {
        total += vecops::dist_sq(&problems::full_grad(model, s, x)?, &grad);
    }
    Ok((total / shards.len() as f64, vecops::norm_sq(&grad)))
}

pub fn measure_heterogeneity(model: &LossModel, shards: &[WorkerShard], points: &[ParamVector]) -> Result<Heterogeneity> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut lhs = Vec::with_capacity(points.len());
    let mut q = Vec::with_capacity(points.len());
    for x in points {
        let (l, g) = heterogeneity_at(model, shards, x)?;
        lhs.push(l);
        q.push(g);
    }
    let zeta2_max = lhs.iter().cloned().fold(0.0, f64::max);
    let (fit_b, fit_zeta2) = nonneg_line_fit(&q, &lhs);
    Ok(Heterogeneity { zeta2_max, fit_b, fit_zeta2 })
}

/// Least squares `y ~ slope * x + intercept` with both coefficients >= 0.
fn nonneg_line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    if slope >= 0.0 && intercept >= 0.0 {
        return (slope, intercept);
    }
    if slope < 0.0 {
        return (0.0, my.max(0.0));
    }
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    ((if xx > 0.0 { xy / xx } else { 0.0 }).max(0.0), 0.0)
}

/// Per-round outcome of the variance and distortion audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundBoundCheck {
    pub round: usize,
    pub variance_lhs: f64,
    pub variance_se: f64,
    pub variance_rhs: f64,
    pub distortion_lhs: f64,
    pub distortion_se: f64,
    pub distortion_rhs: f64,
}

impl RoundBoundCheck {
    /// A violation is a Monte-Carlo mean exceeding the bound by more than
    /// `z` standard errors (plus a relative rounding slack).
    pub fn variance_violated(&self, z: f64) -> bool {
        self.variance_lhs - z * self.variance_se > self.variance_rhs * (1.0 + 1e-12) + 1e-300
    }

    pub fn distortion_violated(&self, z: f64) -> bool {
        self.distortion_lhs - z * self.distortion_se > self.distortion_rhs * (1.0 + 1e-12) + 1e-300
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Audits the pairwise-variance and distortion bounds of a MARINA run.
///
/// For each of `rounds` rounds the frozen state `(x^k, g^k)` is replayed
/// `replays` times with fresh streams (coin, sampling, compression,
/// bucketing), the conditional expectations of both left-hand sides are
/// estimated, and then the real run advances one round.
pub fn measure_round_bounds(
    trainer: &mut Trainer,
    objective: &GlobalObjective,
    inputs: &TheoryInputs,
    rounds: usize,
    replays: usize,
    replay_seed: u64,
) -> Result<Vec<RoundBoundCheck>> {
    if replays == 0 {
        return Err(Error::InvalidArgument("replays must be >= 1".into()));
    }
    let a = compute_a(inputs)?;
    let a_prime = compute_a_prime(inputs);
    let t = inputs;
    let mut out = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let x_k = trainer.x().to_vec();
        let g_k = trainer.g().to_vec();
        let grad_k = objective.grad(&x_k)?;
        let gamma = trainer.config().gamma;
        let x_next: ParamVector = x_k.iter().zip(&g_k).map(|(x, g)| x - gamma * g).collect();
        let dx2 = vecops::dist_sq(&x_next, &x_k);
        let grad_next = objective.grad(&x_next)?;
        let grad_sq = vecops::norm_sq(&grad_k);
        let variance_rhs = a_prime * dx2 + 8.0 * t.big_b * t.p * grad_sq + 4.0 * t.p * t.zeta2;
        let distortion_rhs = (1.0 - t.p / 2.0) * vecops::dist_sq(&g_k, &grad_k)
            + 24.0 * t.big_b * t.cd() * grad_sq
            + 12.0 * t.cd() * t.zeta2
            + a * t.p / 4.0 * dx2;
        let mut var_samples = Vec::with_capacity(replays);
        let mut dist_samples = Vec::with_capacity(replays);
        for r in 0..replays {
            let mut replay = trainer.clone();
            replay.reseed_for_replay(replay_seed, (round * replays + r) as u32);
            replay.step()?;
            var_samples.push(vecops::pairwise_variance(replay.last_good_messages()));
            dist_samples.push(vecops::dist_sq(replay.g(), &grad_next));
        }
        let (variance_lhs, variance_se) = mean_se(&var_samples);
        let (distortion_lhs, distortion_se) = mean_se(&dist_samples);
        out.push(RoundBoundCheck {
            round: trainer.round(),
            variance_lhs,
            variance_se,
            variance_rhs,
            distortion_lhs,
            distortion_se,
            distortion_rhs,
        });
        trainer.step()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> TheoryInputs {
        TheoryInputs {
            l: 1.0,
            l_pm: 1.0,
            call_pm: 1.0,
            mu: 0.1,
            p: 0.5,
            b: 1.0,
            omega: 1.0,
            g: 4.0,
            c: 1.0,
            delta: 0.1,
            big_b: 0.0,
            zeta2: 0.0,
        }
    }

    #[test]
    fn a_vanishes_at_p_one() {
        let t = TheoryInputs { p: 1.0, ..base() };
        assert_eq!(compute_a(&t).unwrap(), 0.0);
        assert_eq!(gamma_max_nc(&t).unwrap(), 1.0);
    }

    #[test]
    fn a_reference_value() {
        // 6 * (0.1*4/0.5 + 1/8) * (1 + 2) + 6 * (0.4*2/0.5 + 1/8) * 1
        let expected = 6.0 * (0.8 + 0.125) * 3.0 + 6.0 * (1.6 + 0.125);
        assert!((compute_a(&base()).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn infeasible_delta_is_reported() {
        let t = TheoryInputs { big_b: 1.0, delta: 0.4, ..base() };
        assert!(matches!(gamma_max_nc(&t), Err(Error::Infeasible(_))));
        let t = TheoryInputs { big_b: 1.0, delta: 0.008, ..base() };
        assert!(gamma_max_nc(&t).is_ok());
        assert!(matches!(gamma_max_pl(&t), Err(Error::Infeasible(_))));
    }

    #[test]
    fn delta_zero_bound_is_pure_rate() {
        let t = TheoryInputs { delta: 0.0, zeta2: 3.0, ..base() };
        let b = nonconvex_rate_bound(&t, 2.0, 9, 0.1).unwrap();
        assert!((b.value - 2.0 * 2.0 / (0.1 * 10.0)).abs() < 1e-12);
        assert!(b.admissible);
        assert!(!nonconvex_rate_bound(&t, 2.0, 9, 10.0).unwrap().admissible);
    }

    #[test]
    fn neighborhood_scaling() {
        let t = TheoryInputs { zeta2: 2.0, ..base() };
        assert!((neighborhood_nc(&t) * t.p - 24.0 * t.c * t.delta * t.zeta2).abs() < 1e-12);
    }

    #[test]
    fn pl_rhs_decays_geometrically() {
        let t = TheoryInputs { delta: 0.0, ..base() };
        let g = gamma_max_pl(&t).unwrap();
        let b0 = pl_rate_bound(&t, 1.0, 0, g).unwrap();
        let b1 = pl_rate_bound(&t, 1.0, 1, g).unwrap();
        assert!((b1.value / b0.value - (1.0 - g * t.mu)).abs() < 1e-12);
    }

    #[test]
    fn line_fit_constraints() {
        let (b, z) = nonneg_line_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((b - 2.0).abs() < 1e-12 && (z - 1.0).abs() < 1e-12);
        let (b, z) = nonneg_line_fit(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]);
        assert_eq!((b, z), (0.0, 2.0));
    }
}
