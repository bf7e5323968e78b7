//! Byzantine message strategies.
//!
//! All Byzantine workers collude: crafted attacks (ALIE, IPM) send one shared
//! vector per round. NA, LF and BF run the honest worker pipeline, LF on a
//! label-flipped copy of the data built at shard construction time.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::vecops::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// No attack: Byzantines follow the protocol.
    Na,
    /// Label flipping.
    Lf,
    /// Bit (sign) flipping.
    Bf,
    /// "A little is enough".
    Alie,
    /// Inner product manipulation.
    Ipm,
}

impl AttackKind {
    /// Attacks whose message is forged from the good messages rather than
    /// produced by the worker's own pipeline.
    pub fn is_crafted(self) -> bool {
        matches!(self, AttackKind::Alie | AttackKind::Ipm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attack {
    pub kind: AttackKind,
    pub ipm_epsilon: f64,
    /// Fixed ALIE `z`; `None` picks it from the worker counts.
    pub alie_z: Option<f64>,
    pub alie_z_floor: f64,
}

impl Attack {
    pub fn new(kind: AttackKind) -> Self {
        Self { kind, ipm_epsilon: 0.1, alie_z: None, alie_z_floor: 0.3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == AttackKind::Ipm && !(self.ipm_epsilon > 0.0) {
            return Err(Error::InvalidArgument("ipm epsilon must be > 0".into()));
        }
        Ok(())
    }

    pub fn resolved_z(&self, n: usize, byz: usize) -> Result<f64> {
        match self.alie_z {
            Some(z) => Ok(z),
            None => alie_auto_z(n, byz, self.alie_z_floor),
        }
    }
}

/// Snapshot of one round visible to the (omniscient) attackers.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub good_messages: &'a [ParamVector],
    pub n: usize,
    pub byz_count: usize,
    pub round: usize,
}

/// Message of one Byzantine worker. `honest` runs the worker's own protocol
/// computation and is only invoked for NA, LF and BF.
pub fn byz_message(
    attack: &Attack,
    ctx: &AttackContext<'_>,
    honest: impl FnOnce() -> Result<ParamVector>,
) -> Result<ParamVector> {
    match attack.kind {
        AttackKind::Na | AttackKind::Lf => honest(),
        AttackKind::Bf => Ok(honest()?.into_iter().map(|v| -v).collect()),
        AttackKind::Alie => {
            let z = attack.resolved_z(ctx.n, ctx.byz_count)?;
            alie(ctx.good_messages, z)
        }
        AttackKind::Ipm => ipm(ctx.good_messages, attack.ipm_epsilon),
    }
}

/// Coordinate-wise mean and population standard deviation.
pub fn mean_and_std(vectors: &[ParamVector]) -> Result<(ParamVector, ParamVector)> {
    let first = vectors.first().ok_or(Error::EmptyInput)?;
    let d = first.len();
    let n = vectors.len() as f64;
    let mut mu = vec![0.0; d];
    for v in vectors {
        crate::error::check_dim(d, v.len())?;
        for (m, x) in mu.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in mu.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for v in vectors {
        for t in 0..d {
            var[t] += (v[t] - mu[t]).powi(2);
        }
    }
    let sigma = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok((mu, sigma))
}

pub fn alie(good: &[ParamVector], z: f64) -> Result<ParamVector> {
    let (mu, sigma) = mean_and_std(good)?;
    Ok(mu.iter().zip(&sigma).map(|(m, s)| m - z * s).collect())
}

pub fn ipm(good: &[ParamVector], epsilon: f64) -> Result<ParamVector> {
    let mu = crate::aggregation::mean(good)?;
    Ok(mu.into_iter().map(|m| -epsilon * m).collect())
}

/// ALIE's `z` from the worker counts:
/// `s = floor(n/2 + 1) - byz`, `z = Phi^-1((n - byz - s) / (n - byz))`,
/// replaced by `floor` when the quantile argument is at most 1/2.
pub fn alie_auto_z(n: usize, byz: usize, floor: f64) -> Result<f64> {
    if 2 * byz >= n {
        return Err(Error::InvalidArgument(format!("alie needs byz < n/2, got n = {n}, byz = {byz}")));
    }
    let s = (n / 2 + 1) as i64 - byz as i64;
    let good = (n - byz) as f64;
    let arg = (good - s as f64) / good;
    if arg <= 0.5 {
        return Ok(floor);
    }
    Ok(Normal::standard().inverse_cdf(arg))
}

/// Projects a crafted vector onto a `k`-sparse correction of `base`:
/// `base + topk(v - base)`, keeping the `k` largest-magnitude coordinates
/// (lowest index wins ties).
pub fn project_sparse(base: &[f64], v: &[f64], k: usize) -> ParamVector {
    let diff: Vec<f64> = v.iter().zip(base).map(|(a, b)| a - b).collect();
    let mut order: Vec<usize> = (0..diff.len()).collect();
    order.sort_by(|&i, &j| diff[j].abs().total_cmp(&diff[i].abs()).then(i.cmp(&j)));
    let mut out = base.to_vec();
    for &i in order.iter().take(k) {
        out[i] += diff[i];
    }
    out
}
