//! Dense vector helpers used throughout the simulator.
//!
//! All reductions run in index order so that results do not depend on
//! scheduling.

/// Dense real vector of the model dimension.
pub type ParamVector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> ParamVector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> ParamVector {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn is_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Averaged pairwise squared distance `1/(n(n-1)) * sum_{i,l} ||v_i - v_l||^2`.
///
/// Zero for fewer than two vectors.
pub fn pairwise_variance(vectors: &[ParamVector]) -> f64 {
    let n = vectors.len();
    if n < 2 {
        return 0.0;
    }
    let d = vectors[0].len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        axpy(1.0, v, &mut mean);
    }
    scale(1.0 / n as f64, &mut mean);
    let spread: f64 = vectors.iter().map(|v| dist_sq(v, &mean)).sum();
    2.0 * spread / (n as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_variance_matches_double_sum() {
        let vs = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![5.0, 3.0], vec![-1.0, 0.5]];
        let n = vs.len() as f64;
        let mut total = 0.0;
        for a in &vs {
            for b in &vs {
                total += dist_sq(a, b);
            }
        }
        let direct = total / (n * (n - 1.0));
        assert!((pairwise_variance(&vs) - direct).abs() < 1e-12);
    }

    #[test]
    fn pairwise_variance_single_vector_is_zero() {
        assert_eq!(pairwise_variance(&[vec![1.0, 2.0]]), 0.0);
    }
}
