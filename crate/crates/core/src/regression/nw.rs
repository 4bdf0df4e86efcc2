use nalgebra::DMatrix;

use super::design::DesignPointSet;
use crate::density::BandwidthMatrix;
use crate::error::{invalid, Result, SsmError};

/// Nadaraya-Watson smoother with a Gaussian kernel of covariance `B`:
/// `p(x) = Σ_k K(x - x'_k) p_k / Σ_k K(x - x'_k)`.
///
/// Design points are stored whitened by the Cholesky factor of `B`, one
/// column per coordinate so the distance loop vectorizes. Weights
/// are taken relative to the nearest point, so the sum never underflows and
/// far queries degrade gracefully to the nearest point's value.
fn weight(d: f64, min: f64) -> f64 {
    (-0.5 * (d - min)).exp()
}

#[derive(Debug, Clone)]
pub struct NwSmoother {
    dim: usize,
    chol: DMatrix<f64>,
    columns: Vec<Vec<f64>>,
    /// Probabilities shifted by `p_ref` so a constant table yields an exact
    /// zero gradient.
    shifted: Vec<f64>,
    p_ref: f64,
    p_min: f64,
    p_max: f64,
}

impl NwSmoother {
    pub fn new(
        points: &DesignPointSet,
        probabilities: &[f64],
        bandwidth: &BandwidthMatrix,
    ) -> Result<Self> {
        let dim = points.dim;
        if probabilities.len() != points.len() {
            return Err(SsmError::DimensionMismatch {
                expected: points.len(),
                got: probabilities.len(),
            });
        }
        if bandwidth.dim() != dim {
            return Err(SsmError::DimensionMismatch {
                expected: dim,
                got: bandwidth.dim(),
            });
        }
        if probabilities.is_empty() {
            return Err(SsmError::InsufficientData(
                "smoother needs design points".into(),
            ));
        }
        let chol = bandwidth.cholesky_lower()?;
        let mut columns = vec![Vec::with_capacity(points.len()); dim];
        let mut z = vec![0.0; dim];
        for src in points.iter() {
            forward_solve(&chol, src, &mut z);
            for (c, v) in columns.iter_mut().zip(&z) {
                c.push(*v);
            }
        }
        let p_ref = probabilities[0];
        Ok(Self {
            dim,
            chol,
            columns,
            shifted: probabilities.iter().map(|p| p - p_ref).collect(),
            p_ref,
            p_min: probabilities.iter().copied().fold(f64::INFINITY, f64::min),
            p_max: probabilities
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn whiten(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(SsmError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("query must be finite"));
        }
        let mut z = vec![0.0; self.dim];
        forward_solve(&self.chol, x, &mut z);
        Ok(z)
    }

    /// Squared whitened distances to every design point and their minimum.
    fn distances(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let mut d2 = vec![0.0; self.shifted.len()];
        for (col, zj) in self.columns.iter().zip(z) {
            for (d, c) in d2.iter_mut().zip(col) {
                let t = c - zj;
                *d += t * t;
            }
        }
        // Four independent lanes keep the reductions from serializing on
        // floating-point latency.
        let mut lanes = [f64::INFINITY; 4];
        let chunks = d2.chunks_exact(4);
        let tail = chunks
            .remainder()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        for c in chunks {
            for (l, v) in lanes.iter_mut().zip(c) {
                *l = l.min(*v);
            }
        }
        let min = lanes.iter().copied().fold(tail, f64::min);
        (d2, min)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let z = self.whiten(x)?;
        let (d2, min) = self.distances(&z);
        let mut s = [0.0; 4];
        let mut sq = [0.0; 4];
        let chunks = d2.chunks_exact(4);
        let rem = chunks.remainder().len();
        for (c, q) in chunks.zip(self.shifted.chunks_exact(4)) {
            for l in 0..4 {
                let w = weight(c[l], min);
                s[l] += w;
                sq[l] += w * q[l];
            }
        }
        let start = d2.len() - rem;
        for (d, q) in d2[start..].iter().zip(&self.shifted[start..]) {
            let w = weight(*d, min);
            s[0] += w;
            sq[0] += w * q;
        }
        let s: f64 = s.iter().sum();
        let sq: f64 = sq.iter().sum();
        Ok((self.p_ref + sq / s).clamp(self.p_min, self.p_max))
    }

    /// Value and analytic gradient
    /// `∇p = Σ_k w_k (p_k - p(x)) B⁻¹ (x'_k - x) / Σ_k w_k`.
    pub fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let z = self.whiten(x)?;
        let (d2, min) = self.distances(&z);
        let dim = self.dim;
        let mut s = 0.0;
        let mut sq = 0.0;
        let mut sw_dz = vec![0.0; dim];
        let mut swq_dz = vec![0.0; dim];
        let w: Vec<f64> = d2.iter().map(|&d| weight(d, min)).collect();
        for (wk, q) in w.iter().zip(&self.shifted) {
            s += wk;
            sq += wk * q;
        }
        for (j, col) in self.columns.iter().enumerate() {
            let (mut a, mut b) = (0.0, 0.0);
            for ((wk, q), c) in w.iter().zip(&self.shifted).zip(col) {
                let dz = wk * (c - z[j]);
                a += dz;
                b += dz * q;
            }
            sw_dz[j] = a;
            swq_dz[j] = b;
        }
        let q_hat = sq / s;
        // Gradient in whitened coordinates, then mapped back through L⁻ᵀ.
        let gz: Vec<f64> = (0..dim)
            .map(|j| (swq_dz[j] - q_hat * sw_dz[j]) / s)
            .collect();
        let mut grad = vec![0.0; dim];
        for i in (0..dim).rev() {
            let mut v = gz[i];
            for (k, g) in grad.iter().enumerate().skip(i + 1) {
                v -= self.chol[(k, i)] * g;
            }
            grad[i] = v / self.chol[(i, i)];
        }
        Ok(((self.p_ref + q_hat).clamp(self.p_min, self.p_max), grad))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate_with_gradient(x)?.1)
    }
}

pub(crate) fn forward_solve(l: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * out[j];
        }
        out[i] = s / l[(i, i)];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::design::DesignSource;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn set(dim: usize, points: Vec<f64>) -> DesignPointSet {
        DesignPointSet {
            dim,
            points,
            weights: vec![1.0; dim],
            source: DesignSource::GreedyCover,
        }
    }

    #[test]
    fn single_point_returns_its_value() {
        let s = NwSmoother::new(
            &set(2, vec![1.0, 2.0]),
            &[0.37],
            &BandwidthMatrix::scalar(2, 0.5).unwrap(),
        )
        .unwrap();
        assert_eq!(s.evaluate(&[100.0, -3.0]).unwrap(), 0.37);
        assert_eq!(s.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn symmetric_pair_blends_to_half() {
        let s = NwSmoother::new(
            &set(1, vec![0.0, 2.0]),
            &[0.0, 1.0],
            &BandwidthMatrix::scalar(1, 1.0).unwrap(),
        )
        .unwrap();
        assert!((s.evaluate(&[1.0]).unwrap() - 0.5).abs() < 1e-15);
        for x in [0.1, 0.7, 1.0, 1.9] {
            assert!(s.gradient(&[x]).unwrap()[0] > 0.0);
        }
    }

    #[test]
    fn tiny_bandwidth_interpolates() {
        let s = NwSmoother::new(
            &set(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
            &[0.1, 0.5, 0.9],
            &BandwidthMatrix::scalar(2, 1e-3).unwrap(),
        )
        .unwrap();
        assert_eq!(s.evaluate(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(s.evaluate(&[0.0, 1.0]).unwrap(), 0.9);
    }

    #[test]
    fn constant_table_has_zero_gradient() {
        let mut rng = stream_rng(9, 0, 0);
        let pts: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = NwSmoother::new(
            &set(3, pts),
            &[0.42; 20],
            &BandwidthMatrix::diagonal(&[0.5, 1.0, 2.0]).unwrap(),
        )
        .unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (v, g) = s.evaluate_with_gradient(&x).unwrap();
            assert_eq!(v, 0.42);
            assert!(g.iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn gradient_matches_finite_differences_with_full_bandwidth() {
        let mut rng = stream_rng(10, 0, 0);
        let pts: Vec<f64> = (0..80).map(|_| rng.random_range(-2.0..2.0)).collect();
        let probs: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let b = DMatrix::from_row_slice(2, 2, &[0.4, 0.15, 0.15, 0.3]);
        let s = NwSmoother::new(&set(2, pts), &probs, &BandwidthMatrix::full(&b).unwrap()).unwrap();
        let x = [0.3, -0.4];
        let g = s.gradient(&x).unwrap();
        let h = 1e-4;
        for j in 0..2 {
            let mut a = x;
            let mut c = x;
            a[j] += h;
            c[j] -= h;
            let fd = (s.evaluate(&a).unwrap() - s.evaluate(&c).unwrap()) / (2.0 * h);
            assert!(
                (fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3),
                "{fd} {}",
                g[j]
            );
        }
    }

    #[test]
    fn far_queries_fall_back_to_nearest_value() {
        let s = NwSmoother::new(
            &set(1, vec![0.0, 1.0]),
            &[0.2, 0.8],
            &BandwidthMatrix::scalar(1, 0.01).unwrap(),
        )
        .unwrap();
        assert_eq!(s.evaluate(&[1e6]).unwrap(), 0.8);
        assert_eq!(s.evaluate(&[-1e6]).unwrap(), 0.2);
        assert!(s.evaluate(&[f64::NAN]).is_err());
    }
}
