use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsmError};

/// Truncated SVD of the centred, column-stacked pair matrix `[x - x̄; y - ȳ]`.
///
/// A pair is approximated as `[x - x̄; y - ȳ] ≈ [U₁; U₂] Σ ṽ` with `ṽ` the
/// pair's reduced coordinates. Factors are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedBasis {
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    u_top: Vec<f64>,
    u_bottom: Vec<f64>,
    singular_values: Vec<f64>,
}

/// The linear constraint `A ṽ = b` that pins a pair's `x` part.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSpec {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl ReducedBasis {
    pub fn dx(&self) -> usize {
        self.mean_x.len()
    }

    pub fn dy(&self) -> usize {
        self.mean_y.len()
    }

    pub fn d(&self) -> usize {
        self.singular_values.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn u_top(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dx(), self.d(), &self.u_top)
    }

    pub fn u_bottom(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dy(), self.d(), &self.u_bottom)
    }

    fn sigma(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values))
    }

    /// `A = U₁ Σ`, `b = x - x̄`.
    pub fn constraint(&self, x: &[f64]) -> Result<ConstraintSpec> {
        if x.len() != self.dx() {
            return Err(SsmError::DimensionMismatch {
                expected: self.dx(),
                got: x.len(),
            });
        }
        Ok(ConstraintSpec {
            a: self.u_top() * self.sigma(),
            b: x.iter().zip(&self.mean_x).map(|(v, m)| v - m).collect(),
        })
    }

    /// Reduced coordinates of one pair: `Σ⁻¹ [U₁; U₂]ᵀ [x - x̄; y - ȳ]`.
    pub fn reduce(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dx() || y.len() != self.dy() {
            return Err(SsmError::DimensionMismatch {
                expected: self.dx() + self.dy(),
                got: x.len() + y.len(),
            });
        }
        let (dx, d) = (self.dx(), self.d());
        let mut v = vec![0.0; d];
        for (k, vk) in v.iter_mut().enumerate() {
            let top: f64 = (0..dx)
                .map(|i| self.u_top[i * d + k] * (x[i] - self.mean_x[i]))
                .sum();
            let bottom: f64 = (0..self.dy())
                .map(|i| self.u_bottom[i * d + k] * (y[i] - self.mean_y[i]))
                .sum();
            *vk = (top + bottom) / self.singular_values[k];
        }
        Ok(v)
    }

    /// `(x̄ + U₁ Σ ṽ, ȳ + U₂ Σ ṽ)`.
    pub fn reconstruct(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.d();
        let scaled: Vec<f64> = v
            .iter()
            .zip(&self.singular_values)
            .map(|(a, s)| a * s)
            .collect();
        let apply = |u: &[f64], mean: &[f64]| -> Vec<f64> {
            mean.iter()
                .enumerate()
                .map(|(i, m)| m + (0..d).map(|k| u[i * d + k] * scaled[k]).sum::<f64>())
                .collect()
        };
        (
            apply(&self.u_top, &self.mean_x),
            apply(&self.u_bottom, &self.mean_y),
        )
    }

    /// Future part of a reconstruction, clamped at zero (speeds cannot be
    /// negative).
    pub fn future_from_coords(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d();
        self.mean_y
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let s: f64 = (0..d)
                    .map(|k| self.u_bottom[i * d + k] * self.singular_values[k] * v[k])
                    .sum();
                (m + s).max(0.0)
            })
            .collect()
    }
}

/// Fits the basis from pair matrices with one row per pair (`x`: N × dx,
/// `y`: N × dy) and returns it with the N × d matrix of reduced coordinates.
pub fn fit_svd_basis(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    d: usize,
) -> Result<(ReducedBasis, DMatrix<f64>)> {
    let (n, dx) = x.shape();
    let dy = y.ncols();
    if y.nrows() != n {
        return Err(SsmError::DimensionMismatch {
            expected: n,
            got: y.nrows(),
        });
    }
    if !(dx < d && d < dx + dy) {
        return Err(invalid(format!(
            "retained rank {d} must lie strictly between {dx} and {}",
            dx + dy
        )));
    }
    if n < d {
        return Err(SsmError::InsufficientData(format!(
            "{n} pairs cannot support rank {d}"
        )));
    }
    let mean_x: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let mean_y: Vec<f64> = y.column_iter().map(|c| c.mean()).collect();
    let m = DMatrix::from_fn(dx + dy, n, |i, j| {
        if i < dx {
            x[(j, i)] - mean_x[i]
        } else {
            y[(j, i - dx)] - mean_y[i - dx]
        }
    });
    let svd = m.clone().svd(true, false);
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| invalid("svd did not return U"))?;
    let s: Vec<f64> = svd.singular_values.iter().take(d).copied().collect();
    if s.len() < d || s.iter().any(|v| !(*v > 0.0)) {
        return Err(SsmError::InsufficientData(format!(
            "pair matrix has rank below {d}"
        )));
    }
    let u_d = u.columns(0, d).into_owned();
    let row_major = |rows: std::ops::Range<usize>| -> Vec<f64> {
        rows.flat_map(|i| (0..d).map(move |k| (i, k)))
            .map(|(i, k)| u_d[(i, k)])
            .collect()
    };
    let basis = ReducedBasis {
        mean_x,
        mean_y,
        u_top: row_major(0..dx),
        u_bottom: row_major(dx..dx + dy),
        singular_values: s.clone(),
    };
    let mut coords = m.transpose() * &u_d;
    for (k, sk) in s.iter().enumerate() {
        coords.column_mut(k).scale_mut(1.0 / sk);
    }
    Ok((basis, coords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn random_pairs(n: usize, dx: usize, dy: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = stream_rng(seed, 0, 0);
        let x = DMatrix::from_fn(n, dx, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, dy, |_, _| rng.random_range(-1.0..1.0));
        (x, y)
    }

    #[test]
    fn basis_is_orthonormal_and_sorted() {
        let (x, y) = random_pairs(60, 2, 8, 1);
        let (b, _) = fit_svd_basis(&x, &y, 5).unwrap();
        let mut u = DMatrix::zeros(10, 5);
        u.rows_mut(0, 2).copy_from(&b.u_top());
        u.rows_mut(2, 8).copy_from(&b.u_bottom());
        let gram = u.transpose() * &u;
        assert!((gram - DMatrix::identity(5, 5)).amax() <= 1e-10);
        assert!(b.singular_values().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn exact_rank_reconstructs() {
        let mut rng = stream_rng(2, 0, 0);
        let n = 40;
        let basis = DMatrix::from_fn(3, 7, |_, _| rng.random_range(-1.0..1.0));
        let coef = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let data = coef * basis;
        let x = data.columns(0, 2).into_owned();
        let y = data.columns(2, 5).into_owned();
        let (b, coords) = fit_svd_basis(&x, &y, 3).unwrap();
        for i in 0..n {
            let v: Vec<f64> = coords.row(i).iter().copied().collect();
            let (rx, ry) = b.reconstruct(&v);
            for j in 0..2 {
                assert!((rx[j] - x[(i, j)]).abs() < 1e-10);
            }
            for j in 0..5 {
                assert!((ry[j] - y[(i, j)]).abs() < 1e-10);
            }
            let again = b.reduce(&rx, &ry).unwrap();
            for k in 0..3 {
                assert!((again[k] - v[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constraint_holds_for_reduced_coordinates() {
        let (x, y) = random_pairs(30, 2, 6, 3);
        let (b, coords) = fit_svd_basis(&x, &y, 4).unwrap();
        for i in 0..30 {
            let v = DVector::from_iterator(4, coords.row(i).iter().copied());
            let (rx, _) = b.reconstruct(v.as_slice());
            let c = b.constraint(&rx).unwrap();
            let r = &c.a * &v - DVector::from_column_slice(&c.b);
            assert!(r.amax() < 1e-12);
        }
    }

    #[test]
    fn rank_bounds_are_enforced() {
        let (x, y) = random_pairs(10, 2, 4, 4);
        assert!(fit_svd_basis(&x, &y, 2).is_err());
        assert!(fit_svd_basis(&x, &y, 6).is_err());
        let (x, y) = random_pairs(3, 2, 4, 4);
        assert!(matches!(
            fit_svd_basis(&x, &y, 4),
            Err(SsmError::InsufficientData(_))
        ));
    }

    #[test]
    fn future_is_clamped_at_zero() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.5, 2.0, 0.2, 3.0, 1.0]);
        let (b, _) = fit_svd_basis(&x, &y, 2).unwrap();
        let f = b.future_from_coords(&[-100.0, 0.0]);
        assert!(f.iter().all(|v| *v >= 0.0));
    }
}
