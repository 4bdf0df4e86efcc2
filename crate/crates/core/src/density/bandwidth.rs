use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsmError};

/// Kernel covariance: either `h² I` or a full symmetric positive-definite
/// matrix (stored row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BandwidthMatrix {
    Scalar { dim: usize, h: f64 },
    Full { dim: usize, entries: Vec<f64> },
}

impl BandwidthMatrix {
    pub fn scalar(dim: usize, h: f64) -> Result<Self> {
        let b = BandwidthMatrix::Scalar { dim, h };
        b.validate()?;
        Ok(b)
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::full(&DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(diag),
        ))
    }

    pub fn full(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid("bandwidth matrix must be square"));
        }
        let dim = m.nrows();
        let entries = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        let b = BandwidthMatrix::Full { dim, entries };
        b.validate()?;
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        match self {
            BandwidthMatrix::Scalar { dim, .. } | BandwidthMatrix::Full { dim, .. } => *dim,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            BandwidthMatrix::Scalar { dim, h } => DMatrix::identity(*dim, *dim) * (h * h),
            BandwidthMatrix::Full { dim, entries } => DMatrix::from_row_slice(*dim, *dim, entries),
        }
    }

    /// Lower Cholesky factor `L` with `L Lᵀ = H`.
    pub fn cholesky_lower(&self) -> Result<DMatrix<f64>> {
        self.matrix()
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| invalid("bandwidth matrix is not positive definite"))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BandwidthMatrix::Scalar { dim, h } => {
                if *dim == 0 {
                    return Err(invalid("bandwidth dimension must be positive"));
                }
                if *h == 0.0 {
                    return Err(SsmError::ZeroBandwidth);
                }
                if !(h.is_finite() && *h > 0.0) {
                    return Err(invalid("scalar bandwidth must be positive and finite"));
                }
            }
            BandwidthMatrix::Full { dim, entries } => {
                if *dim == 0 || entries.len() != dim * dim {
                    return Err(invalid("full bandwidth needs dim² entries"));
                }
                if entries.iter().any(|e| !e.is_finite()) {
                    return Err(invalid("bandwidth entries must be finite"));
                }
                let m = self.matrix();
                let scale = m.amax();
                if (&m - m.transpose()).amax() > 1e-12 * scale {
                    return Err(invalid("bandwidth matrix must be symmetric"));
                }
                self.cholesky_lower()?;
            }
        }
        Ok(())
    }
}

/// `(4 / ((D + 2) N))^(1 / (D + 4))`, the Silverman factor for unit spread.
pub fn silverman_factor(n: usize, dim: usize) -> f64 {
    let d = dim as f64;
    (4.0 / ((d + 2.0) * n as f64)).powf(1.0 / (d + 4.0))
}

/// Per-column sample standard deviations (divisor `n - 1`).
pub(crate) fn column_std(samples: &DMatrix<f64>) -> Vec<f64> {
    let n = samples.nrows() as f64;
    samples
        .column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

/// Silverman's rule with the spread taken as the mean per-dimension sample
/// standard deviation. Rows of `samples` are data points.
pub fn silverman_bandwidth(samples: &DMatrix<f64>) -> Result<BandwidthMatrix> {
    let (n, dim) = samples.shape();
    if n < 2 {
        return Err(SsmError::InsufficientData(format!(
            "bandwidth selection needs at least 2 samples, got {n}"
        )));
    }
    if dim == 0 {
        return Err(invalid("samples have no columns"));
    }
    let spread = column_std(samples).iter().sum::<f64>() / dim as f64;
    if !(spread > 0.0) {
        return Err(SsmError::ZeroBandwidth);
    }
    BandwidthMatrix::scalar(dim, spread * silverman_factor(n, dim))
}
