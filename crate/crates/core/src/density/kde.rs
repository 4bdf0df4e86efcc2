use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bandwidth::{column_std, silverman_bandwidth, silverman_factor, BandwidthMatrix};
use crate::error::{invalid, Result, SsmError};

/// Per-dimension z-score record kept alongside a model fitted on scaled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(samples: &DMatrix<f64>) -> Result<Self> {
        let n = samples.nrows();
        if n < 2 {
            return Err(SsmError::InsufficientData(format!(
                "standardization needs at least 2 samples, got {n}"
            )));
        }
        let mean = samples.column_iter().map(|c| c.sum() / n as f64).collect();
        let std = column_std(samples);
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(SsmError::ZeroBandwidth);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct KdeModelFile {
    dim: usize,
    samples: Vec<f64>,
    bandwidth: BandwidthMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    standardization: Option<Standardization>,
}

/// Gaussian kernel density estimate: `(1/N) Σ_i N(x; s_i, H)`.
///
/// Kernel evaluations run in coordinates whitened by the Cholesky factor of
/// `H`, so every query costs one triangular solve plus `N` squared norms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "KdeModelFile", into = "KdeModelFile")]
pub struct KdeModel {
    dim: usize,
    samples: Vec<f64>,
    bandwidth: BandwidthMatrix,
    standardization: Option<Standardization>,
    chol: DMatrix<f64>,
    whitened: Vec<f64>,
    log_norm: f64,
}

impl PartialEq for KdeModel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.samples == other.samples
            && self.bandwidth == other.bandwidth
            && self.standardization == other.standardization
    }
}

impl TryFrom<KdeModelFile> for KdeModel {
    type Error = SsmError;

    fn try_from(f: KdeModelFile) -> Result<Self> {
        if f.dim == 0 || f.samples.is_empty() || !f.samples.len().is_multiple_of(f.dim) {
            return Err(SsmError::Format(
                "kde samples do not match dimension".into(),
            ));
        }
        let n = f.samples.len() / f.dim;
        let m = DMatrix::from_row_slice(n, f.dim, &f.samples);
        let mut model = KdeModel::new(&m, f.bandwidth)?;
        model.standardization = f.standardization;
        Ok(model)
    }
}

impl From<KdeModel> for KdeModelFile {
    fn from(m: KdeModel) -> Self {
        KdeModelFile {
            dim: m.dim,
            samples: m.samples,
            bandwidth: m.bandwidth,
            standardization: m.standardization,
        }
    }
}

fn forward_solve(l: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for i in 0..x.len() {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * out[j];
        }
        out[i] = s / l[(i, i)];
    }
}

/// Turns unnormalized log weights into a sampling distribution. Fails when
/// every weight underflows in linear space.
fn kernel_index(log_w: &[f64], what: &'static str) -> Result<(WeightedIndex<f64>, Vec<f64>)> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max.exp() > 0.0) {
        return Err(SsmError::OutsideSupport(what));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let probs = w.iter().map(|v| v / total).collect();
    let index = WeightedIndex::new(&w).map_err(|e| invalid(format!("kernel weights: {e}")))?;
    Ok((index, probs))
}

fn standard_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

impl KdeModel {
    /// Rows of `samples` are data points.
    pub fn new(samples: &DMatrix<f64>, bandwidth: BandwidthMatrix) -> Result<Self> {
        let (n, dim) = samples.shape();
        if n == 0 || dim == 0 {
            return Err(SsmError::InsufficientData(
                "kde needs at least one sample".into(),
            ));
        }
        if bandwidth.dim() != dim {
            return Err(SsmError::DimensionMismatch {
                expected: dim,
                got: bandwidth.dim(),
            });
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kde samples must be finite"));
        }
        bandwidth.validate()?;
        let chol = bandwidth.cholesky_lower()?;
        let mut flat = Vec::with_capacity(n * dim);
        for row in samples.row_iter() {
            flat.extend(row.iter());
        }
        let mut whitened = vec![0.0; n * dim];
        for (src, dst) in flat.chunks_exact(dim).zip(whitened.chunks_exact_mut(dim)) {
            forward_solve(&chol, src, dst);
        }
        let log_det_l: f64 = chol.diagonal().iter().map(|d| d.ln()).sum();
        let log_norm = -0.5 * dim as f64 * (2.0 * PI).ln() - log_det_l;
        Ok(Self {
            dim,
            samples: flat,
            bandwidth,
            standardization: None,
            chol,
            whitened,
            log_norm,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], bandwidth: BandwidthMatrix) -> Result<Self> {
        Self::new(&rows_to_matrix(rows)?, bandwidth)
    }

    /// Scalar Silverman bandwidth on the raw data.
    pub fn fit_silverman(samples: &DMatrix<f64>) -> Result<Self> {
        let bw = silverman_bandwidth(samples)?;
        Self::new(samples, bw)
    }

    /// Silverman bandwidth applied after per-dimension standardization:
    /// `H = h² diag(σ_j²)` with `h` the unit-spread Silverman factor. The
    /// standardization record is kept on the model.
    pub fn fit_standardized(samples: &DMatrix<f64>) -> Result<Self> {
        let st = Standardization::fit(samples)?;
        let h = silverman_factor(samples.nrows(), samples.ncols());
        let diag: Vec<f64> = st.std.iter().map(|s| (h * s).powi(2)).collect();
        let mut model = Self::new(samples, BandwidthMatrix::diagonal(&diag)?)?;
        model.standardization = Some(st);
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn bandwidth(&self) -> &BandwidthMatrix {
        &self.bandwidth
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(SsmError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let mut y = vec![0.0; self.dim];
        forward_solve(&self.chol, x, &mut y);
        let d2: Vec<f64> = self
            .whitened
            .chunks_exact(self.dim)
            .map(|w| w.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let min = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let s: f64 = d2.iter().map(|d| (-0.5 * (d - min)).exp()).sum();
        Ok(s.ln() - 0.5 * min + self.log_norm - (self.len() as f64).ln())
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// One draw: a uniformly chosen kernel plus `N(0, H)` noise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let i = rng.random_range(0..self.len());
        let z = &self.chol * standard_normal_vec(self.dim, rng);
        self.sample_row(i)
            .iter()
            .zip(z.iter())
            .map(|(m, e)| m + e)
            .collect()
    }

    /// Sampler for the remaining coordinates given fixed values at
    /// `given_indices`.
    pub fn conditional_sampler(
        &self,
        given_indices: &[usize],
        given_values: &[f64],
    ) -> Result<ConditionalSampler> {
        ConditionalSampler::new(self, given_indices, given_values)
    }

    /// Sampler for the KDE restricted to the affine subspace `A v = b`.
    pub fn constrained_sampler(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<ConstrainedSampler> {
        ConstrainedSampler::new(self, a, b)
    }
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(SsmError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]))
}

/// Kernel mixture conditioned on a subset of coordinates. Kernel `i` is
/// picked with probability proportional to its marginal density at the
/// given values; the rest is drawn from that kernel's conditional Gaussian.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    given: Vec<usize>,
    rest: Vec<usize>,
    values: DVector<f64>,
    gain: DMatrix<f64>,
    chol_cond: DMatrix<f64>,
    index: WeightedIndex<f64>,
    probs: Vec<f64>,
    n: usize,
}

impl ConditionalSampler {
    fn new(model: &KdeModel, given: &[usize], values: &[f64]) -> Result<Self> {
        let dim = model.dim;
        if given.len() != values.len() {
            return Err(SsmError::DimensionMismatch {
                expected: given.len(),
                got: values.len(),
            });
        }
        let mut sorted = given.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() || sorted.len() != given.len() || sorted.len() >= dim {
            return Err(invalid(
                "conditioning indices must be a strict non-empty subset",
            ));
        }
        if sorted.last().is_some_and(|&i| i >= dim) {
            return Err(invalid("conditioning index out of range"));
        }
        let rest: Vec<usize> = (0..dim).filter(|i| !given.contains(i)).collect();
        let h = model.bandwidth.matrix();
        let h_gg = h.select_rows(given).select_columns(given);
        let h_rg = h.select_rows(&rest).select_columns(given);
        let h_rr = h.select_rows(&rest).select_columns(&rest);
        let chol_gg = h_gg
            .clone()
            .cholesky()
            .ok_or_else(|| invalid("marginal bandwidth is not positive definite"))?;
        // gain = H_rg H_gg^-1
        let gain = chol_gg.solve(&h_rg.transpose()).transpose();
        let cond = &h_rr - &gain * h_rg.transpose();
        let chol_cond = cond
            .cholesky()
            .ok_or_else(|| invalid("conditional bandwidth is not positive definite"))?
            .l();
        let l_gg = chol_gg.l();
        let log_det: f64 = l_gg.diagonal().iter().map(|d| d.ln()).sum();
        let norm = -0.5 * given.len() as f64 * (2.0 * PI).ln() - log_det;
        let values = DVector::from_column_slice(values);
        let mut diff = vec![0.0; given.len()];
        let mut y = vec![0.0; given.len()];
        let log_w: Vec<f64> = (0..model.len())
            .map(|i| {
                let row = model.sample_row(i);
                for (k, &g) in given.iter().enumerate() {
                    diff[k] = values[k] - row[g];
                }
                forward_solve(&l_gg, &diff, &mut y);
                norm - 0.5 * y.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        let (index, probs) = kernel_index(&log_w, "conditioning point")?;
        Ok(Self {
            given: given.to_vec(),
            rest,
            values,
            gain,
            chol_cond,
            index,
            probs,
            n: model.len(),
        })
    }

    /// Indices of the coordinates a draw returns, in order.
    pub fn free_indices(&self) -> &[usize] {
        &self.rest
    }

    pub fn kernel_probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Draws the free coordinates. `model` must be the model the sampler was
    /// built from.
    pub fn sample<R: Rng + ?Sized>(&self, model: &KdeModel, rng: &mut R) -> Vec<f64> {
        debug_assert_eq!(model.len(), self.n);
        let i = self.index.sample(rng);
        let row = model.sample_row(i);
        let mu_g = DVector::from_iterator(self.given.len(), self.given.iter().map(|&g| row[g]));
        let mu_r = DVector::from_iterator(self.rest.len(), self.rest.iter().map(|&r| row[r]));
        let mean = mu_r + &self.gain * (&self.values - mu_g);
        let v = mean + &self.chol_cond * standard_normal_vec(self.rest.len(), rng);
        v.iter().copied().collect()
    }
}

/// One conditional draw; builds a throwaway [`ConditionalSampler`].
pub fn kde_sample_conditional<R: Rng + ?Sized>(
    model: &KdeModel,
    given_indices: &[usize],
    given_values: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(model
        .conditional_sampler(given_indices, given_values)?
        .sample(model, rng))
}

/// Kernel mixture restricted to `A v = b`. Kernel `i` is weighted by
/// `N(b; A μ_i, A H Aᵀ)`; a draw `u ~ N(μ_i, H)` is projected onto the
/// subspace along `K = H Aᵀ (A H Aᵀ)⁻¹`, which gives the exact conditional
/// Gaussian of that kernel.
#[derive(Debug, Clone)]
pub struct ConstrainedSampler {
    a: DMatrix<f64>,
    b: DVector<f64>,
    gain: DMatrix<f64>,
    chol_h: DMatrix<f64>,
    index: WeightedIndex<f64>,
    probs: Vec<f64>,
    n: usize,
}

impl ConstrainedSampler {
    fn new(model: &KdeModel, a: &DMatrix<f64>, b: &[f64]) -> Result<Self> {
        let (m, cols) = a.shape();
        if cols != model.dim {
            return Err(SsmError::DimensionMismatch {
                expected: model.dim,
                got: cols,
            });
        }
        if b.len() != m {
            return Err(SsmError::DimensionMismatch {
                expected: m,
                got: b.len(),
            });
        }
        if m == 0 || m >= model.dim {
            return Err(invalid("constraint must have between 1 and dim - 1 rows"));
        }
        let h = model.bandwidth.matrix();
        let ah = a * &h;
        let s = &ah * a.transpose();
        let chol_s = s
            .cholesky()
            .ok_or_else(|| invalid("constraint matrix must have full row rank"))?;
        let gain = chol_s.solve(&ah).transpose();
        let l_s = chol_s.l();
        let log_det: f64 = l_s.diagonal().iter().map(|d| d.ln()).sum();
        let norm = -0.5 * m as f64 * (2.0 * PI).ln() - log_det;
        let b = DVector::from_column_slice(b);
        let mut diff = vec![0.0; m];
        let mut y = vec![0.0; m];
        let log_w: Vec<f64> = (0..model.len())
            .map(|i| {
                let row = model.sample_row(i);
                for (k, d) in diff.iter_mut().enumerate() {
                    let am: f64 = (0..cols).map(|j| a[(k, j)] * row[j]).sum();
                    *d = b[k] - am;
                }
                forward_solve(&l_s, &diff, &mut y);
                norm - 0.5 * y.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        let (index, probs) = kernel_index(&log_w, "initial situation")?;
        Ok(Self {
            a: a.clone(),
            b,
            gain,
            chol_h: model.chol.clone(),
            index,
            probs,
            n: model.len(),
        })
    }

    pub fn kernel_probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn constraint(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    /// Full-dimension draw satisfying `A v = b`. `model` must be the model
    /// the sampler was built from.
    pub fn sample<R: Rng + ?Sized>(&self, model: &KdeModel, rng: &mut R) -> DVector<f64> {
        debug_assert_eq!(model.len(), self.n);
        let i = self.index.sample(rng);
        let mu = DVector::from_column_slice(model.sample_row(i));
        let mut v = mu + &self.chol_h * standard_normal_vec(model.dim, rng);
        // A second projection removes the rounding left by the first.
        for _ in 0..2 {
            let r = &self.b - &self.a * &v;
            v += &self.gain * r;
        }
        v
    }
}
