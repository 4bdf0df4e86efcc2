//! Batch Nadaraya-Watson evaluation for the special case of a grid table
//! with a diagonal bandwidth queried on another grid.
//!
//! The Gaussian kernel then factors over axes, so the numerator over all
//! queries is the probability tensor multiplied by one small weight matrix
//! per axis, and the denominator is a product of per-axis sums. The results
//! equal the pointwise smoother up to rounding.

use super::design::{AxisSpec, DesignSource};
use super::table::SsmTable;
use crate::error::Result;

/// Row-major tensor with the last axis fastest.
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Mode-`axis` product with `m` (`rows x shape[axis]`, row-major).
    fn mode_product(&self, axis: usize, m: &[f64], rows: usize) -> Tensor {
        let n = self.shape[axis];
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * rows * inner];
        for o in 0..outer {
            let src = &self.data[o * n * inner..(o + 1) * n * inner];
            let dst = &mut data[o * rows * inner..(o + 1) * rows * inner];
            for q in 0..rows {
                let out = &mut dst[q * inner..(q + 1) * inner];
                for k in 0..n {
                    let w = m[q * n + k];
                    if w == 0.0 {
                        continue;
                    }
                    for (d, s) in out.iter_mut().zip(&src[k * inner..(k + 1) * inner]) {
                        *d += w * s;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = rows;
        Tensor { shape, data }
    }
}

/// Per-axis kernel weights and their derivatives with respect to the query
/// coordinate, each row scaled by its largest weight. The scale cancels in
/// the ratio and in the quotient rule.
fn axis_weights(query: &[f64], design: &[f64], variance: f64) -> (Vec<f64>, Vec<f64>) {
    let mut w = Vec::with_capacity(query.len() * design.len());
    let mut dw = Vec::with_capacity(query.len() * design.len());
    for &q in query {
        let min = design
            .iter()
            .map(|g| (q - g) * (q - g))
            .fold(f64::INFINITY, f64::min);
        for &g in design {
            let r = q - g;
            let k = (-0.5 * (r * r - min) / variance).exp();
            w.push(k);
            dw.push(-k * r / variance);
        }
    }
    (w, dw)
}

/// Smoother values and per-point gradients over a query grid.
pub type GridValues = (Vec<f64>, Vec<Vec<f64>>);

/// Values and gradients of the table's smoother at every point of the query
/// grid, in the grid's row-major order. Returns `None` when the table is not
/// a grid with a diagonal bandwidth.
pub fn grid_values_and_gradients(
    table: &SsmTable,
    query_axes: &[AxisSpec],
) -> Result<Option<GridValues>> {
    let DesignSource::Grid { axes } = &table.design().source else {
        return Ok(None);
    };
    let dim = axes.len();
    if query_axes.len() != dim {
        return Err(crate::error::SsmError::DimensionMismatch {
            expected: dim,
            got: query_axes.len(),
        });
    }
    let b = table.nw_bandwidth().matrix();
    let diagonal = (0..dim).all(|i| (0..dim).all(|j| i == j || b[(i, j)] == 0.0));
    if !diagonal {
        return Ok(None);
    }
    let probs = table.probabilities();
    let p_ref = probs[0];
    let p = Tensor {
        shape: axes.iter().map(AxisSpec::count).collect(),
        data: probs.iter().map(|v| v - p_ref).collect(),
    };
    let mut w = Vec::with_capacity(dim);
    let mut dw = Vec::with_capacity(dim);
    let mut sums = Vec::with_capacity(dim);
    let mut dsums = Vec::with_capacity(dim);
    for (d, (ta, qa)) in axes.iter().zip(query_axes).enumerate() {
        let (wd, dwd) = axis_weights(&qa.values(), &ta.values(), b[(d, d)]);
        let n = ta.count();
        sums.push(
            wd.chunks_exact(n)
                .map(|r| r.iter().sum::<f64>())
                .collect::<Vec<_>>(),
        );
        dsums.push(
            dwd.chunks_exact(n)
                .map(|r| r.iter().sum::<f64>())
                .collect::<Vec<_>>(),
        );
        w.push(wd);
        dw.push(dwd);
    }
    let rows: Vec<usize> = query_axes.iter().map(AxisSpec::count).collect();
    let contract = |swap: Option<usize>| {
        let mut t = p.mode_product(0, if swap == Some(0) { &dw[0] } else { &w[0] }, rows[0]);
        for d in 1..dim {
            t = t.mode_product(d, if swap == Some(d) { &dw[d] } else { &w[d] }, rows[d]);
        }
        t.data
    };
    let num = contract(None);
    let dnum: Vec<Vec<f64>> = (0..dim).map(|d| contract(Some(d))).collect();

    let total: usize = rows.iter().product();
    let (p_min, p_max) = probs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let mut values = Vec::with_capacity(total);
    let mut grads = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for flat in 0..total {
        let mut rem = flat;
        for d in (0..dim).rev() {
            idx[d] = rem % rows[d];
            rem /= rows[d];
        }
        let den: f64 = (0..dim).map(|d| sums[d][idx[d]]).product();
        let ratio = num[flat] / den;
        values.push((ratio + p_ref).clamp(p_min, p_max));
        grads.push(
            (0..dim)
                .map(|d| {
                    // ∂den/∂x_d / den = dsum_d / sum_d.
                    let dlog = dsums[d][idx[d]] / sums[d][idx[d]];
                    dnum[d][flat] / den - ratio * dlog
                })
                .collect(),
        );
    }
    Ok(Some((values, grads)))
}
