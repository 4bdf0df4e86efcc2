use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsmError};

/// One grid axis: `min, min + step, ...` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        let a = Self { min, max, step };
        a.validate()?;
        Ok(a)
    }

    /// `count` equally spaced values from `min` to `max` inclusive.
    pub fn with_count(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(invalid("an axis with a count needs at least 2 values"));
        }
        Self::new(min, max, (max - min) / (count - 1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(invalid("axis needs finite min <= max"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("axis step must be positive"));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    pub fn value(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count()).map(|k| self.value(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSource {
    Grid { axes: Vec<AxisSpec> },
    GreedyCover,
}

/// Design points stored row-major with the diagonal of the coverage weight
/// matrix `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPointSet {
    pub dim: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub source: DesignSource,
}

impl DesignPointSet {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.points.len().is_multiple_of(self.dim) || self.points.is_empty() {
            return Err(SsmError::Format(
                "design points do not match dimension".into(),
            ));
        }
        if self.weights.len() != self.dim || self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(SsmError::Format(
                "design weights must be dim positive values".into(),
            ));
        }
        Ok(())
    }

    /// Nadaraya-Watson bandwidth diagonal used when none is given: `Q⁻¹`.
    /// For grids `Q = diag(1 / step²)`, so this is the squared grid step.
    pub fn default_bandwidth_diag(&self) -> Vec<f64> {
        self.weights.iter().map(|w| 1.0 / w).collect()
    }
}

/// Cartesian grid in row-major order (last axis varies fastest), with
/// `Q = diag(1 / step²)`.
pub fn select_design_points_grid(axes: &[AxisSpec]) -> Result<DesignPointSet> {
    if axes.is_empty() {
        return Err(invalid("grid needs at least one axis"));
    }
    for a in axes {
        a.validate()?;
    }
    let dim = axes.len();
    let counts: Vec<usize> = axes.iter().map(AxisSpec::count).collect();
    let total: usize = counts.iter().product();
    let mut points = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        points.extend(idx.iter().zip(axes).map(|(&k, a)| a.value(k)));
        for j in (0..dim).rev() {
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(DesignPointSet {
        dim,
        points,
        weights: axes.iter().map(|a| 1.0 / (a.step * a.step)).collect(),
        source: DesignSource::Grid {
            axes: axes.to_vec(),
        },
    })
}

/// Cells of side 1 in `Q^{1/2}`-scaled coordinates. Two points within
/// weighted distance 1 always sit in the same or adjacent cells.
struct CellIndex {
    scale: Vec<f64>,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    members: Vec<Vec<f64>>,
}

impl CellIndex {
    fn new(weights: &[f64]) -> Self {
        Self {
            scale: weights.iter().map(|w| w.sqrt()).collect(),
            cells: HashMap::new(),
            members: Vec::new(),
        }
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    fn insert(&mut self, x: &[f64]) {
        let z = self.scaled(x);
        let key = z.iter().map(|v| v.floor() as i64).collect();
        self.cells.entry(key).or_default().push(self.members.len());
        self.members.push(z);
    }

    fn covers(&self, x: &[f64]) -> bool {
        let z = self.scaled(x);
        let base: Vec<i64> = z.iter().map(|v| v.floor() as i64).collect();
        let dim = base.len();
        let mut offset = vec![-1i64; dim];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(ids) = self.cells.get(&key) {
                for &id in ids {
                    let d2: f64 = self.members[id]
                        .iter()
                        .zip(&z)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d2 <= 1.0 {
                        return true;
                    }
                }
            }
            let mut j = 0;
            loop {
                if j == dim {
                    return false;
                }
                offset[j] += 1;
                if offset[j] <= 1 {
                    break;
                }
                offset[j] = -1;
                j += 1;
            }
        }
    }
}

fn check_weights(data: &[Vec<f64>], weights: &[f64]) -> Result<usize> {
    let dim = weights.len();
    if dim == 0 || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(invalid("cover weights must be positive and finite"));
    }
    if let Some(bad) = data.iter().find(|r| r.len() != dim) {
        return Err(SsmError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("cover data must be finite"));
    }
    Ok(dim)
}

/// Greedy single-pass cover in data order: a data point becomes a design
/// point unless one already lies within `(x - x')ᵀ Q (x - x') ≤ 1`. The result
/// is re-checked against every data point before it is returned.
pub fn select_design_points_cover(data: &[Vec<f64>], weights: &[f64]) -> Result<DesignPointSet> {
    let dim = check_weights(data, weights)?;
    if data.is_empty() {
        return Err(SsmError::InsufficientData(
            "cover needs at least one data point".into(),
        ));
    }
    let mut index = CellIndex::new(weights);
    let mut points = Vec::new();
    for x in data {
        if !index.covers(x) {
            index.insert(x);
            points.extend_from_slice(x);
        }
    }
    let set = DesignPointSet {
        dim,
        points,
        weights: weights.to_vec(),
        source: DesignSource::GreedyCover,
    };
    if !verify_cover(&set, data)? {
        return Err(invalid("greedy cover failed verification"));
    }
    Ok(set)
}

/// Whether every data point lies within weighted distance 1 of a design
/// point.
pub fn verify_cover(set: &DesignPointSet, data: &[Vec<f64>]) -> Result<bool> {
    check_weights(data, &set.weights)?;
    let mut index = CellIndex::new(&set.weights);
    for p in set.iter() {
        index.insert(p);
    }
    Ok(data.iter().all(|x| index.covers(x)))
}
