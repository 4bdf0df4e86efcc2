//! Validation of derived tables: replication error against a reference
//! measure and sign checks on partial derivatives for expected risk trends.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsmError};
use crate::regression::{grid_values_and_gradients, DesignPointSet, DesignSource, SsmTable};

/// Percentile levels reported per variable; 0 and 100 are the extremes.
pub const PERCENTILES: [f64; 11] = [
    0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0, 99.0, 100.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendDirection {
    Increase,
    Decrease,
}

impl TrendDirection {
    /// Zero derivatives count as agreeing: flat plateaus are not violations.
    pub fn agrees(self, derivative: f64) -> bool {
        match self {
            TrendDirection::Increase => derivative >= 0.0,
            TrendDirection::Decrease => derivative <= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSpec {
    pub variable_index: usize,
    pub name: String,
    pub expected: TrendDirection,
}

/// Expected risk trends over `[Δv, v_E, t_react, g, a_max]`.
pub fn default_trends() -> Vec<TrendSpec> {
    use TrendDirection::*;
    [
        ("dv", Increase),
        ("v_ego", Increase),
        ("t_react", Increase),
        ("gap", Decrease),
        ("a_max", Decrease),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (name, expected))| TrendSpec {
        variable_index: i,
        name: name.into(),
        expected,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableTrend {
    pub name: String,
    pub expected: TrendDirection,
    /// Derivative percentiles at [`PERCENTILES`].
    pub percentiles: Vec<f64>,
    pub correct_sign_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub n_points: usize,
    pub variables: Vec<VariableTrend>,
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], level: f64) -> f64 {
    let pos = level / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn gradients(table: &SsmTable, grid: &DesignPointSet) -> Result<Vec<Vec<f64>>> {
    if let DesignSource::Grid { axes } = &grid.source {
        if let Some((_, g)) = grid_values_and_gradients(table, axes)? {
            return Ok(g);
        }
    }
    (0..grid.len())
        .into_par_iter()
        .map(|k| table.gradient(grid.point(k)))
        .collect()
}

/// Partial derivatives of the table's smoother at every grid point,
/// summarized per trend variable.
pub fn run_trend_benchmark(
    table: &SsmTable,
    grid: &DesignPointSet,
    trends: &[TrendSpec],
) -> Result<TrendReport> {
    if table.dim() != 5 || grid.dim != 5 {
        return Err(SsmError::DimensionMismatch {
            expected: 5,
            got: if table.dim() != 5 {
                table.dim()
            } else {
                grid.dim
            },
        });
    }
    grid.validate()?;
    if let Some(t) = trends.iter().find(|t| t.variable_index >= 5) {
        return Err(invalid(format!(
            "trend variable index {} out of range",
            t.variable_index
        )));
    }
    let grads = gradients(table, grid)?;
    let variables = trends
        .iter()
        .map(|t| {
            let mut d: Vec<f64> = grads.iter().map(|g| g[t.variable_index]).collect();
            let correct = d.iter().filter(|&&v| t.expected.agrees(v)).count();
            d.sort_by(f64::total_cmp);
            VariableTrend {
                name: t.name.clone(),
                expected: t.expected,
                percentiles: PERCENTILES.iter().map(|&l| percentile(&d, l)).collect(),
                correct_sign_fraction: correct as f64 / d.len() as f64,
            }
        })
        .collect();
    Ok(TrendReport {
        n_points: grid.len(),
        variables,
    })
}

fn percentile_label(level: f64) -> String {
    if level == 0.0 {
        "min".into()
    } else if level == 100.0 {
        "max".into()
    } else {
        format!("{level}")
    }
}

/// Rows are percentiles, columns are variables; two trailing rows give the
/// expected direction and the fraction of derivatives agreeing with it.
pub fn write_trend_csv<W: Write>(out: W, report: &TrendReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["percentile".to_string()];
    header.extend(report.variables.iter().map(|v| v.name.clone()));
    w.write_record(&header)?;
    for (i, &level) in PERCENTILES.iter().enumerate() {
        let mut row = vec![percentile_label(level)];
        row.extend(
            report
                .variables
                .iter()
                .map(|v| format!("{:.6}", v.percentiles[i])),
        );
        w.write_record(&row)?;
    }
    let mut row = vec!["expected".to_string()];
    row.extend(report.variables.iter().map(|v| {
        match v.expected {
            TrendDirection::Increase => "increase",
            TrendDirection::Decrease => "decrease",
        }
        .to_string()
    }));
    w.write_record(&row)?;
    let mut row = vec!["correct_sign_fraction".to_string()];
    row.extend(
        report
            .variables
            .iter()
            .map(|v| format!("{:.6}", v.correct_sign_fraction)),
    );
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub x: Vec<f64>,
    pub table: f64,
    pub reference: f64,
}

impl Residual {
    pub fn value(&self) -> f64 {
        self.table - self.reference
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub mean_abs: f64,
    pub max_abs: f64,
    pub residuals: Vec<Residual>,
}

/// Smoothed table against a reference probability at every evaluation point.
pub fn compare_to_reference<F>(
    table: &SsmTable,
    reference: F,
    eval: &DesignPointSet,
) -> Result<ReplicationReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if eval.dim != table.dim() {
        return Err(SsmError::DimensionMismatch {
            expected: table.dim(),
            got: eval.dim,
        });
    }
    let residuals = eval
        .iter()
        .map(|x| {
            Ok(Residual {
                x: x.to_vec(),
                table: table.evaluate(x)?,
                reference: reference(x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if residuals.is_empty() {
        return Err(SsmError::InsufficientData("no evaluation points".into()));
    }
    let abs: Vec<f64> = residuals.iter().map(|r| r.value().abs()).collect();
    Ok(ReplicationReport {
        mean_abs: abs.iter().sum::<f64>() / abs.len() as f64,
        max_abs: abs.iter().copied().fold(0.0, f64::max),
        residuals,
    })
}
