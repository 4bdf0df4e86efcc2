use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::DesignPointSet;
use super::nw::NwSmoother;
use crate::density::BandwidthMatrix;
use crate::error::{Result, SsmError};
use crate::probability::{EstimatorConfig, ProbabilityEstimate};

pub const TABLE_FORMAT: &str = "ssm-table";
pub const TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub tool_version: String,
    /// Conflict model the probabilities came from.
    pub mode: String,
    pub input_names: Vec<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
}

impl TableMetadata {
    pub fn new(mode: &str, input_names: &[&str], seed: u64) -> Self {
        Self {
            tool_version: crate::TOOL_VERSION.to_string(),
            mode: mode.to_string(),
            input_names: input_names.iter().map(|s| s.to_string()).collect(),
            seed,
            config_hash: None,
            estimator: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    format: String,
    version: u32,
    metadata: TableMetadata,
    design: DesignPointSet,
    nw_bandwidth: BandwidthMatrix,
    probabilities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    n_sim: Vec<usize>,
}

/// Probabilities tabulated at design points plus the smoother that turns
/// them into a function of the initial situation. This is the deployable
/// artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TableFile", into = "TableFile")]
pub struct SsmTable {
    pub metadata: TableMetadata,
    design: DesignPointSet,
    nw_bandwidth: BandwidthMatrix,
    probabilities: Vec<f64>,
    n_sim: Vec<usize>,
    smoother: NwSmoother,
}

impl PartialEq for SsmTable {
    fn eq(&self, other: &Self) -> bool {
        self.metadata == other.metadata
            && self.design == other.design
            && self.nw_bandwidth == other.nw_bandwidth
            && self.probabilities == other.probabilities
            && self.n_sim == other.n_sim
    }
}

impl TryFrom<TableFile> for SsmTable {
    type Error = SsmError;

    fn try_from(f: TableFile) -> Result<Self> {
        if f.format != TABLE_FORMAT {
            return Err(SsmError::Format(format!(
                "not an ssm table: format {:?}",
                f.format
            )));
        }
        if f.version != TABLE_VERSION {
            return Err(SsmError::Format(format!(
                "unsupported table version {}",
                f.version
            )));
        }
        let mut t = SsmTable::new(f.design, f.probabilities, f.nw_bandwidth, f.metadata)?;
        if !f.n_sim.is_empty() && f.n_sim.len() != t.len() {
            return Err(SsmError::Format(
                "n_sim length does not match design points".into(),
            ));
        }
        t.n_sim = f.n_sim;
        Ok(t)
    }
}

impl From<SsmTable> for TableFile {
    fn from(t: SsmTable) -> Self {
        TableFile {
            format: TABLE_FORMAT.to_string(),
            version: TABLE_VERSION,
            metadata: t.metadata,
            design: t.design,
            nw_bandwidth: t.nw_bandwidth,
            probabilities: t.probabilities,
            n_sim: t.n_sim,
        }
    }
}

impl SsmTable {
    pub fn new(
        design: DesignPointSet,
        probabilities: Vec<f64>,
        nw_bandwidth: BandwidthMatrix,
        metadata: TableMetadata,
    ) -> Result<Self> {
        design.validate()?;
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SsmError::Format(
                "table probabilities must lie in [0, 1]".into(),
            ));
        }
        let smoother = NwSmoother::new(&design, &probabilities, &nw_bandwidth)?;
        Ok(Self {
            metadata,
            design,
            nw_bandwidth,
            probabilities,
            n_sim: Vec::new(),
            smoother,
        })
    }

    pub fn with_bandwidth(&self, nw_bandwidth: BandwidthMatrix) -> Result<Self> {
        let mut t = Self::new(
            self.design.clone(),
            self.probabilities.clone(),
            nw_bandwidth,
            self.metadata.clone(),
        )?;
        t.n_sim = self.n_sim.clone();
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.design.dim
    }

    pub fn design(&self) -> &DesignPointSet {
        &self.design
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn n_sim(&self) -> &[usize] {
        &self.n_sim
    }

    pub fn nw_bandwidth(&self) -> &BandwidthMatrix {
        &self.nw_bandwidth
    }

    pub fn smoother(&self) -> &NwSmoother {
        &self.smoother
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.smoother.evaluate(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.smoother.gradient(x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub fn nw_evaluate(table: &SsmTable, x: &[f64]) -> Result<f64> {
    table.evaluate(x)
}

pub fn nw_gradient(table: &SsmTable, x: &[f64]) -> Result<Vec<f64>> {
    table.gradient(x)
}

/// Estimates every design point (in parallel; rows are independent) and
/// assembles the table. `estimate` receives the point index, which callers
/// use as the random stream id. Without an explicit bandwidth the design's
/// default `Q⁻¹` is used.
pub fn build_ssm_table<F>(
    design: DesignPointSet,
    estimate: F,
    nw_bandwidth: Option<BandwidthMatrix>,
    metadata: TableMetadata,
) -> Result<SsmTable>
where
    F: Fn(usize, &[f64]) -> Result<ProbabilityEstimate> + Sync,
{
    design.validate()?;
    let estimates: Vec<ProbabilityEstimate> = (0..design.len())
        .into_par_iter()
        .map(|k| {
            let e = estimate(k, design.point(k)).map_err(|source| SsmError::DesignPoint {
                index: k,
                source: Box::new(source),
            })?;
            log::debug!("design point {k}: p = {:.4}, n_sim = {}", e.p_hat, e.n_sim);
            Ok(e)
        })
        .collect::<Result<_>>()?;
    let capped = estimates.iter().filter(|e| e.cap_reached).count();
    if capped > 0 {
        log::warn!("{capped} design points reached the run cap before the stopping rule held");
    }
    let bandwidth = match nw_bandwidth {
        Some(b) => b,
        None => BandwidthMatrix::diagonal(&design.default_bandwidth_diag())?,
    };
    let probabilities = estimates.iter().map(|e| e.p_hat).collect();
    let mut table = SsmTable::new(design, probabilities, bandwidth, metadata)?;
    table.n_sim = estimates.iter().map(|e| e.n_sim).collect();
    Ok(table)
}
