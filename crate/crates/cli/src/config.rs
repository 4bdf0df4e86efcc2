use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssm_core::pipeline::DEFAULT_REDUCED_DIM;
use ssm_core::probability::EstimatorConfig;
use ssm_core::reference::WsParams;
use ssm_core::regression::AxisSpec;
use ssm_core::simulation::{IdmPlusParams, SimulationSettings};
use ssm_core::trajectory::{ColumnMapping, HysteresisThresholds, PairSpec, SyntheticFleetConfig};

use crate::InputError;

/// Everything a run depends on besides its input files. Every section is
/// optional; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub root_seed: u64,
    /// Registered conflict model: `ws`, `longitudinal` or `trend`.
    pub model: String,
    /// Stopping rule and estimator; `kind` names the registered estimator.
    pub estimator: EstimatorConfig,
    pub simulation: SimulationSettings,
    pub idm: IdmPlusParams,
    pub ws: WsParams,
    pub design: DesignConfig,
    pub bandwidth: BandwidthConfig,
    pub data: DataConfig,
    /// Fleet used by `ingest` when no trajectory file is given. Its seed is
    /// replaced by the root seed.
    pub synthetic: SyntheticFleetConfig,
    pub replicate: ReplicateConfig,
    pub benchmark: BenchmarkConfig,
    pub futures: FuturesConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            root_seed: 1,
            model: "ws".into(),
            estimator: EstimatorConfig::default(),
            simulation: SimulationSettings::default(),
            idm: IdmPlusParams::default(),
            ws: WsParams::default(),
            design: DesignConfig::default(),
            bandwidth: BandwidthConfig::default(),
            data: DataConfig::default(),
            synthetic: SyntheticFleetConfig::default(),
            replicate: ReplicateConfig::default(),
            benchmark: BenchmarkConfig::default(),
            futures: FuturesConfig::default(),
        }
    }
}

/// Where the table's design points come from. `auto` picks the standard
/// grid for `ws` and `trend` and a greedy cover of the pairs otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DesignConfig {
    #[default]
    Auto,
    Grid {
        axes: Vec<AxisSpec>,
    },
    Cover {
        weights: Vec<f64>,
    },
}

/// Diagonal of the smoother bandwidth; the design's default when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandwidthConfig {
    pub nw_diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub columns: ColumnMapping,
    pub thresholds: HysteresisThresholds,
    pub pairs: PairSpec,
    /// Reduced dimension of the leader future model.
    pub reduced_dim: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            columns: ColumnMapping::default(),
            thresholds: HysteresisThresholds::default(),
            pairs: PairSpec::default(),
            reduced_dim: DEFAULT_REDUCED_DIM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplicateConfig {
    /// Stopping-rule tolerances to derive tables for.
    pub deltas: Vec<f64>,
    /// Closing speeds of the emitted probability curves.
    pub curve_dv: Vec<f64>,
    /// Time-to-collision axis of the curves.
    pub curve_ttc: AxisSpec,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            deltas: vec![0.2, 0.02],
            curve_dv: vec![10.0, 20.0, 30.0],
            curve_ttc: AxisSpec {
                min: 0.5,
                max: 4.0,
                step: 0.05,
            },
        }
    }
}

/// Query grid of the trend benchmark; the standard five axes when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub axes: Option<Vec<AxisSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuturesConfig {
    pub v_lead: f64,
    pub a_lead: f64,
    pub count: usize,
}

impl Default for FuturesConfig {
    fn default() -> Self {
        Self {
            v_lead: 15.0,
            a_lead: 0.0,
            count: 100,
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| InputError::new(format!("config: {e}")))
        } else {
            toml::from_str(&text).map_err(|e| InputError::new(format!("config: {e}")))
        };
        let config: Self = parsed.with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let check =
            |r: ssm_core::Result<()>| r.map_err(|e| InputError::new(format!("config: {e}")));
        check(self.estimator.validate())?;
        check(self.idm.validate())?;
        check(self.ws.validate())?;
        if !(self.simulation.dt > 0.0 && self.simulation.t_cap > self.simulation.dt) {
            return Err(InputError::new("config: simulation needs 0 < dt < t_cap").into());
        }
        if self.replicate.deltas.is_empty() {
            return Err(InputError::new("config: replicate.deltas is empty").into());
        }
        check(self.replicate.curve_ttc.validate())?;
        if self.futures.count == 0 {
            return Err(InputError::new("config: futures.count must be positive").into());
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration, seed included.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
