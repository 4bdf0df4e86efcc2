//! End-to-end wiring: pairs from trajectories, the fitted future model, and
//! tables derived from any registered conflict model and estimator.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::density::{BandwidthMatrix, FutureModel};
use crate::error::{invalid, Result, SsmError};
use crate::models::ConflictModel;
use crate::probability::ProbabilityEstimator;
use crate::regression::{
    build_ssm_table, select_design_points_cover, select_design_points_grid, AxisSpec,
    DesignPointSet, SsmTable, TableMetadata,
};
use crate::rng::RunSeeds;
use crate::trajectory::{
    build_situation_pairs, extract_interactions, HysteresisThresholds, PairSpec, SituationPair,
    VehicleSeries,
};

pub const FUTURE_MODEL_FORMAT: &str = "ssm-future-model";
pub const FUTURE_MODEL_VERSION: u32 = 1;

/// Reduced dimension of the joint (state, future) representation.
pub const DEFAULT_REDUCED_DIM: usize = 4;

/// Cover weights over `[v_L, a_L, v_E, ln g]`: one unit of weighted distance
/// is 2 m/s of speed, 0.5 m/s² of acceleration, or a factor e² in gap.
pub const DEFAULT_COVER_WEIGHTS: [f64; 4] = [0.25, 4.0, 0.25, 0.25];

/// Closing speed 0..40 m/s in 2 m/s steps by time to collision 0.5..4 s in
/// 0.1 s steps: 756 points.
pub fn ws_grid() -> Result<DesignPointSet> {
    select_design_points_grid(&[
        AxisSpec::new(0.0, 40.0, 2.0)?,
        AxisSpec::new(0.5, 4.0, 0.1)?,
    ])
}

/// Axes over `[Δv, v_E, t_react, g, a_max]`, ten equally spaced values each.
pub fn trend_axes() -> Result<Vec<AxisSpec>> {
    Ok(vec![
        AxisSpec::with_count(0.0, 20.0, 10)?,
        AxisSpec::with_count(10.0, 30.0, 10)?,
        AxisSpec::with_count(0.5, 1.5, 10)?,
        AxisSpec::with_count(5.0, 30.0, 10)?,
        AxisSpec::with_count(4.0, 10.0, 10)?,
    ])
}

pub fn trend_grid() -> Result<DesignPointSet> {
    select_design_points_grid(&trend_axes()?)
}

/// Estimates every design point with `model` and `estimator`. Point `k` draws
/// from stream `k` of `seed`, so results do not depend on scheduling.
pub fn derive_table(
    model: &dyn ConflictModel,
    estimator: &dyn ProbabilityEstimator,
    design: DesignPointSet,
    seed: u64,
    nw_bandwidth: Option<BandwidthMatrix>,
) -> Result<SsmTable> {
    if design.dim != model.input_names().len() {
        return Err(SsmError::DimensionMismatch {
            expected: model.input_names().len(),
            got: design.dim,
        });
    }
    let mut metadata = TableMetadata::new(model.name(), model.input_names(), seed);
    metadata.estimator = Some(*estimator.config());
    build_ssm_table(
        design,
        |k, x| {
            let runner = model.prepare(x)?;
            estimator.estimate(runner.as_ref(), RunSeeds::new(seed, k as u64))
        },
        nw_bandwidth,
        metadata,
    )
}

/// Interaction episodes of all vehicles, cut into situation pairs.
pub fn collect_pairs(
    series: &[VehicleSeries],
    thresholds: &HysteresisThresholds,
    spec: &PairSpec,
) -> Result<Vec<SituationPair>> {
    let mut pairs = Vec::new();
    for episode in extract_interactions(series, thresholds) {
        pairs.extend(build_situation_pairs(&episode, spec)?);
    }
    Ok(pairs)
}

/// Fits the future model on the leader part of the pairs.
pub fn fit_future_model(pairs: &[SituationPair], d: usize, dt: f64) -> Result<FutureModel> {
    let Some(first) = pairs.first() else {
        return Err(SsmError::InsufficientData("no situation pairs".into()));
    };
    let n = first.y.len();
    if pairs.iter().any(|p| p.y.len() != n) {
        return Err(invalid("situation pairs have differing horizons"));
    }
    let state = DMatrix::from_fn(pairs.len(), 2, |i, j| pairs[i].x[j]);
    let future = DMatrix::from_fn(pairs.len(), n, |i, j| pairs[i].y[j]);
    FutureModel::fit(&state, &future, d, dt)
}

/// Greedy cover over the initial situations of the pairs.
pub fn cover_design(pairs: &[SituationPair], weights: &[f64]) -> Result<DesignPointSet> {
    let data: Vec<Vec<f64>> = pairs.iter().map(|p| p.x.to_vec()).collect();
    select_design_points_cover(&data, weights)
}

#[derive(Serialize, Deserialize)]
struct FutureModelFile {
    format: String,
    version: u32,
    tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    model: FutureModel,
}

/// Writes the model with the seed and config hash of the run that fitted it.
pub fn save_future_model(
    model: &FutureModel,
    seed: Option<u64>,
    config_hash: Option<&str>,
    path: &Path,
) -> Result<()> {
    let file = FutureModelFile {
        format: FUTURE_MODEL_FORMAT.into(),
        version: FUTURE_MODEL_VERSION,
        tool_version: crate::TOOL_VERSION.into(),
        seed,
        config_hash: config_hash.map(str::to_string),
        model: model.clone(),
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_future_model(path: &Path) -> Result<FutureModel> {
    let file: FutureModelFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.format != FUTURE_MODEL_FORMAT || file.version != FUTURE_MODEL_VERSION {
        return Err(SsmError::Format(format!(
            "expected {FUTURE_MODEL_FORMAT} v{FUTURE_MODEL_VERSION}, found {} v{}",
            file.format, file.version
        )));
    }
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::WsModel;
    use crate::probability::{CountingEstimator, EstimatorConfig};
    use crate::reference::WsParams;
    use crate::simulation::SimulationSettings;
    use crate::trajectory::{synthesize_fleet, SyntheticFleetConfig};

    #[test]
    fn grid_sizes() {
        assert_eq!(ws_grid().unwrap().len(), 756);
        assert_eq!(trend_grid().unwrap().len(), 100_000);
    }

    #[test]
    fn derived_tables_are_deterministic() {
        let model = WsModel::new(&WsParams::default(), SimulationSettings::default()).unwrap();
        let est = CountingEstimator(EstimatorConfig {
            delta: 0.2,
            ..Default::default()
        });
        let design = select_design_points_grid(&[
            AxisSpec::new(0.0, 20.0, 10.0).unwrap(),
            AxisSpec::new(1.0, 2.0, 0.5).unwrap(),
        ])
        .unwrap();
        let a = derive_table(&model, &est, design.clone(), 5, None).unwrap();
        let b = derive_table(&model, &est, design.clone(), 5, None).unwrap();
        assert_eq!(a.probabilities(), b.probabilities());
        assert_eq!(a.metadata.mode, "ws");
        // No closing speed, no crash.
        assert!(a.probabilities()[..3].iter().all(|&p| p == 0.0));
        let wrong = select_design_points_grid(&[AxisSpec::new(0.0, 1.0, 1.0).unwrap()]).unwrap();
        assert!(derive_table(&model, &est, wrong, 5, None).is_err());
    }

    #[test]
    fn fleet_to_future_model_round_trip() {
        let fleet = synthesize_fleet(&SyntheticFleetConfig {
            vehicle_count: 6,
            duration: 200.0,
            ..Default::default()
        })
        .unwrap();
        let pairs = collect_pairs(
            &fleet,
            &HysteresisThresholds::default(),
            &PairSpec::default(),
        )
        .unwrap();
        assert!(pairs.len() > 100, "{}", pairs.len());
        let model = fit_future_model(&pairs, DEFAULT_REDUCED_DIM, 0.1).unwrap();
        assert_eq!(model.horizon(), 50);
        let dir = std::env::temp_dir().join(format!("ssm-future-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save_future_model(&model, Some(3), Some("abc"), &path).unwrap();
        assert_eq!(load_future_model(&path).unwrap(), model);
        let design = cover_design(&pairs, &DEFAULT_COVER_WEIGHTS).unwrap();
        assert!(!design.is_empty() && design.len() <= pairs.len());
        fs::remove_dir_all(dir).ok();
    }
}
