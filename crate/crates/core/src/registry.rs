//! Name-based lookup of the interchangeable strategies.

use std::sync::Arc;

use crate::density::FutureModel;
use crate::error::{invalid, Result, SsmError};
use crate::models::{ConflictModel, LongitudinalModel, TrendModel, WsModel};
use crate::probability::{
    CountingEstimator, EstimatorConfig, EstimatorKind, ProbabilityEstimator, SmoothedEstimator,
};
use crate::reference::WsParams;
use crate::simulation::{IdmPlusParams, SimulationSettings};

/// Everything a conflict model constructor may need. Models that sample
/// leader futures require `future`.
#[derive(Debug, Clone, Default)]
pub struct ModelContext {
    pub ws: WsParams,
    pub idm: IdmPlusParams,
    pub settings: SimulationSettings,
    pub future: Option<Arc<FutureModel>>,
}

impl ModelContext {
    fn future(&self, model: &str) -> Result<Arc<FutureModel>> {
        self.future.clone().ok_or_else(|| {
            invalid(format!(
                "conflict model {model:?} needs a fitted future model"
            ))
        })
    }
}

type ModelCtor = fn(&ModelContext) -> Result<Box<dyn ConflictModel>>;
type EstimatorCtor = fn(EstimatorConfig) -> Box<dyn ProbabilityEstimator>;

struct ModelEntry {
    name: &'static str,
    needs_future: bool,
    ctor: ModelCtor,
}

const CONFLICT_MODELS: &[ModelEntry] = &[
    ModelEntry {
        name: "ws",
        needs_future: false,
        ctor: |c| Ok(Box::new(WsModel::new(&c.ws, c.settings)?)),
    },
    ModelEntry {
        name: "longitudinal",
        needs_future: true,
        ctor: |c| {
            Ok(Box::new(LongitudinalModel::new(
                c.future("longitudinal")?,
                c.idm,
                &c.ws,
                c.settings,
            )?))
        },
    },
    ModelEntry {
        name: "trend",
        needs_future: true,
        ctor: |c| {
            Ok(Box::new(TrendModel::new(
                c.future("trend")?,
                c.idm,
                c.settings,
            )?))
        },
    },
];

const ESTIMATORS: &[(&str, EstimatorCtor)] = &[
    ("counting", |c| Box::new(CountingEstimator(c))),
    ("smoothed", |c| Box::new(SmoothedEstimator(c))),
];

fn model_entry(name: &str) -> Result<&'static ModelEntry> {
    CONFLICT_MODELS
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| SsmError::UnknownStrategy {
            kind: "conflict model",
            name: name.to_string(),
        })
}

pub fn conflict_model_names() -> Vec<&'static str> {
    CONFLICT_MODELS.iter().map(|e| e.name).collect()
}

pub fn estimator_names() -> Vec<&'static str> {
    ESTIMATORS.iter().map(|(n, _)| *n).collect()
}

/// Whether the named model samples leader futures and so needs
/// `ModelContext::future`.
pub fn conflict_model_needs_future(name: &str) -> Result<bool> {
    Ok(model_entry(name)?.needs_future)
}

pub fn conflict_model(name: &str, ctx: &ModelContext) -> Result<Box<dyn ConflictModel>> {
    (model_entry(name)?.ctor)(ctx)
}

/// Estimator registered under `name`; the config's own kind is overridden.
pub fn estimator(name: &str, config: EstimatorConfig) -> Result<Box<dyn ProbabilityEstimator>> {
    let (_, ctor) =
        ESTIMATORS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SsmError::UnknownStrategy {
                kind: "estimator",
                name: name.to_string(),
            })?;
    config.validate()?;
    let kind = match name {
        "counting" => EstimatorKind::Counting,
        _ => EstimatorKind::Smoothed,
    };
    Ok(ctor(EstimatorConfig { kind, ..config }))
}

/// Estimator selected by the config's own kind.
pub fn estimator_for(config: EstimatorConfig) -> Result<Box<dyn ProbabilityEstimator>> {
    estimator(config.kind.name(), config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups_by_name() {
        let ctx = ModelContext::default();
        assert_eq!(conflict_model("ws", &ctx).unwrap().name(), "ws");
        assert!(matches!(
            conflict_model("lateral", &ctx),
            Err(SsmError::UnknownStrategy {
                kind: "conflict model",
                ..
            })
        ));
        assert!(conflict_model("trend", &ctx).is_err());
        for name in estimator_names() {
            let e = estimator(name, EstimatorConfig::default()).unwrap();
            assert_eq!(e.name(), name);
            assert_eq!(e.config().kind.name(), name);
        }
        assert!(estimator("bootstrap", EstimatorConfig::default()).is_err());
        assert_eq!(conflict_model_names(), ["ws", "longitudinal", "trend"]);
        assert!(!conflict_model_needs_future("ws").unwrap());
        assert!(conflict_model_needs_future("trend").unwrap());
        assert!(conflict_model_needs_future("lateral").is_err());
    }
}
