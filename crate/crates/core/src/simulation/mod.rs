//! Forward simulation of a single leader-follower conflict.

mod draws;
mod engine;
mod idm;
mod longitudinal;
mod ws;

pub use draws::{sample_madr, sample_reaction_time, EgoResponseDraw, EgoResponseModel};
pub use engine::{EgoController, LeaderMotion, TracePoint};
pub use idm::{idm_plus_accel, IdmPlusParams};
pub use longitudinal::{simulate_longitudinal, LeaderProfile};
pub use ws::simulate_ws;

use serde::{Deserialize, Serialize};

/// Instantaneous state of the two vehicles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioState {
    pub t: f64,
    pub v_ego: f64,
    pub v_lead: f64,
    pub gap: f64,
}

/// Terminal record of one run.
///
/// `w` is the impact speed difference `v_lead - v_ego` for a crash and the
/// minimum gap otherwise, so `crashed` holds exactly when `w <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub crashed: bool,
    pub w: f64,
    pub t_end: f64,
    pub trace: Option<Vec<TracePoint>>,
}

impl SimulationOutcome {
    pub(crate) fn no_crash(w: f64, t_end: f64) -> Self {
        debug_assert!(w > 0.0);
        Self {
            crashed: false,
            w,
            t_end,
            trace: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSettings {
    pub dt: f64,
    /// Runs still unresolved at this time end as non-crashes.
    pub t_cap: f64,
    pub record_trace: bool,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_cap: 60.0,
            record_trace: false,
        }
    }
}
