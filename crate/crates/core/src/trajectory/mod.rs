//! Vehicle trajectories: loading, synthesis, interaction episodes and the
//! situation pairs the density model is fitted on.

mod episodes;
mod io;
mod synthetic;

pub use episodes::{
    build_situation_pairs, extract_interactions, EpisodeSample, HysteresisThresholds,
    InteractionEpisode, PairSpec, SituationPair,
};
pub use io::{
    load_trajectories, read_pairs_csv, write_episodes_csv, write_pairs_csv, write_trajectories_csv,
    ColumnMapping, LoadReport,
};
pub use synthetic::{synthesize_fleet, SpeedRegime, SyntheticFleetConfig};

use serde::{Deserialize, Serialize};

/// One row of a trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub vehicle_id: u64,
    pub lane_id: i64,
    /// Front bumper position along the direction of travel (m).
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub leader_id: Option<u64>,
    /// Bumper-to-bumper gap to the leader (m).
    pub gap: Option<f64>,
    /// Vehicle length (m).
    pub length: f64,
}

/// Time-ordered samples of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSeries {
    pub vehicle_id: u64,
    pub samples: Vec<TrajectorySample>,
}

/// Millisecond frame key, so samples of different vehicles at the same
/// instant can be matched despite float noise in the timestamps.
pub(crate) fn frame_key(t: f64) -> i64 {
    (t * 1000.0).round() as i64
}
