use super::engine::{run_conflict, Command, EgoController, LeaderMotion};
use super::{EgoResponseDraw, ScenarioState, SimulationOutcome, SimulationSettings};
use crate::error::Result;

/// Leader at constant speed; simulated in the leader's frame, so the leader
/// stands still and the ego approaches at the closing speed. Braking stops
/// at the leader's speed, which ends the conflict.
struct Stationary;

impl LeaderMotion for Stationary {
    fn speed_at(&self, _t: f64) -> f64 {
        0.0
    }
}

/// Coasts until the reaction time, then brakes at the maximum deceleration.
struct DelayedBraking {
    draw: EgoResponseDraw,
}

impl EgoController for DelayedBraking {
    fn command(&mut self, state: &ScenarioState, _dt: f64) -> Result<Command> {
        if state.t >= self.draw.reaction_time {
            Ok(Command::constant(-self.draw.madr))
        } else {
            Ok(Command {
                accel: 0.0,
                switch: Some((self.draw.reaction_time, -self.draw.madr)),
            })
        }
    }
}

/// Runs the constant-speed-leader conflict from an explicit gap.
pub fn simulate_ws_from_gap(
    gap: f64,
    closing_speed: f64,
    draw: EgoResponseDraw,
    settings: &SimulationSettings,
) -> Result<SimulationOutcome> {
    if closing_speed <= 0.0 {
        return Ok(SimulationOutcome::no_crash(gap, 0.0));
    }
    let initial = ScenarioState {
        t: 0.0,
        v_ego: closing_speed,
        v_lead: 0.0,
        gap,
    };
    run_conflict(initial, &Stationary, &mut DelayedBraking { draw }, settings)
}

/// Runs the constant-speed-leader conflict for closing speed `dv` and time to
/// collision `ttc`.
///
/// Without closing speed the gap never shrinks and its size cannot be
/// recovered from `(dv, ttc)`, so the outcome is a non-crash with an
/// unbounded minimum gap.
pub fn simulate_ws(
    dv: f64,
    ttc: f64,
    draw: EgoResponseDraw,
    settings: &SimulationSettings,
) -> Result<SimulationOutcome> {
    if dv <= 0.0 {
        return Ok(SimulationOutcome::no_crash(f64::INFINITY, 0.0));
    }
    simulate_ws_from_gap(dv * ttc, dv, draw, settings)
}
