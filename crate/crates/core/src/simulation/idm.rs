use serde::{Deserialize, Serialize};

use super::ScenarioState;
use crate::error::{invalid, Result};

/// IDM+ parameters. Defaults are the usual motorway calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmPlusParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Desired time headway (s).
    pub time_headway: f64,
    /// Standstill gap (m).
    pub s0: f64,
    /// Maximum comfortable acceleration (m/s²).
    pub a: f64,
    /// Comfortable deceleration (m/s²).
    pub b: f64,
    pub delta_exp: f64,
}

impl Default for IdmPlusParams {
    fn default() -> Self {
        Self {
            v0: 33.3,
            time_headway: 1.2,
            s0: 3.0,
            a: 1.25,
            b: 2.09,
            delta_exp: 4.0,
        }
    }
}

impl IdmPlusParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.v0,
            self.time_headway,
            self.s0,
            self.a,
            self.b,
            self.delta_exp,
        ];
        if all.iter().all(|&p| p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(invalid("IDM+ parameters must be positive and finite"))
        }
    }

    /// Gap at which the interaction term vanishes for equal speeds.
    pub fn desired_gap(&self, v_ego: f64, v_lead: f64) -> f64 {
        self.s0
            + v_ego * self.time_headway
            + v_ego * (v_ego - v_lead) / (2.0 * (self.a * self.b).sqrt())
    }
}

/// IDM+ acceleration: `a * min(1 - (v/v0)^δ, 1 - (s*/gap)²)`, floored so the
/// ego speed cannot turn negative within a step of length `dt`.
pub fn idm_plus_accel(state: &ScenarioState, params: &IdmPlusParams, dt: f64) -> Result<f64> {
    if !(state.gap > 0.0) {
        return Err(invalid(format!(
            "IDM+ needs a positive gap, got {}",
            state.gap
        )));
    }
    let free = 1.0 - (state.v_ego / params.v0).powf(params.delta_exp);
    let s_star = params.desired_gap(state.v_ego, state.v_lead);
    let interaction = 1.0 - (s_star / state.gap).powi(2);
    let acc = params.a * free.min(interaction);
    if dt > 0.0 {
        Ok(acc.max(-state.v_ego / dt))
    } else {
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(v_ego: f64, v_lead: f64, gap: f64) -> ScenarioState {
        ScenarioState {
            t: 0.0,
            v_ego,
            v_lead,
            gap,
        }
    }

    #[test]
    fn free_flow_equilibrium() {
        let p = IdmPlusParams::default();
        let a = idm_plus_accel(&state(p.v0, p.v0, 1e12), &p, 0.0).unwrap();
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn standstill_equilibrium() {
        let p = IdmPlusParams::default();
        let a = idm_plus_accel(&state(0.0, 0.0, p.s0), &p, 0.1).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn closing_case_matches_hand_evaluation() {
        let p = IdmPlusParams::default();
        // s* = 3 + 20*1.2 + 20*10 / (2*sqrt(1.25*2.09))
        let s_star = 3.0 + 24.0 + 200.0 / (2.0 * (1.25f64 * 2.09).sqrt());
        let interaction = 1.0 - (s_star / 20.0).powi(2);
        let free = 1.0 - (20.0f64 / 33.3).powi(4);
        let expected = 1.25 * interaction.min(free);
        let got = idm_plus_accel(&state(20.0, 10.0, 20.0), &p, 0.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - (-23.431)).abs() < 1e-2, "{got}");
    }

    #[test]
    fn floor_keeps_speed_nonnegative() {
        let p = IdmPlusParams::default();
        let a = idm_plus_accel(&state(1.0, 0.0, 3.5), &p, 0.1).unwrap();
        assert!(1.0 + a * 0.1 >= -1e-12);
    }

    #[test]
    fn rejects_nonpositive_gap() {
        let p = IdmPlusParams::default();
        assert!(idm_plus_accel(&state(10.0, 10.0, 0.0), &p, 0.1).is_err());
    }
}
