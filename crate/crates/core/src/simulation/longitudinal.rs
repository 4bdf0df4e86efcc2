use super::engine::{run_conflict, Command, EgoController, LeaderMotion};
use super::{
    idm_plus_accel, EgoResponseDraw, IdmPlusParams, ScenarioState, SimulationOutcome,
    SimulationSettings,
};
use crate::error::{invalid, Result};

/// Leader speed profile: `initial` at t = 0 followed by `future[k-1]` at
/// `t = k * dt`, linear in between and held after the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderProfile {
    pub initial: f64,
    pub future: Vec<f64>,
    pub dt: f64,
}

impl LeaderProfile {
    fn knot(&self, k: usize) -> f64 {
        if k == 0 {
            self.initial
        } else {
            self.future[(k - 1).min(self.future.len() - 1)]
        }
    }
}

impl LeaderMotion for LeaderProfile {
    fn speed_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.initial;
        }
        let pos = t / self.dt;
        let mut k = pos.floor();
        // Knot times hit by repeated stepping land within rounding of an integer.
        if pos - k > 1.0 - 1e-9 {
            k += 1.0;
        }
        let frac = (pos - k).max(0.0);
        let k = k as usize;
        if k >= self.future.len() {
            return self.knot(self.future.len());
        }
        let (a, b) = (self.knot(k), self.knot(k + 1));
        (a + (b - a) * frac).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Free,
    Coasting { until: f64 },
    Reacted,
}

/// IDM+ with a delayed first braking response and deceleration capped at the
/// driver's maximum available deceleration.
struct DelayedIdm {
    params: IdmPlusParams,
    draw: EgoResponseDraw,
    phase: Phase,
}

impl DelayedIdm {
    fn capped(&self, raw: f64) -> f64 {
        raw.max(-self.draw.madr)
    }
}

impl EgoController for DelayedIdm {
    fn command(&mut self, state: &ScenarioState, dt: f64) -> Result<Command> {
        let raw = idm_plus_accel(state, &self.params, dt)?;
        if let Phase::Coasting { until } = self.phase {
            if state.t >= until {
                self.phase = Phase::Reacted;
            }
        }
        match self.phase {
            Phase::Free if raw < 0.0 => {
                let until = state.t + self.draw.reaction_time;
                self.phase = Phase::Coasting { until };
                Ok(Command {
                    accel: 0.0,
                    switch: Some((until, self.capped(raw))),
                })
            }
            Phase::Free | Phase::Reacted => Ok(Command::constant(self.capped(raw))),
            Phase::Coasting { until } => Ok(Command {
                accel: 0.0,
                switch: Some((until, self.capped(raw))),
            }),
        }
    }
}

/// Simulates an IDM+ ego behind a leader that follows `future`.
///
/// `x` is `[v_lead, a_lead, v_ego, ln gap]`; `future` holds the leader speeds
/// at `dt, 2 dt, ...` with `dt = settings.dt`.
pub fn simulate_longitudinal(
    x: &[f64],
    future: &[f64],
    params: &IdmPlusParams,
    draw: EgoResponseDraw,
    settings: &SimulationSettings,
) -> Result<SimulationOutcome> {
    if x.len() != 4 {
        return Err(crate::error::SsmError::DimensionMismatch {
            expected: 4,
            got: x.len(),
        });
    }
    if future.is_empty() {
        return Err(invalid("leader speed profile is empty"));
    }
    let profile = LeaderProfile {
        initial: x[0].max(0.0),
        future: future.iter().map(|v| v.max(0.0)).collect(),
        dt: settings.dt,
    };
    let initial = ScenarioState {
        t: 0.0,
        v_ego: x[2].max(0.0),
        v_lead: profile.initial,
        gap: x[3].exp(),
    };
    let mut ego = DelayedIdm {
        params: *params,
        draw,
        phase: Phase::Free,
    };
    run_conflict(initial, &profile, &mut ego, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v_lead: f64, a_lead: f64, v_ego: f64, gap: f64) -> [f64; 4] {
        [v_lead, a_lead, v_ego, gap.ln()]
    }

    /// Leader at 20 m/s braking at 3 m/s² to 10 m/s from t = 3 s, sampled
    /// every 0.1 s for 10 s.
    fn braking_leader() -> Vec<f64> {
        (1..=100)
            .map(|k| {
                let t = 0.1 * k as f64;
                if t <= 3.0 {
                    20.0
                } else {
                    (20.0 - 3.0 * (t - 3.0)).max(10.0)
                }
            })
            .collect()
    }

    #[test]
    fn profile_interpolates_and_holds() {
        let p = LeaderProfile {
            initial: 10.0,
            future: vec![11.0, 13.0],
            dt: 0.1,
        };
        assert_eq!(p.speed_at(0.0), 10.0);
        assert!((p.speed_at(0.05) - 10.5).abs() < 1e-12);
        assert!((p.speed_at(0.15) - 12.0).abs() < 1e-9);
        assert_eq!(p.speed_at(0.2), 13.0);
        assert_eq!(p.speed_at(7.0), 13.0);
    }

    #[test]
    fn equilibrium_gap_ends_immediately() {
        // T chosen so that 40 m is the IDM+ equilibrium gap at 20 m/s.
        let params = IdmPlusParams {
            time_headway: (40.0 - 3.0) / 20.0,
            ..Default::default()
        };
        let out = simulate_longitudinal(
            &x(20.0, 0.0, 20.0, 40.0),
            &[20.0; 50],
            &params,
            EgoResponseDraw::new(0.9, 9.7).unwrap(),
            &SimulationSettings::default(),
        )
        .unwrap();
        assert!(!out.crashed);
        assert!((out.w - 40.0).abs() < 1e-6, "{}", out.w);
    }

    #[test]
    fn late_reaction_behind_braking_leader_crashes() {
        let out = simulate_longitudinal(
            &x(20.0, 0.0, 24.0, 31.5),
            &braking_leader(),
            &IdmPlusParams::default(),
            EgoResponseDraw::new(4.0, 4.2).unwrap(),
            &SimulationSettings::default(),
        )
        .unwrap();
        assert!(out.crashed, "{out:?}");
        assert!(out.w <= 0.0);
    }

    #[test]
    fn early_reaction_with_large_gap_is_safe() {
        let out = simulate_longitudinal(
            &x(20.0, 0.0, 24.0, 40.0),
            &braking_leader(),
            &IdmPlusParams::default(),
            EgoResponseDraw::new(2.0, 9.7).unwrap(),
            &SimulationSettings::default(),
        )
        .unwrap();
        assert!(!out.crashed, "{out:?}");
    }

    #[test]
    fn empty_profile_is_rejected() {
        let err = simulate_longitudinal(
            &x(20.0, 0.0, 20.0, 30.0),
            &[],
            &IdmPlusParams::default(),
            EgoResponseDraw::new(1.0, 9.7).unwrap(),
            &SimulationSettings::default(),
        );
        assert!(err.is_err());
    }
}
