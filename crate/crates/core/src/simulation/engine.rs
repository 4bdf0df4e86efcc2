//! Time stepping shared by the constant-speed-leader and IDM+ runners.
//!
//! Accelerations are piecewise constant, so positions are advanced with the
//! exact constant-acceleration update (stopping at zero speed) and the gap is
//! a piecewise quadratic in time. Contacts and gap minima inside a step are
//! therefore located exactly rather than at step boundaries.

use serde::{Deserialize, Serialize};

use super::{ScenarioState, SimulationOutcome, SimulationSettings};
use crate::error::{invalid, Result};

pub trait LeaderMotion {
    /// Leader speed (m/s, non-negative) at time `t`; linear between the
    /// times the simulation queries.
    fn speed_at(&self, t: f64) -> f64;
}

/// Acceleration command held over one step, optionally switching to a second
/// value at an absolute time inside the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub accel: f64,
    pub switch: Option<(f64, f64)>,
}

impl Command {
    pub fn constant(accel: f64) -> Self {
        Self {
            accel,
            switch: None,
        }
    }
}

pub trait EgoController {
    fn command(&mut self, state: &ScenarioState, dt: f64) -> Result<Command>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub v_ego: f64,
    pub v_lead: f64,
    pub gap: f64,
    pub a_ego: f64,
}

/// One quadratic piece of the gap: `gap(s) = g0 + r*s + q*s²/2` on `[0, len]`.
struct Piece {
    g0: f64,
    r: f64,
    q: f64,
    len: f64,
}

impl Piece {
    fn at(&self, s: f64) -> f64 {
        self.g0 + self.r * s + 0.5 * self.q * s * s
    }

    fn min(&self) -> f64 {
        let mut m = self.g0.min(self.at(self.len));
        if self.q > 0.0 {
            let s = -self.r / self.q;
            if s > 0.0 && s < self.len {
                m = m.min(self.at(s));
            }
        }
        m
    }

    /// First `s` in `[0, len]` with `gap(s) <= 0`, if any.
    fn first_contact(&self) -> Option<f64> {
        if self.g0 <= 0.0 {
            return Some(0.0);
        }
        if self.min() > 0.0 {
            return None;
        }
        let (a, b, c) = (0.5 * self.q, self.r, self.g0);
        let s = if a.abs() < 1e-14 {
            -c / b
        } else {
            let disc = (b * b - 4.0 * a * c).max(0.0);
            // Stable quadratic roots; the earliest non-negative one is the contact.
            let qq = -0.5 * (b + b.signum() * disc.sqrt());
            let mut roots = [qq / a, if qq != 0.0 { c / qq } else { f64::INFINITY }];
            roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
            roots.into_iter().find(|&x| x >= 0.0).unwrap_or(self.len)
        };
        Some(s.clamp(0.0, self.len))
    }
}

enum SegmentEnd {
    Contact { v_lead: f64, v_ego: f64, t: f64 },
    Clear { min_gap: f64 },
}

fn speed_after(v0: f64, a: f64, s: f64) -> f64 {
    (v0 + a * s).max(0.0)
}

/// Advances `state` by `h` with ego acceleration `a_ego`.
fn advance(state: &mut ScenarioState, leader: &dyn LeaderMotion, a_ego: f64, h: f64) -> SegmentEnd {
    let vl0 = state.v_lead;
    let vl1 = leader.speed_at(state.t + h).max(0.0);
    let a_lead = (vl1 - vl0) / h;
    let ve0 = state.v_ego;

    let stop = if a_ego < 0.0 && ve0 + a_ego * h < 0.0 {
        Some(ve0 / -a_ego)
    } else {
        None
    };

    let mut pieces = Vec::with_capacity(2);
    match stop {
        Some(ts) => {
            let first = Piece {
                g0: state.gap,
                r: vl0 - ve0,
                q: a_lead - a_ego,
                len: ts,
            };
            let g_mid = first.at(ts);
            pieces.push((0.0, first));
            pieces.push((
                ts,
                Piece {
                    g0: g_mid,
                    r: vl0 + a_lead * ts,
                    q: a_lead,
                    len: h - ts,
                },
            ));
        }
        None => pieces.push((
            0.0,
            Piece {
                g0: state.gap,
                r: vl0 - ve0,
                q: a_lead - a_ego,
                len: h,
            },
        )),
    }

    let mut min_gap = f64::INFINITY;
    for (offset, piece) in &pieces {
        if let Some(s) = piece.first_contact() {
            let tau = offset + s;
            let v_lead = vl0 + a_lead * tau;
            let v_ego = if stop.is_some_and(|ts| tau >= ts) {
                0.0
            } else {
                speed_after(ve0, a_ego, tau)
            };
            return SegmentEnd::Contact {
                v_lead,
                v_ego,
                t: state.t + tau,
            };
        }
        min_gap = min_gap.min(piece.min());
    }

    let last = &pieces[pieces.len() - 1];
    state.gap = last.1.at(last.1.len);
    state.v_lead = vl1;
    state.v_ego = speed_after(ve0, a_ego, h);
    state.t += h;
    SegmentEnd::Clear { min_gap }
}

/// Runs a conflict until contact, until the gap stops decreasing over a step,
/// or until the time cap.
pub fn run_conflict(
    initial: ScenarioState,
    leader: &dyn LeaderMotion,
    ego: &mut dyn EgoController,
    settings: &SimulationSettings,
) -> Result<SimulationOutcome> {
    if !(settings.dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    if !(initial.gap > 0.0) {
        return Err(invalid("initial gap must be positive"));
    }
    if initial.v_ego < 0.0 || initial.v_lead < 0.0 {
        return Err(invalid("speeds must be non-negative"));
    }
    let dt = settings.dt;
    let mut state = initial;
    let mut min_gap = state.gap;
    let mut trace = settings.record_trace.then(Vec::new);
    let steps_cap = (settings.t_cap / dt).ceil() as usize;

    for _ in 0..steps_cap {
        let cmd = ego.command(&state, dt)?;
        let step_end = state.t + dt;
        let gap_start = state.gap;

        let mut segments = [(cmd.accel, dt), (0.0, 0.0)];
        if let Some((ts, a2)) = cmd.switch {
            if ts > state.t && ts < step_end {
                segments = [(cmd.accel, ts - state.t), (a2, step_end - ts)];
            } else if ts <= state.t {
                segments[0].0 = a2;
            }
        }

        for &(accel, h) in segments.iter().filter(|s| s.1 > 0.0) {
            match advance(&mut state, leader, accel, h) {
                SegmentEnd::Contact { v_lead, v_ego, t } => {
                    if let Some(tr) = trace.as_mut() {
                        tr.push(TracePoint {
                            t,
                            v_ego,
                            v_lead,
                            gap: 0.0,
                            a_ego: accel,
                        });
                    }
                    return Ok(SimulationOutcome {
                        crashed: true,
                        w: (v_lead - v_ego).min(0.0),
                        t_end: t,
                        trace,
                    });
                }
                SegmentEnd::Clear { min_gap: m } => min_gap = min_gap.min(m),
            }
            if let Some(tr) = trace.as_mut() {
                tr.push(TracePoint {
                    t: state.t,
                    v_ego: state.v_ego,
                    v_lead: state.v_lead,
                    gap: state.gap,
                    a_ego: accel,
                });
            }
        }
        // Avoid drift in the clock from repeated addition.
        state.t = step_end;

        if state.gap >= gap_start {
            let mut out = SimulationOutcome::no_crash(min_gap, state.t);
            out.trace = trace;
            return Ok(out);
        }
    }
    let mut out = SimulationOutcome::no_crash(state.gap, state.t);
    out.trace = trace;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(f64);
    impl LeaderMotion for Constant {
        fn speed_at(&self, _t: f64) -> f64 {
            self.0
        }
    }

    struct Fixed(f64);
    impl EgoController for Fixed {
        fn command(&mut self, _s: &ScenarioState, _dt: f64) -> Result<Command> {
            Ok(Command::constant(self.0))
        }
    }

    fn start(v_ego: f64, v_lead: f64, gap: f64) -> ScenarioState {
        ScenarioState {
            t: 0.0,
            v_ego,
            v_lead,
            gap,
        }
    }

    #[test]
    fn constant_closing_crashes_at_exact_time() {
        let out = run_conflict(
            start(20.0, 10.0, 5.05),
            &Constant(10.0),
            &mut Fixed(0.0),
            &SimulationSettings::default(),
        )
        .unwrap();
        assert!(out.crashed);
        assert_eq!(out.w, -10.0);
        assert!((out.t_end - 0.505).abs() < 1e-12);
    }

    #[test]
    fn braking_finds_minimum_gap_inside_step() {
        // Closing at 10 m/s, braking at 10 m/s²: relative speed hits zero at
        // 1.0 s after closing 5 m.
        let out = run_conflict(
            start(10.0, 0.0, 8.0),
            &Constant(0.0),
            &mut Fixed(-10.0),
            &SimulationSettings {
                dt: 0.3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!out.crashed);
        assert!((out.w - 3.0).abs() < 1e-12, "{}", out.w);
    }

    #[test]
    fn opening_gap_returns_initial_gap() {
        let out = run_conflict(
            start(10.0, 15.0, 12.0),
            &Constant(15.0),
            &mut Fixed(0.0),
            &SimulationSettings::default(),
        )
        .unwrap();
        assert!(!out.crashed);
        assert_eq!(out.w, 12.0);
        assert!((out.t_end - 0.1).abs() < 1e-12);
    }

    #[test]
    fn time_cap_returns_current_gap() {
        // Closing at a vanishing rate never finishes within the cap.
        let out = run_conflict(
            start(10.001, 10.0, 50.0),
            &Constant(10.0),
            &mut Fixed(0.0),
            &SimulationSettings {
                t_cap: 5.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!out.crashed);
        assert!((out.w - (50.0 - 0.005)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = SimulationSettings::default();
        assert!(run_conflict(start(1.0, 0.0, 0.0), &Constant(0.0), &mut Fixed(0.0), &s).is_err());
        let bad_dt = SimulationSettings {
            dt: 0.0,
            ..Default::default()
        };
        assert!(run_conflict(
            start(1.0, 0.0, 1.0),
            &Constant(0.0),
            &mut Fixed(0.0),
            &bad_dt
        )
        .is_err());
    }
}
