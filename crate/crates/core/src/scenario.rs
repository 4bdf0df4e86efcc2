//! Scripted two-vehicle scenarios evaluated along time with a table and the
//! analytic reference measure.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SsmError};
use crate::reference::{ws_probability, WsParams};
use crate::regression::SsmTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedKnot {
    pub t: f64,
    pub v: f64,
}

/// Speed linear between knots and held outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedProfile {
    pub knots: Vec<SpeedKnot>,
}

impl SpeedProfile {
    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(invalid("speed profile needs at least one knot"));
        }
        if self
            .knots
            .iter()
            .any(|k| !(k.t.is_finite() && k.v >= 0.0 && k.v.is_finite()))
        {
            return Err(invalid(
                "speed knots need finite times and non-negative speeds",
            ));
        }
        if self.knots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(invalid("speed knot times must increase"));
        }
        Ok(())
    }

    pub fn speed(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].t {
            return k[0].v;
        }
        match k.windows(2).find(|w| t < w[1].t) {
            Some(w) => w[0].v + (w[1].v - w[0].v) * (t - w[0].t) / (w[1].t - w[0].t),
            None => k[k.len() - 1].v,
        }
    }

    /// Slope of the segment that starts at or before `t`.
    pub fn accel(&self, t: f64) -> f64 {
        self.knots
            .windows(2)
            .find(|w| t >= w[0].t && t < w[1].t)
            .map_or(0.0, |w| (w[1].v - w[0].v) / (w[1].t - w[0].t))
    }

    /// Distance covered on `[0, t]`, exact for the piecewise-linear speed.
    pub fn distance(&self, t: f64) -> f64 {
        let mut times = vec![0.0];
        times.extend(
            self.knots
                .iter()
                .map(|k| k.t)
                .filter(|&kt| kt > 0.0 && kt < t),
        );
        times.push(t);
        times
            .windows(2)
            .map(|w| 0.5 * (self.speed(w[0]) + self.speed(w[1])) * (w[1] - w[0]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Bumper-to-bumper gap at t = 0 (m).
    pub initial_gap: f64,
    pub duration: f64,
    #[serde(default = "default_step")]
    pub dt: f64,
    pub leader: SpeedProfile,
    pub ego: SpeedProfile,
}

fn default_step() -> f64 {
    0.1
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_gap > 0.0 && self.duration > 0.0 && self.dt > 0.0) {
            return Err(invalid(
                "scenario needs positive initial gap, duration and step",
            ));
        }
        self.leader.validate()?;
        self.ego.validate()
    }

    /// Gap at `t`, integrating the speed difference over the union of both
    /// profiles' knots so equal speeds leave the gap exactly unchanged.
    pub fn gap(&self, t: f64) -> f64 {
        let mut times = vec![0.0];
        let knots = self.leader.knots.iter().chain(&self.ego.knots);
        times.extend(knots.map(|k| k.t).filter(|&kt| kt > 0.0 && kt < t));
        times.sort_by(f64::total_cmp);
        times.push(t);
        let rel = |u: f64| self.leader.speed(u) - self.ego.speed(u);
        self.initial_gap
            + times
                .windows(2)
                .map(|w| 0.5 * (rel(w[0]) + rel(w[1])) * (w[1] - w[0]))
                .sum::<f64>()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Scenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }

    /// First time the gap closes, located to 1e-9 s.
    pub fn impact_time(&self) -> Option<f64> {
        let steps = (self.duration / self.dt).round() as usize;
        let k = (1..=steps).find(|&k| self.gap(k as f64 * self.dt) <= 0.0)?;
        let (mut lo, mut hi) = ((k - 1) as f64 * self.dt, k as f64 * self.dt);
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if self.gap(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPoint {
    pub t: f64,
    pub v_lead: f64,
    pub v_ego: f64,
    pub gap: f64,
    /// Closing speed `v_ego - v_lead`.
    pub dv: f64,
    pub ttc: Option<f64>,
    pub p_table: f64,
    pub p_ws: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub name: String,
    pub points: Vec<ScenarioPoint>,
    pub impact_time: Option<f64>,
}

impl ScenarioTrace {
    pub fn max_p_table(&self) -> f64 {
        self.points.iter().map(|p| p.p_table).fold(0.0, f64::max)
    }

    pub fn max_p_ws(&self) -> f64 {
        self.points.iter().map(|p| p.p_ws).fold(0.0, f64::max)
    }
}

/// Table query for the current state, by the table's input layout.
fn table_probability(table: &SsmTable, p: &ScenarioPoint, a_lead: f64) -> Result<f64> {
    match table.metadata.mode.as_str() {
        "ws" => match p.ttc {
            Some(ttc) => table.evaluate(&[p.dv, ttc]),
            None => Ok(0.0),
        },
        "longitudinal" => table.evaluate(&[p.v_lead, a_lead, p.v_ego, p.gap.ln()]),
        other => Err(SsmError::Format(format!(
            "tables of mode {other:?} cannot be evaluated along a scenario"
        ))),
    }
}

/// Evaluates the table and the analytic measure every `dt` until the end of
/// the scenario or the last step before impact.
pub fn evaluate_scenario(
    scenario: &Scenario,
    table: &SsmTable,
    ws: &WsParams,
) -> Result<ScenarioTrace> {
    scenario.validate()?;
    let impact_time = scenario.impact_time();
    let steps = (scenario.duration / scenario.dt).round() as usize;
    let mut points = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * scenario.dt;
        if impact_time.is_some_and(|ti| t >= ti) {
            break;
        }
        let v_lead = scenario.leader.speed(t);
        let v_ego = scenario.ego.speed(t);
        let gap = scenario.gap(t);
        let dv = v_ego - v_lead;
        let ttc = (dv > 0.0).then(|| gap / dv);
        let mut p = ScenarioPoint {
            t,
            v_lead,
            v_ego,
            gap,
            dv,
            ttc,
            p_table: 0.0,
            p_ws: match ttc {
                Some(ttc) => ws_probability(dv, ttc, ws)?,
                None => 0.0,
            },
        };
        p.p_table = table_probability(table, &p, scenario.leader.accel(t))?;
        points.push(p);
    }
    Ok(ScenarioTrace {
        name: scenario.name.clone(),
        points,
        impact_time,
    })
}

pub fn write_scenario_csv<W: Write>(out: W, trace: &ScenarioTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t", "v_lead", "v_ego", "gap", "dv", "ttc", "p_table", "p_ws",
    ])?;
    for p in &trace.points {
        w.write_record([
            format!("{:.3}", p.t),
            format!("{:.6}", p.v_lead),
            format!("{:.6}", p.v_ego),
            format!("{:.6}", p.gap),
            format!("{:.6}", p.dv),
            p.ttc.map_or(String::new(), |v| format!("{v:.6}")),
            format!("{:.6}", p.p_table),
            format!("{:.6}", p.p_ws),
        ])?;
    }
    w.flush()?;
    Ok(())
}
