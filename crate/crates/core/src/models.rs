//! Conflict models: how one Monte Carlo run is set up for an initial
//! situation.
//!
//! Each model turns an input vector into a [`Runner`]. The inputs differ by
//! model:
//!
//! - `ws`: `[Δv, ttc]`, constant-speed leader, random reaction time and
//!   maximum deceleration.
//! - `longitudinal`: `[v_L, a_L, v_E, ln g]`, leader future sampled from the
//!   fitted density, IDM+ ego with random reaction time and maximum
//!   deceleration.
//! - `trend`: `[Δv, v_E, t_react, g, a_max]`, leader future sampled for
//!   `v_L = v_E - Δv` and `a_L = 0`, IDM+ ego with the given reaction time and
//!   maximum deceleration.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::density::{FutureModel, FutureSampler};
use crate::error::{invalid, Result, SsmError};
use crate::probability::Runner;
use crate::reference::WsParams;
use crate::rng::SimRng;
use crate::simulation::{
    simulate_longitudinal, simulate_ws, EgoResponseDraw, EgoResponseModel, IdmPlusParams,
    SimulationOutcome, SimulationSettings,
};

pub trait ConflictModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn input_names(&self) -> &'static [&'static str];

    /// Per-situation runner. Work shared by all runs of the situation (such
    /// as kernel weights for the conditioned future density) happens here.
    fn prepare<'a>(&'a self, x: &[f64]) -> Result<Box<dyn Runner + 'a>>;
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(SsmError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("situation inputs must be finite"));
    }
    Ok(())
}

pub struct WsModel {
    response: EgoResponseModel,
    settings: SimulationSettings,
}

impl WsModel {
    pub fn new(params: &WsParams, settings: SimulationSettings) -> Result<Self> {
        Ok(Self {
            response: EgoResponseModel::from_params(params)?,
            settings,
        })
    }
}

struct WsRunner<'a> {
    model: &'a WsModel,
    dv: f64,
    ttc: f64,
}

impl Runner for WsRunner<'_> {
    fn run(&self, rng: &mut SimRng) -> Result<SimulationOutcome> {
        let draw = self.model.response.draw(rng);
        simulate_ws(self.dv, self.ttc, draw, &self.model.settings)
    }
}

impl ConflictModel for WsModel {
    fn name(&self) -> &'static str {
        "ws"
    }

    fn input_names(&self) -> &'static [&'static str] {
        &["dv", "ttc"]
    }

    fn prepare<'a>(&'a self, x: &[f64]) -> Result<Box<dyn Runner + 'a>> {
        check_len(x, 2)?;
        if x[0] > 0.0 && !(x[1] > 0.0) {
            return Err(invalid("time to collision must be positive when closing"));
        }
        Ok(Box::new(WsRunner {
            model: self,
            dv: x[0],
            ttc: x[1],
        }))
    }
}

fn check_future_step(future: &FutureModel, settings: &SimulationSettings) -> Result<()> {
    if (future.dt - settings.dt).abs() > 1e-12 {
        return Err(invalid(format!(
            "simulation step {} s must equal the future model step {} s",
            settings.dt, future.dt
        )));
    }
    Ok(())
}

pub struct LongitudinalModel {
    future: Arc<FutureModel>,
    idm: IdmPlusParams,
    response: EgoResponseModel,
    settings: SimulationSettings,
}

impl LongitudinalModel {
    pub fn new(
        future: Arc<FutureModel>,
        idm: IdmPlusParams,
        ws: &WsParams,
        settings: SimulationSettings,
    ) -> Result<Self> {
        idm.validate()?;
        check_future_step(&future, &settings)?;
        Ok(Self {
            future,
            idm,
            response: EgoResponseModel::from_params(ws)?,
            settings,
        })
    }
}

struct LongitudinalRunner<'a> {
    model: &'a LongitudinalModel,
    sampler: FutureSampler,
    x: [f64; 4],
}

impl Runner for LongitudinalRunner<'_> {
    fn run(&self, rng: &mut SimRng) -> Result<SimulationOutcome> {
        let m = self.model;
        let future = self.sampler.sample(&m.future, rng);
        let draw = m.response.draw(rng);
        simulate_longitudinal(&self.x, &future, &m.idm, draw, &m.settings)
    }
}

impl ConflictModel for LongitudinalModel {
    fn name(&self) -> &'static str {
        "longitudinal"
    }

    fn input_names(&self) -> &'static [&'static str] {
        &["v_lead", "a_lead", "v_ego", "ln_gap"]
    }

    fn prepare<'a>(&'a self, x: &[f64]) -> Result<Box<dyn Runner + 'a>> {
        check_len(x, 4)?;
        Ok(Box::new(LongitudinalRunner {
            model: self,
            sampler: self.future.sampler(&x[..2])?,
            x: [x[0], x[1], x[2], x[3]],
        }))
    }
}

pub struct TrendModel {
    future: Arc<FutureModel>,
    idm: IdmPlusParams,
    settings: SimulationSettings,
    /// Conditioned samplers keyed by leader speed bits. Grid inputs share few
    /// distinct leader speeds, and building a sampler touches every kernel.
    samplers: Mutex<HashMap<u64, Arc<FutureSampler>>>,
}

impl TrendModel {
    pub fn new(
        future: Arc<FutureModel>,
        idm: IdmPlusParams,
        settings: SimulationSettings,
    ) -> Result<Self> {
        idm.validate()?;
        check_future_step(&future, &settings)?;
        Ok(Self {
            future,
            idm,
            settings,
            samplers: Mutex::new(HashMap::new()),
        })
    }

    fn sampler(&self, v_lead: f64) -> Result<Arc<FutureSampler>> {
        let key = v_lead.to_bits();
        if let Some(s) = self
            .samplers
            .lock()
            .expect("sampler cache poisoned")
            .get(&key)
        {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(self.future.sampler(&[v_lead, 0.0])?);
        self.samplers
            .lock()
            .expect("sampler cache poisoned")
            .insert(key, Arc::clone(&s));
        Ok(s)
    }
}

struct TrendRunner<'a> {
    model: &'a TrendModel,
    sampler: Arc<FutureSampler>,
    x: [f64; 4],
    draw: EgoResponseDraw,
}

impl Runner for TrendRunner<'_> {
    fn run(&self, rng: &mut SimRng) -> Result<SimulationOutcome> {
        let m = self.model;
        let future = self.sampler.sample(&m.future, rng);
        simulate_longitudinal(&self.x, &future, &m.idm, self.draw, &m.settings)
    }
}

impl ConflictModel for TrendModel {
    fn name(&self) -> &'static str {
        "trend"
    }

    fn input_names(&self) -> &'static [&'static str] {
        &["dv", "v_ego", "t_react", "gap", "a_max"]
    }

    fn prepare<'a>(&'a self, x: &[f64]) -> Result<Box<dyn Runner + 'a>> {
        check_len(x, 5)?;
        let (dv, v_ego, t_react, gap, a_max) = (x[0], x[1], x[2], x[3], x[4]);
        if !(gap > 0.0) || v_ego < 0.0 {
            return Err(invalid(
                "trend inputs need a positive gap and non-negative ego speed",
            ));
        }
        let v_lead = (v_ego - dv).max(0.0);
        Ok(Box::new(TrendRunner {
            model: self,
            sampler: self.sampler(v_lead)?,
            x: [v_lead, 0.0, v_ego, gap.ln()],
            draw: EgoResponseDraw::new(t_react, a_max)?,
        }))
    }
}
