use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{TrajectorySample, VehicleSeries};
use crate::error::{invalid, Result};
use crate::rng::stream_rng;
use crate::simulation::{idm_plus_accel, IdmPlusParams, ScenarioState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedRegime {
    pub mean: f64,
    pub std: f64,
}

/// A single-lane platoon: the head vehicle follows a mean-reverting random
/// speed profile whose target switches between regimes, and every other
/// vehicle follows its predecessor with IDM+.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticFleetConfig {
    pub vehicle_count: usize,
    /// Simulated time (s).
    pub duration: f64,
    /// Sampling period (s).
    pub dt: f64,
    pub speed_regimes: Vec<SpeedRegime>,
    /// Time between regime switches of the head vehicle (s).
    pub regime_duration: f64,
    pub follower_model_params: IdmPlusParams,
    /// Relative spread of per-driver headway, acceleration and deceleration.
    pub heterogeneity: f64,
    pub vehicle_length: f64,
    pub seed: u64,
}

impl Default for SyntheticFleetConfig {
    fn default() -> Self {
        Self {
            vehicle_count: 20,
            duration: 600.0,
            dt: 0.1,
            speed_regimes: vec![
                SpeedRegime {
                    mean: 25.0,
                    std: 2.0,
                },
                SpeedRegime {
                    mean: 15.0,
                    std: 3.0,
                },
                SpeedRegime {
                    mean: 8.0,
                    std: 2.5,
                },
            ],
            regime_duration: 60.0,
            follower_model_params: IdmPlusParams::default(),
            heterogeneity: 0.2,
            vehicle_length: 4.5,
            seed: 7,
        }
    }
}

impl SyntheticFleetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vehicle_count < 2 {
            return Err(invalid("a fleet needs at least 2 vehicles"));
        }
        if !(self.dt > 0.0 && self.duration > self.dt) {
            return Err(invalid("need 0 < dt < duration"));
        }
        if self.speed_regimes.is_empty()
            || self
                .speed_regimes
                .iter()
                .any(|r| !(r.mean >= 0.0 && r.std >= 0.0))
        {
            return Err(invalid("speed regimes need non-negative mean and std"));
        }
        if !(self.regime_duration > 0.0) || !(0.0..1.0).contains(&self.heterogeneity) {
            return Err(invalid(
                "need regime_duration > 0 and heterogeneity in [0, 1)",
            ));
        }
        if !(self.vehicle_length > 0.0) {
            return Err(invalid("vehicle length must be positive"));
        }
        self.follower_model_params.validate()
    }
}

// Head-vehicle acceleration dynamics: a' = THETA (KAPPA (mu - v) - a) + noise.
const THETA: f64 = 0.5;
const KAPPA: f64 = 0.2;
const HEAD_ACCEL_RANGE: (f64, f64) = (-3.5, 2.0);

/// Generates the platoon. Output is deterministic in `config.seed`.
pub fn synthesize_fleet(config: &SyntheticFleetConfig) -> Result<Vec<VehicleSeries>> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 0, 0);
    let n = config.vehicle_count;
    let steps = (config.duration / config.dt).round() as usize;
    let dt = config.dt;

    let params: Vec<IdmPlusParams> = (0..n)
        .map(|_| {
            let mut p = config.follower_model_params;
            let mut jitter = || 1.0 + config.heterogeneity * rng.random_range(-1.0..1.0);
            p.time_headway *= jitter();
            p.a *= jitter();
            p.b *= jitter();
            p
        })
        .collect();

    let mut regime = config.speed_regimes[0];
    let v_init = regime.mean;
    let mut speed = vec![v_init; n];
    let mut accel = vec![0.0; n];
    let mut position = vec![0.0; n];
    for i in (0..n - 1).rev() {
        let p = &params[i + 1];
        // Equilibrium spacing, so the platoon starts at rest relative to
        // itself.
        position[i] = position[i + 1] + p.s0 + v_init * p.time_headway + config.vehicle_length;
    }

    // Speed noise scaled so the head vehicle's stationary speed spread
    // matches the regime's standard deviation.
    let noise = |r: &SpeedRegime| r.std * THETA * (2.0 * KAPPA).sqrt();
    let regime_steps = ((config.regime_duration / dt).round() as usize).max(1);

    let mut series: Vec<VehicleSeries> = (0..n)
        .map(|i| VehicleSeries {
            vehicle_id: i as u64 + 1,
            samples: Vec::with_capacity(steps + 1),
        })
        .collect();

    for step in 0..=steps {
        if step > 0 && step % regime_steps == 0 {
            regime = config.speed_regimes[rng.random_range(0..config.speed_regimes.len())];
        }
        let eps: f64 = rng.sample(StandardNormal);
        let a_head = accel[0]
            + THETA * (KAPPA * (regime.mean - speed[0]) - accel[0]) * dt
            + noise(&regime) * dt.sqrt() * eps;
        accel[0] = a_head
            .clamp(HEAD_ACCEL_RANGE.0, HEAD_ACCEL_RANGE.1)
            .max(-speed[0] / dt);
        for i in 1..n {
            let state = ScenarioState {
                t: step as f64 * dt,
                v_ego: speed[i],
                v_lead: speed[i - 1],
                gap: position[i - 1] - position[i] - config.vehicle_length,
            };
            accel[i] = idm_plus_accel(&state, &params[i], dt)?;
        }
        let t = step as f64 * dt;
        for i in 0..n {
            let gap = (i > 0).then(|| position[i - 1] - position[i] - config.vehicle_length);
            series[i].samples.push(TrajectorySample {
                time: t,
                vehicle_id: i as u64 + 1,
                lane_id: 1,
                position: position[i],
                speed: speed[i],
                accel: accel[i],
                leader_id: (i > 0).then_some(i as u64),
                gap,
                length: config.vehicle_length,
            });
        }
        for i in 0..n {
            position[i] += speed[i] * dt + 0.5 * accel[i] * dt * dt;
            speed[i] = (speed[i] + accel[i] * dt).max(0.0);
        }
    }
    Ok(series)
}
