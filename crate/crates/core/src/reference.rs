//! Closed-form reference measure for a follower closing on a constant-speed
//! leader, plus elementary time-based indicators.
//!
//! The crash probability is one minus the probability that the driver reacts
//! before the latest safe reaction time, integrated over the deceleration
//! distribution. The inner integral over the reaction time is the log-normal
//! CDF; only the outer integral over the deceleration is numeric.

use serde::{Deserialize, Serialize};

use crate::distributions::{LogNormalMoments, TruncatedNormal};
use crate::error::{invalid, Result};
use crate::quadrature::adaptive_simpson;

/// Reaction-time and maximum-deceleration distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WsParams {
    pub reaction_mean: f64,
    pub reaction_std: f64,
    pub madr_mean: f64,
    pub madr_std: f64,
    pub madr_lower: f64,
    pub madr_upper: f64,
}

impl Default for WsParams {
    fn default() -> Self {
        Self {
            reaction_mean: 0.92,
            reaction_std: 0.28,
            madr_mean: 9.7,
            madr_std: 1.3,
            madr_lower: 4.2,
            madr_upper: 12.7,
        }
    }
}

impl WsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.madr_lower > 0.0 && self.madr_lower < self.madr_upper) {
            return Err(invalid("madr bounds must satisfy 0 < lower < upper"));
        }
        self.reaction()?;
        self.madr()?;
        Ok(())
    }

    pub fn reaction(&self) -> Result<LogNormalMoments> {
        LogNormalMoments::new(self.reaction_mean, self.reaction_std)
    }

    pub fn madr(&self) -> Result<TruncatedNormal> {
        TruncatedNormal::new(
            self.madr_mean,
            self.madr_std,
            self.madr_lower,
            self.madr_upper,
        )
    }
}

/// Time to collision; `None` when the gap is not closing.
pub fn ttc(gap: f64, closing_speed: f64) -> Option<f64> {
    (closing_speed > 0.0).then(|| gap / closing_speed)
}

/// Time headway; `None` for a stationary follower.
pub fn thw(gap: f64, v_ego: f64) -> Option<f64> {
    (v_ego > 0.0).then(|| gap / v_ego)
}

/// Latest reaction time that still avoids a collision when braking at
/// `a_max` against a constant-speed leader.
pub fn t_max_react(ttc: f64, closing_speed: f64, a_max: f64) -> f64 {
    ttc - closing_speed / (2.0 * a_max)
}

pub const WS_QUAD_TOL: f64 = 1e-6;

/// Crash probability for closing speed `dv` and time to collision `ttc`.
pub fn ws_probability(dv: f64, ttc: f64, params: &WsParams) -> Result<f64> {
    if dv <= 0.0 {
        return Ok(0.0);
    }
    if !(ttc > 0.0) {
        return Err(invalid("ttc must be positive when closing"));
    }
    let required = dv / (2.0 * ttc);
    if required >= params.madr_upper {
        return Ok(1.0);
    }
    let reaction = params.reaction()?;
    let madr = params.madr()?;
    let lower = params.madr_lower.max(required);
    let safe = adaptive_simpson(
        |a| reaction.cdf(t_max_react(ttc, dv, a)) * madr.pdf(a),
        lower,
        params.madr_upper,
        WS_QUAD_TOL * 0.1,
    );
    Ok((1.0 - safe).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttc_examples() {
        assert!((ttc(20.0, 13.0).unwrap() - 20.0 / 13.0).abs() < 1e-15);
        assert!((ttc(20.0, 13.0).unwrap() - 1.538).abs() < 1e-3);
        assert_eq!(ttc(20.0, 0.0), None);
        assert_eq!(ttc(30.0, 10.0), Some(3.0));
    }

    #[test]
    fn thw_examples() {
        assert_eq!(thw(20.0, 25.0), Some(0.8));
        assert_eq!(thw(20.0, 0.0), None);
        assert_eq!(thw(36.0, 18.0), Some(2.0));
    }

    #[test]
    fn t_max_react_examples() {
        assert!((t_max_react(2.0, 20.0, 10.0) - 1.0).abs() < 1e-15);
        assert_eq!(t_max_react(1.0, 20.0, 10.0), 0.0);
        assert!((t_max_react(3.0, 10.0, 12.7) - 2.606_299_2).abs() < 1e-6);
    }

    #[test]
    fn ws_case_split() {
        let p = WsParams::default();
        assert_eq!(ws_probability(-5.0, 2.0, &p).unwrap(), 0.0);
        assert_eq!(ws_probability(30.0, 1.0, &p).unwrap(), 1.0);
        assert_eq!(ws_probability(30.0, 0.5, &p).unwrap(), 1.0);
    }

    #[test]
    fn ws_is_continuous_at_the_certain_crash_boundary() {
        let p = WsParams::default();
        let dv = 20.0;
        let ttc_edge = dv / (2.0 * p.madr_upper);
        let just_inside = ws_probability(dv, ttc_edge * (1.0 + 1e-6), &p).unwrap();
        assert!(just_inside > 1.0 - 1e-4, "{just_inside}");
    }

    #[test]
    fn ws_monotone_in_ttc_and_dv() {
        let p = WsParams::default();
        for &dv in &[5.0, 10.0, 20.0, 30.0] {
            let mut prev = 1.0;
            for k in 1..=40 {
                let t = 0.1 * k as f64;
                let v = ws_probability(dv, t, &p).unwrap();
                assert!(v <= prev + 1e-6, "dv={dv} t={t}");
                assert!((0.0..=1.0).contains(&v));
                prev = v;
            }
        }
        for k in 1..=40 {
            let t = 0.1 * k as f64;
            let a = ws_probability(10.0, t, &p).unwrap();
            let b = ws_probability(20.0, t, &p).unwrap();
            let c = ws_probability(30.0, t, &p).unwrap();
            assert!(a <= b + 1e-6 && b <= c + 1e-6, "t={t}: {a} {b} {c}");
        }
    }
}
