use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{LogNormalMoments, TruncatedNormal};
use crate::error::{invalid, Result};
use crate::reference::WsParams;

/// Reaction time and maximum available deceleration of one simulated driver.
///
/// Sampled draws respect the deceleration bounds of [`WsParams`]; draws
/// passed in as explicit inputs only need to be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoResponseDraw {
    pub reaction_time: f64,
    pub madr: f64,
}

impl EgoResponseDraw {
    pub fn new(reaction_time: f64, madr: f64) -> Result<Self> {
        if !(reaction_time > 0.0 && madr > 0.0) {
            return Err(invalid("reaction time and madr must be positive"));
        }
        Ok(Self {
            reaction_time,
            madr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoResponseModel {
    pub reaction: LogNormalMoments,
    pub madr: TruncatedNormal,
}

impl EgoResponseModel {
    pub fn from_params(params: &WsParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            reaction: params.reaction()?,
            madr: params.madr()?,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> EgoResponseDraw {
        EgoResponseDraw {
            reaction_time: self.reaction.sample(rng),
            madr: self.madr.sample(rng),
        }
    }
}

impl Default for EgoResponseModel {
    fn default() -> Self {
        Self::from_params(&WsParams::default()).expect("default parameters are valid")
    }
}

/// Log-normal reaction time with mean 0.92 s and standard deviation 0.28 s.
pub fn sample_reaction_time<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    EgoResponseModel::default().reaction.sample(rng)
}

/// Normal(9.7, 1.3²) deceleration truncated to [4.2, 12.7] m/s².
pub fn sample_madr<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    EgoResponseModel::default().madr.sample(rng)
}
