use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kde::{ConstrainedSampler, KdeModel};
use super::svd::{fit_svd_basis, ReducedBasis};
use crate::error::{invalid, Result};

/// Joint model of a leader's current state `(v_L, a_L)` and its next `n`
/// speeds: a KDE over SVD-reduced pair coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FutureModel {
    pub basis: ReducedBasis,
    pub kde: KdeModel,
    /// Spacing of the future speeds in seconds.
    pub dt: f64,
}

/// Draws futures for one fixed `(v_L, a_L)`.
#[derive(Debug, Clone)]
pub struct FutureSampler {
    inner: ConstrainedSampler,
}

impl FutureModel {
    /// `state` holds one `(v_L, a_L)` row per pair, `future` the matching
    /// leader speeds.
    pub fn fit(state: &DMatrix<f64>, future: &DMatrix<f64>, d: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("future time step must be positive"));
        }
        let (basis, coords) = fit_svd_basis(state, future, d)?;
        let kde = KdeModel::fit_standardized(&coords)?;
        Ok(Self { basis, kde, dt })
    }

    pub fn horizon(&self) -> usize {
        self.basis.dy()
    }

    pub fn sampler(&self, state: &[f64]) -> Result<FutureSampler> {
        let c = self.basis.constraint(state)?;
        Ok(FutureSampler {
            inner: self.kde.constrained_sampler(&c.a, &c.b)?,
        })
    }
}

impl FutureSampler {
    /// Reduced coordinates of one draw; they satisfy the state constraint.
    pub fn sample_coords<R: Rng + ?Sized>(&self, model: &FutureModel, rng: &mut R) -> DVector<f64> {
        self.inner.sample(&model.kde, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, model: &FutureModel, rng: &mut R) -> Vec<f64> {
        let v = self.sample_coords(model, rng);
        model.basis.future_from_coords(v.as_slice())
    }

    pub fn constraint(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        self.inner.constraint()
    }
}

/// One future speed profile for the leader state `(v_L, a_L)`.
pub fn sample_future_given_initial<R: Rng + ?Sized>(
    model: &FutureModel,
    v_lead: f64,
    a_lead: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(model.sampler(&[v_lead, a_lead])?.sample(model, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    /// Leaders that keep a constant acceleration for the whole horizon.
    fn ramp_pairs(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = stream_rng(21, 0, 0);
        let mut state = DMatrix::zeros(n, 2);
        let mut future = DMatrix::zeros(n, 20);
        for i in 0..n {
            let v = rng.random_range(5.0..25.0);
            let a = rng.random_range(-1.5..1.5);
            state[(i, 0)] = v;
            state[(i, 1)] = a;
            for k in 0..20 {
                let noise: f64 = rng.random_range(-0.05..0.05);
                future[(i, k)] = (v + a * 0.1 * (k + 1) as f64 + noise).max(0.0);
            }
        }
        (state, future)
    }

    #[test]
    fn futures_follow_the_conditioning_acceleration() {
        let (s, f) = ramp_pairs(2000);
        let m = FutureModel::fit(&s, &f, 4, 0.1).unwrap();
        assert_eq!(m.horizon(), 20);
        let mut rng = stream_rng(22, 0, 0);
        let up = m.sampler(&[15.0, 1.0]).unwrap();
        let down = m.sampler(&[15.0, -1.0]).unwrap();
        let mean_end = |s: &FutureSampler, rng: &mut crate::rng::SimRng| {
            (0..2000).map(|_| s.sample(&m, rng)[19]).sum::<f64>() / 2000.0
        };
        let hi = mean_end(&up, &mut rng);
        let lo = mean_end(&down, &mut rng);
        assert!((hi - 17.0).abs() < 0.5, "{hi}");
        assert!((lo - 13.0).abs() < 0.5, "{lo}");
    }

    #[test]
    fn draws_satisfy_the_constraint() {
        let (s, f) = ramp_pairs(500);
        let m = FutureModel::fit(&s, &f, 4, 0.1).unwrap();
        let sampler = m.sampler(&[12.0, 0.3]).unwrap();
        let (a, b) = sampler.constraint();
        let mut rng = stream_rng(23, 0, 0);
        for _ in 0..1000 {
            let v = sampler.sample_coords(&m, &mut rng);
            assert!((a * &v - b).amax() <= 1e-9);
        }
    }

    #[test]
    fn model_round_trips_through_json() {
        let (s, f) = ramp_pairs(100);
        let m = FutureModel::fit(&s, &f, 3, 0.1).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<FutureModel>(&text).unwrap(), m);
    }
}
