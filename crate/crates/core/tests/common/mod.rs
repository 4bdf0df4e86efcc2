#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_core::density::{BandwidthMatrix, KdeModel};
use ssm_core::distributions::{LogNormalMoments, TruncatedNormal};
use ssm_core::reference::{t_max_react, WsParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Random symmetric positive definite matrix with eigenvalues in a sane range.
pub fn random_spd(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(dim, dim) * rng.random_range(0.05..0.5)
}

pub fn random_kde(rng: &mut impl Rng) -> KdeModel {
    let dim = rng.random_range(1..=4);
    let n = rng.random_range(1..=30);
    let samples = DMatrix::from_fn(n, dim, |_, _| rng.random_range(-3.0..3.0));
    KdeModel::new(
        &samples,
        BandwidthMatrix::full(&random_spd(dim, rng)).unwrap(),
    )
    .unwrap()
}

/// Direct evaluation of `(1/N) Σ N(x; x_i, H)` with an explicit inverse and
/// determinant.
pub fn brute_force_density(model: &KdeModel, x: &[f64]) -> f64 {
    let h = model.bandwidth().matrix();
    let d = model.dim();
    let inv = h.clone().try_inverse().unwrap();
    let norm = ((2.0 * PI).powi(d as i32) * h.determinant()).sqrt();
    let mut total = 0.0;
    for i in 0..model.len() {
        let row = model.sample_row(i);
        let diff = nalgebra::DVector::from_iterator(d, (0..d).map(|j| x[j] - row[j]));
        let q = (diff.transpose() * &inv * &diff)[(0, 0)];
        total += (-0.5 * q).exp() / norm;
    }
    total / model.len() as f64
}

/// Monte Carlo crash fraction for the constant-speed-leader measure with the
/// closed-form outcome of each draw. Returns the estimate and its standard
/// error.
pub fn ws_monte_carlo(dv: f64, ttc: f64, params: &WsParams, draws: usize, seed: u64) -> (f64, f64) {
    let reaction: LogNormalMoments = params.reaction().unwrap();
    let madr: TruncatedNormal = params.madr().unwrap();
    let mut r = rng(seed);
    let mut crashes = 0usize;
    for _ in 0..draws {
        let t = reaction.sample(&mut r);
        let a = madr.sample(&mut r);
        if dv > 0.0 && t > t_max_react(ttc, dv, a) {
            crashes += 1;
        }
    }
    let p = crashes as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}
