//! Property tests over randomly generated inputs.

mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use ssm_core::density::{fit_svd_basis, BandwidthMatrix, KdeModel};
use ssm_core::probability::crash_mass_from_results;
use ssm_core::reference::{ws_probability, WsParams};
use ssm_core::regression::{
    select_design_points_cover, verify_cover, DesignPointSet, DesignSource, SsmTable, TableMetadata,
};
use ssm_core::simulation::{simulate_ws, EgoResponseDraw, SimulationSettings};

fn table(points: &[Vec<f64>], probs: &[f64], bw: &[f64]) -> SsmTable {
    let dim = bw.len();
    let design = DesignPointSet {
        dim,
        points: points.iter().flatten().copied().collect(),
        weights: bw.iter().map(|b| 1.0 / b).collect(),
        source: DesignSource::GreedyCover,
    };
    SsmTable::new(
        design,
        probs.to_vec(),
        BandwidthMatrix::diagonal(bw).unwrap(),
        TableMetadata::new("test", &vec!["x"; dim], 0),
    )
    .unwrap()
}

fn points_and_probs(dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    prop::collection::vec(
        (prop::collection::vec(-5.0..5.0f64, dim), 0.0..=1.0f64),
        1..40,
    )
    .prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crash_mass_is_a_monotone_probability(
        ws in prop::collection::vec(-20.0..40.0f64, 1..50),
        k in any::<prop::sample::Index>(),
        bump in 0.0..10.0f64,
        h in 0.05..5.0f64,
    ) {
        let base = crash_mass_from_results(&ws, h);
        prop_assert!((0.0..=1.0).contains(&base));
        let mut raised = ws.clone();
        raised[k.index(ws.len())] += bump;
        prop_assert!(crash_mass_from_results(&raised, h) <= base + 1e-15);
    }

    #[test]
    fn crash_mass_approaches_counting_fraction(ws in prop::collection::vec(-20.0..40.0f64, 1..50)) {
        prop_assume!(ws.iter().all(|w| w.abs() > 1e-3));
        let counting = ws.iter().filter(|&&w| w <= 0.0).count() as f64 / ws.len() as f64;
        prop_assert!((crash_mass_from_results(&ws, 1e-6) - counting).abs() < 1e-12);
    }

    #[test]
    fn smoother_is_a_convex_combination(
        (points, probs) in points_and_probs(3),
        x in prop::collection::vec(-50.0..50.0f64, 3),
        bw in prop::collection::vec(0.01..4.0f64, 3),
    ) {
        let t = table(&points, &probs, &bw);
        let v = t.evaluate(&x).unwrap();
        let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo && v <= hi, "{v} not in [{lo}, {hi}]");
    }

    #[test]
    fn smoother_ignores_design_order(
        (points, probs) in points_and_probs(2),
        x in prop::collection::vec(-6.0..6.0f64, 2),
        bw in prop::collection::vec(0.1..4.0f64, 2),
        rotate in any::<prop::sample::Index>(),
    ) {
        let a = table(&points, &probs, &bw);
        let r = rotate.index(points.len());
        let mut p2 = points.clone();
        let mut q2 = probs.clone();
        p2.rotate_left(r);
        q2.rotate_left(r);
        p2.reverse();
        q2.reverse();
        let b = table(&p2, &q2, &bw);
        prop_assert!((a.evaluate(&x).unwrap() - b.evaluate(&x).unwrap()).abs() < 1e-12);
        for (g, h) in a.gradient(&x).unwrap().iter().zip(b.gradient(&x).unwrap()) {
            prop_assert!((g - h).abs() < 1e-12 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn greedy_cover_passes_verification(
        data in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 1..200),
        q in prop::collection::vec(0.05..4.0f64, 3),
    ) {
        let set = select_design_points_cover(&data, &q).unwrap();
        prop_assert!(verify_cover(&set, &data).unwrap());
        prop_assert!(set.len() <= data.len());
        for p in set.iter() {
            prop_assert!(data.iter().any(|d| d.as_slice() == p));
        }
    }

    #[test]
    fn identical_data_gives_one_design_point(v in prop::collection::vec(-10.0..10.0f64, 2), n in 1usize..30) {
        let data = vec![v; n];
        prop_assert_eq!(select_design_points_cover(&data, &[1.0, 1.0]).unwrap().len(), 1);
    }

    #[test]
    fn later_reaction_or_weaker_brakes_never_help(
        dv in 0.5..40.0f64,
        ttc in 0.2..5.0f64,
        t1 in 0.1..3.0f64,
        dt_react in 0.0..2.0f64,
        a1 in 4.2..12.7f64,
        da in 0.0..3.0f64,
    ) {
        let s = SimulationSettings::default();
        let base = simulate_ws(dv, ttc, EgoResponseDraw::new(t1, a1).unwrap(), &s).unwrap();
        let later = simulate_ws(dv, ttc, EgoResponseDraw::new(t1 + dt_react, a1).unwrap(), &s).unwrap();
        let stronger = simulate_ws(dv, ttc, EgoResponseDraw::new(t1, a1 + da).unwrap(), &s).unwrap();
        for out in [&base, &later, &stronger] {
            prop_assert_eq!(out.crashed, out.w <= 0.0);
        }
        prop_assert!(!(base.crashed && !later.crashed));
        prop_assert!(!(!base.crashed && stronger.crashed));
        prop_assert!(later.w <= base.w + 1e-9);
        prop_assert!(stronger.w >= base.w - 1e-9);
    }

    #[test]
    fn ws_probability_is_monotone(dv in 0.5..40.0f64, ttc in 0.3..5.0f64, step in 0.01..2.0f64) {
        let p = WsParams::default();
        let base = ws_probability(dv, ttc, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(ws_probability(dv, ttc + step, &p).unwrap() <= base + 1e-6);
        prop_assert!(ws_probability(dv + step, ttc, &p).unwrap() >= base - 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn truncated_basis_meets_the_eckart_young_bound(seed in any::<u64>(), d in 3usize..8) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
        let y = DMatrix::from_fn(n, 6, |_, _| rng.random_range(-2.0..2.0));
        let (basis, coords) = fit_svd_basis(&x, &y, d).unwrap();
        // Centered data and its singular values.
        let mut m = DMatrix::zeros(n, 8);
        for i in 0..n {
            for j in 0..2 {
                m[(i, j)] = x[(i, j)] - basis.mean_x[j];
            }
            for j in 0..6 {
                m[(i, 2 + j)] = y[(i, j)] - basis.mean_y[j];
            }
        }
        let sv = m.clone().svd(false, false).singular_values;
        let bound: f64 = sv.iter().skip(d).map(|s| s * s).sum::<f64>();
        let mut err = 0.0;
        for i in 0..n {
            let row: Vec<f64> = coords.row(i).iter().copied().collect();
            let (rx, ry) = basis.reconstruct(&row);
            for j in 0..2 {
                err += (rx[j] - x[(i, j)]).powi(2);
            }
            for j in 0..6 {
                err += (ry[j] - y[(i, j)]).powi(2);
            }
        }
        prop_assert!((err - bound).abs() <= 1e-9 * (1.0 + bound), "{err} vs {bound}");
        prop_assert!(basis.singular_values().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn kde_integrates_to_one(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let samples = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let model = KdeModel::new(&samples, BandwidthMatrix::scalar(2, 0.5).unwrap()).unwrap();
        // Importance sampling from a broad Gaussian that covers every kernel.
        let s = 1.5;
        let n = 100_000;
        let total: f64 = (0..n)
            .map(|_| {
                let z: [f64; 2] = [rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)];
                let x = [s * z[0], s * z[1]];
                let q = (-0.5 * (z[0] * z[0] + z[1] * z[1])).exp() / (2.0 * std::f64::consts::PI * s * s);
                model.density(&x).unwrap() / q
            })
            .sum();
        let integral = total / n as f64;
        prop_assert!((integral - 1.0).abs() < 0.01, "{integral}");
    }
}
