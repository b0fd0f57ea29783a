mod common;

use twosex::fixpoint::{iterate, iterate_from, lambda_map, FixedPointConfig};
use twosex::hum::{HumConfig, HumSetup};
use twosex::{ControlWindows, Field, Grid, RateTable, Saturation, SpaceTime};

fn desk(horizon: f64, rates: &RateTable) -> (HumSetup, Field, Field) {
    let g = Grid::new(32, 40, 1.0, horizon).unwrap();
    let setup = HumSetup::new(rates, &g, &ControlWindows::reference()).unwrap();
    (setup, common::bump(&g, 0.4), common::bump(&g, 0.5))
}

#[test]
fn desk_iteration_decreases_monotonically() {
    let (setup, m0, f0) = desk(0.6, &RateTable::reference());
    let g = *setup.grid();
    let res = iterate(&setup, &m0, &f0, &FixedPointConfig::default(), &HumConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.iterations <= 30);
    assert!(*res.residuals.last().unwrap() <= 1e-8);
    assert!(res.residuals.windows(2).all(|w| w[1] < w[0]), "{:?}", res.residuals);
    // The nonlinear run reproduces the frozen one up to the consistency defect.
    let nl = res.nonlinear.final_m().norm(&g);
    assert!((nl - res.hum.final_m_norm).abs() <= 1e-6 * m0.norm(&g) + 10.0 * res.consistency);
    assert!(res.consistency <= 1e-6);
    assert!(nl <= 1e-2 * m0.norm(&g));
}

#[test]
fn fixed_point_is_idempotent() {
    let (setup, m0, f0) = desk(0.5, &RateTable::reference());
    let hum = HumConfig::default();
    let fp = FixedPointConfig::default();
    let first = iterate(&setup, &m0, &f0, &fp, &hum).unwrap();
    let again = iterate_from(&setup, &m0, &f0, first.p.clone(), &fp, &hum).unwrap();
    assert_eq!(again.iterations, 1);
    assert!(again.residuals[0] <= fp.tol);
}

#[test]
fn lambda_is_bounded_uniformly_in_p() {
    let g = Grid::new(16, 20, 1.0, 0.5).unwrap();
    let setup = HumSetup::new(&RateTable::reference(), &g, &ControlWindows::reference()).unwrap();
    let (m0, f0) = (common::bump(&g, 0.4), common::bump(&g, 0.5));
    let data = m0.norm(&g) + f0.norm(&g);
    let mut r = common::rng(17);
    let sizes: Vec<f64> = (0..6)
        .map(|i| {
            let p = common::random_profile(&g, &mut r).blend(&SpaceTime::zeros(&g), 0.2 * i as f64);
            let (lp, _) = lambda_map(&setup, &p, &m0, &f0, &HumConfig::default(), None).unwrap();
            lp.norm(&g) / data
        })
        .collect();
    let hi = sizes.iter().cloned().fold(0.0, f64::max);
    let lo = sizes.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi.is_finite() && hi / lo < 2.0, "{sizes:?}");
}

#[test]
fn saturated_birth_law_makes_lambda_constant() {
    let g = Grid::new(16, 20, 1.0, 0.5).unwrap();
    let mut rates = RateTable::reference();
    rates.birth.saturation = Saturation::Clipped { scale: 0.1 };
    let setup = HumSetup::new(&rates, &g, &ControlWindows::reference()).unwrap();
    let (m0, f0) = (common::bump(&g, 0.4), common::bump(&g, 0.5));
    let cfg = HumConfig {
        cg_tol: 1e-13,
        ..HumConfig::default()
    };
    let mut r = common::rng(2);
    let a = SpaceTime::constant(&g, 0.5);
    let b = SpaceTime::from_fn(&g, |_, _| rand::Rng::gen_range(&mut r, 0.2..2.0));
    let (la, _) = lambda_map(&setup, &a, &m0, &f0, &cfg, None).unwrap();
    let (lb, _) = lambda_map(&setup, &b, &m0, &f0, &cfg, None).unwrap();
    assert!(la.distance(&lb, &g) <= 1e-12 * la.norm(&g).max(1e-300));
}

#[test]
fn halving_the_lipschitz_constant_reduces_contraction() {
    // Undamped, the first residual ratio measures Lambda's own contraction.
    let first_ratio = |peak: f64| {
        let mut rates = RateTable::reference();
        rates.birth.peak = peak;
        rates.lipschitz = rates.birth.lipschitz();
        let (setup, m0, f0) = desk(0.5, &rates);
        let fp = FixedPointConfig {
            damping: 1.0,
            max_outer_iters: 2,
            ..FixedPointConfig::default()
        };
        let hum = HumConfig {
            cg_tol: 1e-11,
            ..HumConfig::default()
        };
        let res = iterate(&setup, &m0, &f0, &fp, &hum).unwrap();
        (rates.lipschitz, res.contraction[0])
    };
    let (l_full, c_full) = first_ratio(2.0);
    let (l_half, c_half) = first_ratio(1.0);
    assert!((l_half - 0.5 * l_full).abs() < 1e-12);
    assert!(c_half < c_full, "{c_half} {c_full}");
}

#[test]
fn zero_data_map_to_zero_for_any_p() {
    let g = Grid::new(8, 10, 1.0, 0.5).unwrap();
    let setup = HumSetup::new(&RateTable::reference(), &g, &ControlWindows::reference()).unwrap();
    let z = Field::zeros(&g);
    let mut r = common::rng(6);
    let (lp, _) = lambda_map(
        &setup,
        &common::random_profile(&g, &mut r),
        &z,
        &z,
        &HumConfig::default(),
        None,
    )
    .unwrap();
    assert_eq!(lp.max_abs(), 0.0);
}
