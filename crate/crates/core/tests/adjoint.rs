mod common;

use proptest::prelude::*;
use twosex::adjoint::{
    characteristic_oracle, duality_gap, solve_adjoint, solve_adjoint_with, AdjointProblem, AdjointVariant, Fault,
};
use twosex::forward::{Coupling, ForwardInputs, Scheme};
use twosex::{Field, Grid, RateTable, SpaceTime};

fn gap_for(g: &Grid, seed: u64, fault: Fault) -> f64 {
    let mut r = common::rng(seed);
    let mut rates = RateTable::reference();
    rates.sex_ratio = 0.3;
    let scheme = Scheme::new(&rates, g).unwrap();
    let p = common::random_profile(g, &mut r);
    let (m0, f0) = (common::random_field(g, &mut r), common::random_field(g, &mut r));
    let (vm, vf) = (common::random_control(g, &mut r), common::random_control(g, &mut r));
    let (nt, lt) = (common::random_field(g, &mut r), common::random_field(g, &mut r));
    let fwd = scheme
        .run(
            &ForwardInputs {
                initial_m: Some(&m0),
                initial_f: Some(&f0),
                control_m: Some(&vm),
                control_f: Some(&vf),
                skip_male: false,
            },
            &Coupling::Frozen(p.clone()),
        )
        .unwrap();
    let adj = solve_adjoint_with(&scheme, &p, Some(&nt), Some(&lt), fault).unwrap();
    duality_gap(g, &fwd, Some(&vm), Some(&vf), &adj).unwrap().relative()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn duality_identity_holds(seed in any::<u64>()) {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        prop_assert!(gap_for(&g, seed, Fault::None) <= 1e-12);
    }

    #[test]
    fn adjoint_is_linear(seed in any::<u64>(), alpha in -2.0..2.0f64) {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let mut r = common::rng(seed);
        let scheme = Scheme::new(&RateTable::reference(), &g).unwrap();
        let p = common::random_profile(&g, &mut r);
        let fields: Vec<Field> = (0..4).map(|_| common::random_field(&g, &mut r)).collect();
        let a = solve_adjoint(&scheme, &p, Some(&fields[0]), Some(&fields[1])).unwrap();
        let b = solve_adjoint(&scheme, &p, Some(&fields[2]), Some(&fields[3])).unwrap();
        let mut n = fields[0].scaled(alpha); n.axpy(1.0, &fields[2]);
        let mut l = fields[1].scaled(alpha); l.axpy(1.0, &fields[3]);
        let c = solve_adjoint(&scheme, &p, Some(&n), Some(&l)).unwrap();
        let scale = c.n.l2_norm(&g) + c.l.l2_norm(&g) + 1.0;
        for k in 0..=g.nt {
            for (x, (y, z)) in c.l.slices[k].data().iter().zip(a.l.slices[k].data().iter().zip(b.l.slices[k].data())) {
                prop_assert!((x - (alpha * y + z)).abs() <= 1e-12 * scale);
            }
            for (x, (y, z)) in c.n.slices[k].data().iter().zip(a.n.slices[k].data().iter().zip(b.n.slices[k].data())) {
                prop_assert!((x - (alpha * y + z)).abs() <= 1e-12 * scale);
            }
        }
    }
}

#[test]
fn duality_holds_on_the_larger_grid() {
    let g = Grid::new(32, 40, 1.0, 0.6).unwrap();
    assert_eq!(g.nt, 24);
    for seed in 0..4 {
        assert!(gap_for(&g, seed, Fault::None) <= 1e-12);
    }
}

#[test]
fn a_non_transposed_step_breaks_duality() {
    let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
    for fault in [Fault::SwappedShares, Fault::MisalignedSurvival { step: 3 }] {
        assert!(gap_for(&g, 11, fault) > 1e-6, "{fault:?}");
    }
}

#[test]
fn male_adjoint_vanishes_where_characteristics_left_through_max_age() {
    let g = Grid::new(8, 20, 1.0, 0.5).unwrap();
    let scheme = Scheme::new(&RateTable::reference(), &g).unwrap();
    let mut r = common::rng(5);
    let sol = solve_adjoint(
        &scheme,
        &common::random_profile(&g, &mut r),
        Some(&common::random_field(&g, &mut r)),
        None,
    )
    .unwrap();
    for k in 0..g.nt {
        let d = g.nt - k;
        for i in 0..=g.na {
            if i + d >= g.na {
                assert!(sol.n.slices[k].row(i).iter().all(|&v| v == 0.0), "k={k} i={i}");
            }
        }
    }
}

#[test]
fn female_only_matches_cascade_with_zero_male_datum() {
    let g = Grid::new(8, 10, 1.0, 0.6).unwrap();
    let mut r = common::rng(9);
    let p = common::random_profile(&g, &mut r);
    let lt = common::random_field(&g, &mut r);
    let rates = RateTable::reference();
    let problem = |variant, n: Field| AdjointProblem {
        rates: rates.clone(),
        grid: g,
        frozen_p: p.clone(),
        final_n: n,
        final_l: lt.clone(),
        variant,
    };
    let female = problem(AdjointVariant::FemaleOnly, common::random_field(&g, &mut r))
        .solve()
        .unwrap();
    let cascade = problem(AdjointVariant::Cascade, Field::zeros(&g)).solve().unwrap();
    assert_eq!(female.l, cascade.l);
    assert_eq!(female.l_observed, cascade.l_observed);
    assert!(female.n.is_zero());
}

#[test]
fn male_only_requires_vanishing_young_datum() {
    let g = Grid::new(4, 10, 1.0, 0.5).unwrap();
    let mut young = Field::zeros(&g);
    young.set(1, 0, 1.0);
    let mut problem = AdjointProblem {
        rates: RateTable::reference(),
        grid: g,
        frozen_p: SpaceTime::zeros(&g),
        final_n: young,
        final_l: Field::zeros(&g),
        variant: AdjointVariant::MaleOnly { rho: 0.25 },
    };
    assert!(problem.solve().is_err());
    problem.final_n = Field::from_fn(&g, |x, a| if a > 0.25 { x } else { 0.0 });
    assert!(problem.solve().is_ok());
}

#[test]
fn zero_final_data_give_zero() {
    let g = Grid::new(6, 10, 1.0, 0.5).unwrap();
    let scheme = Scheme::new(&RateTable::reference(), &g).unwrap();
    let z = Field::zeros(&g);
    let sol = solve_adjoint(&scheme, &SpaceTime::constant(&g, 1.0), Some(&z), Some(&z)).unwrap();
    assert!(sol.n.is_zero() && sol.l.is_zero());
}

/// Oracle error at `t = T/2` against the solver, on grids with `dt` halved.
fn oracle_errors(levels: &[usize]) -> Vec<f64> {
    levels
        .iter()
        .map(|&na| {
            let g = Grid::new(31, na, 1.0, 0.5).unwrap();
            let rates = RateTable::reference();
            let scheme = Scheme::new(&rates, &g).unwrap();
            let nt = Field::from_fn(&g, |x, a| {
                let s = std::f64::consts::PI * x;
                (s.sin() + 0.5 * (3.0 * s).sin()) * twosex::obslab::bump(a, 0.3, 0.95)
            });
            let sol = solve_adjoint(&scheme, &SpaceTime::zeros(&g), Some(&nt), None).unwrap();
            let k = g.nt / 2;
            let oracle = characteristic_oracle(&rates, &g, &nt, &[k]).unwrap().remove(0);
            let mut e = sol.n.slices[k].clone();
            e.axpy(-1.0, &oracle);
            e.norm(&g)
        })
        .collect()
}

#[test]
fn characteristic_oracle_converges_at_first_order() {
    let e = oracle_errors(&[20, 40, 80]);
    for w in e.windows(2) {
        assert!(w[1] < w[0]);
        assert!((w[0] / w[1]).log2() >= 0.9, "{e:?}");
    }
}

#[test]
fn oracle_is_identity_at_final_time() {
    let g = Grid::new(6, 10, 1.0, 0.5).unwrap();
    let mut r = common::rng(1);
    let nt = common::random_field(&g, &mut r);
    let out = characteristic_oracle(&RateTable::reference(), &g, &nt, &[g.nt]).unwrap();
    assert_eq!(out[0], nt);
}
