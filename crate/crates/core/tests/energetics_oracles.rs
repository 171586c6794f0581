mod common;


use nch::energetics::{energy, estimate_m0, mass, modified_energy, EnergyParams};
use nch::experiments::{coarsening_run, CoarseningConfig};
use nch::grid::{inner, Grid, RealField};
use nch::integrators::Schedule;
use nch::kernel::build_kernel;
use proptest::prelude::*;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn modified_energy_dual_implementation(seed in any::<u64>(), m0 in 1.0f64..3.0, dt in 1e-3f64..0.1) {
        let g = Grid::new(1.0, 1.5, 4, 4).unwrap();
        let k = build_kernel(0.6, &g, 1).unwrap();
        let ep = EnergyParams::new(0.5, m0, 2.0, 5.0).unwrap();
        let prev = random_field(&g, seed, 1.0);
        let curr = random_field(&g, seed.wrapping_mul(3), 1.0);
        let next = random_field(&g, seed.wrapping_mul(7), 1.0);
        let a = modified_energy(&next, &curr, &prev, &k, &ep, dt).unwrap();
        let b = modified_energy_direct(&next, &curr, &prev, k.samples(), &ep, dt);
        prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn energy_is_bounded_below(seed in any::<u64>(), amp in 0.01f64..3.0) {
        let g = Grid::square(2.0, 32).unwrap();
        let k = build_kernel(0.1, &g, 1).unwrap();
        let phi = random_field(&g, seed, amp);
        let e = energy(&phi, &k, 0.1).unwrap();
        prop_assert!(e >= -1e-10 * (1.0 + inner(&phi, &phi).unwrap()));
    }

    #[test]
    fn modified_energy_dominates_energy_for_bounded_states(seed in any::<u64>()) {
        let g = Grid::square(1.0, 16).unwrap();
        let k = build_kernel(0.2, &g, 1).unwrap();
        let ep = EnergyParams::new(0.2, 1.0, 2.0, 5.0).unwrap();
        let prev = random_field(&g, seed, 1.0);
        let curr = random_field(&g, !seed, 1.0);
        let next = random_field(&g, seed ^ 0x5555, 1.0);
        let e = energy(&next, &k, 0.2).unwrap();
        let em = modified_energy(&next, &curr, &prev, &k, &ep, 0.01).unwrap();
        prop_assert!(em >= e);
    }
}

#[test]
fn constant_state_energy() {
    let g = Grid::square(1.0, 16).unwrap();
    let k = build_kernel(0.2, &g, 1).unwrap();
    for c in [0.0, 0.5, 1.0, -1.3] {
        let phi = RealField::constant(g.clone(), c);
        let expect = g.area() * 0.25 * (c * c - 1.0_f64).powi(2);
        assert!((energy(&phi, &k, 0.1).unwrap() - expect).abs() < 1e-13);
        assert!((mass(&phi) - 4.0 * c).abs() < 1e-13);
    }
}

#[test]
fn m0_of_a_known_pair() {
    let g = Grid::square(1.0, 8).unwrap();
    let a = RealField::from_fn(g.clone(), |x, y| 0.5 * x * y);
    let b = a.map(|v| v + 0.01);
    // max |b| = 0.5 + 0.01 at (1, 1); |b - a| / dt = 0.01 / 0.005 = 2
    let m0 = estimate_m0(&[a.clone(), b], 0.005).unwrap();
    assert!((m0 - (1.0 + 0.51 + 2.0)).abs() < 1e-12, "{m0}");
    assert!(estimate_m0(&[a], 0.005).is_err());
}

/// Short random-data run with a consistent `M0`: the modified energy never
/// falls below the original one and never increases.
#[test]
fn trajectory_scan() {
    let sched = Schedule::uniform(0.5, 1e-3).unwrap();
    let mut cfg = CoarseningConfig::new(64, 0.1, 0.1, sched, 5);
    cfg.x1 = 2.0;
    cfg.x2 = 2.0;
    cfg.record_every = 1;
    cfg.m0 = Some(2.0);
    let out = coarsening_run(&cfg).unwrap();
    assert!(out.failure.is_none());
    let mut last = f64::INFINITY;
    for r in &out.records {
        assert!((r.mass - out.records[0].mass).abs() <= 1e-12);
        if let Some(em) = r.modified_energy {
            assert!(em >= r.energy);
            assert!(em <= last + 1e-10 * (1.0 + last.abs()), "t = {}", r.t);
            last = em;
        }
    }
}
