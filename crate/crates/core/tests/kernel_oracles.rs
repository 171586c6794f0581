mod common;

use std::f64::consts::PI;

use nch::energetics::{double_well, energy};
use nch::grid::{inner, Grid, RealField};
use nch::kernel::{build_kernel, convolution_bound, convolve, nonlocal_apply, verify_conditions, Kernel};
use proptest::prelude::*;

use common::*;

#[test]
fn samples_match_formula_at_nodes() {
    let g = Grid::new(1.0, 0.75, 16, 12).unwrap();
    let k = build_kernel(0.3, &g, 1).unwrap();
    for i in 0..g.n1() {
        for j in 0..g.n2() {
            let expect = gaussian_images(g.node_x(i), g.node_y(j), &g, 0.3, 1);
            let got = k.samples().at(i, j);
            assert!((got - expect).abs() <= 1e-14 * expect.max(1.0), "({i},{j}) {got} {expect}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn spectral_convolution_matches_direct_sum(seed in any::<u64>(), delta in 0.15f64..0.6) {
        let g = Grid::square(1.0, 16).unwrap();
        let k = build_kernel(delta, &g, 1).unwrap();
        let phi = random_field(&g, seed, 1.0);
        let fast = convolve(&k, &phi).unwrap();
        let slow = direct_convolution(&g, delta, &phi);
        let err = fast.sub(&slow).unwrap().linf();
        prop_assert!(err <= 1e-12 * slow.linf().max(1.0), "{err}");
    }

    #[test]
    fn convolution_is_symmetric(seed in any::<u64>(), delta in 0.05f64..0.5) {
        let g = Grid::new(1.0, 2.0, 32, 16).unwrap();
        let k = build_kernel(delta, &g, 1).unwrap();
        let (phi, psi) = (random_field(&g, seed, 1.0), random_field(&g, seed.wrapping_add(1), 1.0));
        let a = inner(&convolve(&k, &phi).unwrap(), &psi).unwrap();
        let b = inner(&phi, &convolve(&k, &psi).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-11 * a.abs().max(b.abs()).max(1.0), "{a} vs {b}");
    }

    #[test]
    fn nonlocal_operator_is_symmetric_and_nonnegative(seed in any::<u64>(), delta in 0.05f64..0.5) {
        let g = Grid::square(1.0, 32).unwrap();
        let k = build_kernel(delta, &g, 1).unwrap();
        let (phi, psi) = (random_field(&g, seed, 1.0), random_field(&g, !seed, 1.0));
        let lphi = nonlocal_apply(&k, &phi).unwrap();
        let a = inner(&lphi, &psi).unwrap();
        let b = inner(&phi, &nonlocal_apply(&k, &psi).unwrap()).unwrap();
        let scale = k.j_star_one() * g.area();
        prop_assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        let q = inner(&phi, &lphi).unwrap();
        prop_assert!(q >= -1e-10 * k.j_star_one() * inner(&phi, &phi).unwrap());
        prop_assert!(lphi.mean().abs() <= 1e-12 * k.j_star_one() * phi.linf());
    }

    #[test]
    fn nonlocal_energy_matches_direct_sum(seed in any::<u64>()) {
        let g = Grid::square(1.0, 16).unwrap();
        let (delta, eps) = (0.25, 0.3);
        let k = build_kernel(delta, &g, 1).unwrap();
        let phi = random_field(&g, seed, 1.0);
        let conv = direct_convolution(&g, delta, &phi);
        let j1 = direct_convolution(&g, delta, &RealField::constant(g.clone(), 1.0)).at(0, 0);
        let w = g.cell_area();
        let mut quad = 0.0;
        let mut bulk = 0.0;
        for (idx, &v) in phi.values().iter().enumerate() {
            quad += v * (j1 * v - conv.values()[idx]);
            bulk += double_well(v);
        }
        let expect = w * bulk + 0.5 * eps * eps * w * quad;
        let got = energy(&phi, &k, eps).unwrap();
        prop_assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{got} vs {expect}");
    }

    #[test]
    fn convolution_bound_holds(seed in any::<u64>()) {
        let g = Grid::square(1.0, 32).unwrap();
        let k = build_kernel(0.1, &g, 1).unwrap();
        let (phi, psi) = (random_field(&g, seed, 1.0), random_field(&g, seed ^ 0xABCD, 1.0));
        for alpha in [0.1, 1.0, 10.0] {
            let b = convolution_bound(&k, &phi, &psi, alpha).unwrap();
            prop_assert!(b.lhs <= b.rhs, "alpha {alpha}: {} > {}", b.lhs, b.rhs);
            prop_assert!(b.margin >= 0.0);
        }
    }
}

#[test]
fn single_mode_is_an_eigenfunction() {
    let g = Grid::new(1.0, 1.5, 32, 24).unwrap();
    let k = build_kernel(0.1, &g, 1).unwrap();
    let (kx, ly) = (3, -2);
    let f = RealField::from_fn(g.clone(), |x, y| (PI * (kx as f64) * x / g.x1() + PI * (ly as f64) * y / g.x2()).cos());
    let lf = nonlocal_apply(&k, &f).unwrap();
    let expect = f.scale(k.symbol(kx, ly));
    assert!(lf.sub(&expect).unwrap().linf() <= 1e-12 * k.j_star_one());
    assert!((k.symbol(kx, ly) - k.symbol(-kx, -ly)).abs() <= 1e-13 * k.j_star_one());
}

#[test]
fn resolved_kernel_facts() {
    let g = Grid::square(1.0, 512).unwrap();
    let k1 = build_kernel(0.05, &g, 1).unwrap();
    let rep = verify_conditions(&k1, Some(0.1));
    assert!((rep.j_star_one - 1600.0).abs() <= 1.6e-3);
    assert!((rep.second_moment - 2.0).abs() <= 1e-3);
    assert!(rep.min_sample >= 0.0);
    assert_eq!(rep.evenness_residual, 0.0);
    assert!(rep.max_symbol_negativity <= 1e-10 * rep.j_star_one);
    assert!((rep.gamma0.unwrap() - 15.0).abs() < 1e-9);

    let k2 = build_kernel(0.05, &g, 2).unwrap();
    let max = k1.samples().max();
    let diff = k1.samples().sub(k2.samples()).unwrap().linf();
    assert!(diff <= 1e-14 * max, "{diff}");
}

#[test]
fn gamma0_examples() {
    let g = Grid::square(1.0, 1024).unwrap();
    let k = build_kernel(0.005, &g, 1).unwrap();
    let rep = verify_conditions(&k, Some(0.04));
    // 0.0016 * 160000 - 1; with 0.2 grid points per delta the sum is only
    // near the continuum value, so check the continuum column exactly.
    assert!((rep.gamma0_continuum.unwrap() - 255.0).abs() < 1e-9);
    let g = Grid::square(1.0, 256).unwrap();
    let k = build_kernel(0.2, &g, 1).unwrap();
    let rep = verify_conditions(&k, Some(0.1));
    assert_eq!(rep.gamma0_continuum, Some(0.0));
    assert_eq!(rep.positivity_holds, Some(false));
    assert!(rep.gamma0.unwrap().abs() < 1e-12);
}

#[test]
fn user_samples_must_be_even_and_nonnegative() {
    let g = Grid::square(1.0, 8).unwrap();
    let k = build_kernel(0.3, &g, 1).unwrap();
    assert!(Kernel::from_samples(k.samples().clone(), 0.3).is_ok());
    let mut v = k.samples().values().to_vec();
    v[3] += 1.0;
    let odd = RealField::new(g.clone(), v).unwrap();
    assert!(Kernel::from_samples(odd, 0.3).is_err());
    let neg = k.samples().map(|x| -x);
    assert!(Kernel::from_samples(neg, 0.3).is_err());
}
