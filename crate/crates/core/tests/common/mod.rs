#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nch::energetics::EnergyParams;
use nch::grid::{Grid, RealField};
use nch::rng::XorShift64Star;
use num_complex::Complex64;

pub fn random_field(grid: &Arc<Grid>, seed: u64, amp: f64) -> RealField {
    let mut r = XorShift64Star::new(seed);
    let values = (0..grid.len()).map(|_| r.uniform(-amp, amp)).collect();
    RealField::new(grid.clone(), values).unwrap()
}

pub fn sine_bump(grid: &Arc<Grid>) -> RealField {
    RealField::from_fn(grid.clone(), |x, y| 0.5 * (PI * x).sin() * (PI * y).sin() + 0.1)
}

/// Naive separable 2-D DFT, `sign = -1` forward (unnormalized), `+1` inverse.
pub fn dft2(v: &[Complex64], n1: usize, n2: usize, sign: f64) -> Vec<Complex64> {
    let mut rows = vec![Complex64::default(); n1 * n2];
    for i in 0..n1 {
        for l in 0..n2 {
            let mut s = Complex64::default();
            for j in 0..n2 {
                let ang = sign * 2.0 * PI * (l * j % n2) as f64 / n2 as f64;
                s += v[i * n2 + j] * Complex64::from_polar(1.0, ang);
            }
            rows[i * n2 + l] = s;
        }
    }
    let mut out = vec![Complex64::default(); n1 * n2];
    for k in 0..n1 {
        for l in 0..n2 {
            let mut s = Complex64::default();
            for i in 0..n1 {
                let ang = sign * 2.0 * PI * (k * i % n1) as f64 / n1 as f64;
                s += rows[i * n2 + l] * Complex64::from_polar(1.0, ang);
            }
            out[k * n2 + l] = s;
        }
    }
    out
}

pub fn signed(a: usize, n: usize) -> f64 {
    if a <= n / 2 {
        a as f64
    } else {
        a as f64 - n as f64
    }
}

/// Second-order scheme without the `A1` term, written as
/// `(phi+ - phi)/dt = Delta mu`, `mu = N - phi_breve + eps^2 L(3/4 phi+ + 1/4 phi-) + A0 (phi+ - 2 phi + phi-)`,
/// with its own kernel table, wavenumbers and transforms.
pub fn reference_step_a1_zero(
    grid: &Grid,
    eps: f64,
    delta: f64,
    a0: f64,
    dt: f64,
    prev: &[f64],
    curr: &[f64],
) -> Vec<f64> {
    let (n1, n2) = (grid.n1(), grid.n2());
    let (h1, h2) = (2.0 * grid.x1() / n1 as f64, 2.0 * grid.x2() / n2 as f64);
    let wrap = |a: usize, n: usize| -> f64 {
        let a = a as i64;
        let n = n as i64;
        ((a + n / 2 - 1).rem_euclid(n) - (n / 2 - 1)) as f64
    };
    let gauss = |x: f64, half: f64| -> f64 {
        (-1..=1)
            .map(|p| {
                let d = x - 2.0 * half * p as f64;
                (-(d * d) / (delta * delta)).exp()
            })
            .sum::<f64>()
    };
    let c = 4.0 / (PI * delta.powi(4));
    let table: Vec<Complex64> = (0..n1 * n2)
        .map(|idx| {
            let x = wrap(idx / n2, n1) * h1;
            let y = wrap(idx % n2, n2) * h2;
            Complex64::new(c * gauss(x, grid.x1()) * gauss(y, grid.x2()), 0.0)
        })
        .collect();
    let j_hat = dft2(&table, n1, n2, -1.0);
    let j1 = h1 * h2 * table.iter().map(|z| z.re).sum::<f64>();
    let to_c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let nl: Vec<f64> = curr
        .iter()
        .zip(prev)
        .map(|(&b, &q)| 1.5 * b * b * b - 0.5 * q * q * q - (1.5 * b - 0.5 * q))
        .collect();
    let nl_hat = dft2(&to_c(&nl), n1, n2, -1.0);
    let c_hat = dft2(&to_c(curr), n1, n2, -1.0);
    let p_hat = dft2(&to_c(prev), n1, n2, -1.0);
    let mut next_hat = vec![Complex64::default(); n1 * n2];
    for a in 0..n1 {
        for b in 0..n2 {
            let idx = a * n2 + b;
            let kx = PI * signed(a, n1) / grid.x1();
            let ky = PI * signed(b, n2) / grid.x2();
            let lam = kx * kx + ky * ky;
            let sigma = j1 - h1 * h2 * j_hat[idx].re;
            let lhs = 1.0 / dt + lam * (0.75 * eps * eps * sigma + a0);
            let rhs = c_hat[idx] / dt
                - lam * (nl_hat[idx] + 0.25 * eps * eps * sigma * p_hat[idx] + a0 * (-2.0 * c_hat[idx] + p_hat[idx]));
            next_hat[idx] = rhs / lhs;
        }
    }
    let n = (n1 * n2) as f64;
    dft2(&next_hat, n1, n2, 1.0).iter().map(|z| z.re / n).collect()
}

/// Gaussian summed over `(2P+1)^2` translates, evaluated straight from the formula.
pub fn gaussian_images(x: f64, y: f64, grid: &Grid, delta: f64, p: i64) -> f64 {
    let mut s = 0.0;
    for a in -p..=p {
        for b in -p..=p {
            let dx = x - 2.0 * grid.x1() * a as f64;
            let dy = y - 2.0 * grid.x2() * b as f64;
            s += (-(dx * dx + dy * dy) / (delta * delta)).exp();
        }
    }
    4.0 / (PI * delta.powi(4)) * s
}

/// Wraps an index difference into the centered range `(-N/2, N/2]`.
pub fn wrap(d: i64, n: usize) -> i64 {
    let n = n as i64;
    (d + n / 2 - 1).rem_euclid(n) - (n / 2 - 1)
}

/// `(J*phi)_ij = h1 h2 sum_pq J(x_i - x_p, y_j - y_q) phi_pq` with the kernel
/// evaluated from its formula at the wrapped displacement.
pub fn direct_convolution(grid: &Arc<Grid>, delta: f64, phi: &RealField) -> RealField {
    let (n1, n2) = (grid.n1(), grid.n2());
    let table: Vec<f64> = (0..n1 * n2)
        .map(|idx| {
            let (a, b) = (idx / n2, idx % n2);
            let dx = wrap(a as i64, n1) as f64 * grid.h1();
            let dy = wrap(b as i64, n2) as f64 * grid.h2();
            gaussian_images(dx, dy, grid, delta, 1)
        })
        .collect();
    let mut out = vec![0.0; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            let mut s = 0.0;
            for p in 0..n1 {
                for q in 0..n2 {
                    let a = (i + n1 - p) % n1;
                    let b = (j + n2 - q) % n2;
                    s += table[a * n2 + b] * phi.at(p, q);
                }
            }
            out[i * n2 + j] = grid.cell_area() * s;
        }
    }
    RealField::new(grid.clone(), out).unwrap()
}

/// Modified energy by explicit loops over the nodes, with the convolution
/// done as a direct sum over the kernel samples.
pub fn modified_energy_direct(
    next: &RealField,
    curr: &RealField,
    prev: &RealField,
    samples: &RealField,
    ep: &EnergyParams,
    dt: f64,
) -> f64 {
    let g = next.grid();
    let (n1, n2) = (g.n1(), g.n2());
    let w = g.h1() * g.h2();
    // sample storage s holds the displacement (s + 1 - N/2) h
    let kernel_at = |di: i64, dj: i64| -> f64 {
        let si = (di + n1 as i64 / 2 - 1).rem_euclid(n1 as i64) as usize;
        let sj = (dj + n2 as i64 / 2 - 1).rem_euclid(n2 as i64) as usize;
        samples.at(si, sj)
    };
    let mut j1 = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            j1 += w * samples.at(i, j);
        }
    }
    let (mut bulk, mut quad, mut inc, mut cubic) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n1 {
        for j in 0..n2 {
            let v = next.at(i, j);
            let mut conv = 0.0;
            for p in 0..n1 {
                for q in 0..n2 {
                    conv += w * kernel_at(i as i64 - p as i64, j as i64 - q as i64) * next.at(p, q);
                }
            }
            bulk += 0.25 * (v * v - 1.0) * (v * v - 1.0);
            quad += v * (j1 * v - conv);
            let d = v - curr.at(i, j);
            let m = 0.5 * (v + curr.at(i, j));
            let b = 1.5 * curr.at(i, j) - 0.5 * prev.at(i, j);
            inc += d * d;
            cubic += (m * m + m * b + b * b) * d * d;
        }
    }
    let e = w * bulk + 0.5 * ep.epsilon * ep.epsilon * w * quad;
    let coef = 27.0 / 8.0 * ep.m0 * ep.m0 * dt + ep.a0 / 2.0 + 0.25 + ep.epsilon * ep.epsilon * j1 / 8.0;
    e + coef * w * inc - 0.25 * w * cubic
}

