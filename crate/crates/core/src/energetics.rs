//! Discrete free energy, mass and the modified energy that the
//! double-stabilized scheme dissipates.

use crate::error::{Error, Result};
use crate::grid::{self, RealField};
use crate::kernel::{self, Kernel};

/// One row of a diagnostics time series.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    /// `<phi, 1>`.
    pub mass: f64,
    /// Original discrete energy `E_N`.
    pub energy: f64,
    /// Modified energy; present only when `M0` is known and two earlier
    /// states of the same step size exist.
    pub modified_energy: Option<f64>,
    pub linf: f64,
    pub min: f64,
    pub max: f64,
    pub dt: f64,
}

/// Constants of the modified energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParams {
    pub epsilon: f64,
    /// Bound on `|phi|` and `|phi_t|` entering the increment weights.
    pub m0: f64,
    pub a0: f64,
    pub a1: f64,
}

impl EnergyParams {
    pub fn new(epsilon: f64, m0: f64, a0: f64, a1: f64) -> Result<Self> {
        if !(m0.is_finite() && m0 > 0.0) {
            return Err(Error::config(format!("M0 = {m0} must be positive")));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::config(format!("epsilon = {epsilon} must be positive")));
        }
        Ok(EnergyParams { epsilon, m0, a0, a1 })
    }
}

/// Double-well density `F(phi) = (phi^2 - 1)^2 / 4`.
pub fn double_well(v: f64) -> f64 {
    let s = v * v - 1.0;
    0.25 * s * s
}

/// `E_N(phi) = <F(phi), 1> + eps^2/2 <phi, L_N phi>`.
pub fn energy(phi: &RealField, kernel: &Kernel, epsilon: f64) -> Result<f64> {
    let nl = kernel::nonlocal_apply(kernel, phi)?;
    let w = phi.grid().cell_area();
    let bulk = w * phi.values().iter().map(|&v| double_well(v)).sum::<f64>();
    Ok(bulk + 0.5 * epsilon * epsilon * grid::inner(phi, &nl)?)
}

/// Energy from the unnormalized spectrum of `phi`, reusing a transform the
/// caller already holds.
pub(crate) fn energy_from_spectrum(
    values: &[f64],
    spec: &[num_complex::Complex64],
    kernel: &Kernel,
    epsilon: f64,
) -> f64 {
    let g = kernel.grid();
    let w = g.cell_area();
    let bulk = w * values.iter().map(|&v| double_well(v)).sum::<f64>();
    let quad: f64 = spec
        .iter()
        .zip(kernel.symbol_table())
        .map(|(c, s)| s * c.norm_sqr())
        .sum::<f64>()
        * w
        / g.len() as f64;
    bulk + 0.5 * epsilon * epsilon * quad
}

/// `<phi, 1> = h1 h2 sum phi`.
pub fn mass(phi: &RealField) -> f64 {
    phi.grid().cell_area() * phi.values().iter().sum::<f64>()
}

/// Increment corrections of the modified energy (everything except `E_N(phi_next)`).
pub(crate) fn modified_energy_correction(
    next: &[f64],
    curr: &[f64],
    prev: &[f64],
    cell_area: f64,
    j_star_one: f64,
    ep: &EnergyParams,
    dt: f64,
) -> f64 {
    let mut incr_sq = 0.0;
    let mut cubic = 0.0;
    for ((&a, &b), &c) in next.iter().zip(curr).zip(prev) {
        let d = a - b;
        let d2 = d * d;
        let mid = 0.5 * (a + b);
        let extrap = 1.5 * b - 0.5 * c;
        incr_sq += d2;
        cubic += (mid * mid + mid * extrap + extrap * extrap) * d2;
    }
    incr_sq *= cell_area;
    cubic *= cell_area;
    let eps2 = ep.epsilon * ep.epsilon;
    let weight = 27.0 / 8.0 * ep.m0 * ep.m0 * dt + ep.a0 / 2.0 + 0.25 + eps2 * j_star_one / 8.0;
    weight * incr_sq - 0.25 * cubic
}

/// Modified energy of three consecutive states `(phi^{n+1}, phi^n, phi^{n-1})`:
///
/// ```text
/// E_N(phi^{n+1}) + 27/8 M0^2 dt ||d||^2 + (A0/2 + 1/4 + eps^2 (J*1)/8) ||d||^2
///     - 1/4 < m^2 + m b + b^2, d^2 >
/// ```
///
/// with `d = phi^{n+1} - phi^n`, `m = (phi^{n+1} + phi^n)/2` and
/// `b = 3/2 phi^n - 1/2 phi^{n-1}`.
pub fn modified_energy(
    next: &RealField,
    curr: &RealField,
    prev: &RealField,
    kernel: &Kernel,
    ep: &EnergyParams,
    dt: f64,
) -> Result<f64> {
    next.check_same_grid(curr)?;
    next.check_same_grid(prev)?;
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt = {dt} must be positive")));
    }
    let e = energy(next, kernel, ep.epsilon)?;
    let corr = modified_energy_correction(
        next.values(),
        curr.values(),
        prev.values(),
        next.grid().cell_area(),
        kernel.j_star_one(),
        ep,
        dt,
    );
    Ok(e + corr)
}

/// Runtime surrogate for `M0`: `1 + max_k (||phi^k||_inf + ||(phi^k - phi^{k-1})/dt||_inf)`.
pub fn estimate_m0(history: &[RealField], dt: f64) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::config(format!(
            "M0 estimate needs at least two states, got {}",
            history.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt = {dt} must be positive")));
    }
    let mut best: f64 = history[0].linf();
    for pair in history.windows(2) {
        let rate = pair[1].sub(&pair[0])?.linf() / dt;
        best = best.max(pair[1].linf() + rate);
    }
    Ok(1.0 + best)
}

impl EnergyRecord {
    pub(crate) fn observe(phi: &RealField, t: f64, dt: f64, energy: f64, modified: Option<f64>) -> Self {
        EnergyRecord {
            t,
            mass: mass(phi),
            energy,
            modified_energy: modified,
            linf: phi.linf(),
            min: phi.min(),
            max: phi.max(),
            dt,
        }
    }
}
