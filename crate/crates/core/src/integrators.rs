//! Linear, double-stabilized, second-order time stepping.
//!
//! Given `phi^{n-1}` and `phi^n`, the stepper finds `phi^{n+1}` from
//!
//! ```text
//! (phi^{n+1} - phi^n)/dt = Delta_N( 3/2 (phi^n)^3 - 1/2 (phi^{n-1})^3 - (3/2 phi^n - 1/2 phi^{n-1})
//!                                  + A0 (phi^{n+1} - 2 phi^n + phi^{n-1})
//!                                  + A1 dt (phi^{n+1} - phi^n)
//!                                  + eps^2 L_N (3/4 phi^{n+1} + 1/4 phi^{n-1}) )
//! ```
//!
//! Every implicit term is a Fourier multiplier, so each step is two FFTs and a
//! per-mode division. `A1 = 0` gives the single-stabilized variant.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energetics::{self, EnergyParams, EnergyRecord};
use crate::error::{Error, Result};
use crate::grid::{self, Grid, Norm, RealField};
use crate::kernel::{self, Kernel};

/// Any `|phi|` above this aborts a run.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// How `phi^1` is produced from `phi^0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    /// First-order stabilized semi-implicit step.
    FirstOrderStabilized,
    /// Explicit Heun step.
    Rk2,
}

/// Constants of the scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams {
    pub epsilon: f64,
    pub a0: f64,
    pub a1: f64,
    pub dt: f64,
    /// Evaluate the cubic term with 3/2-rule zero padding.
    pub dealias: bool,
    pub init_method: InitMethod,
    /// Stabilization constant of the first-order initializer.
    pub init_a: f64,
}

impl SchemeParams {
    /// Defaults to `A0 = 2`, `A1 = 5` and a first-order initializer with constant 2.
    pub fn new(epsilon: f64, dt: f64) -> Self {
        SchemeParams {
            epsilon,
            a0: 2.0,
            a1: 5.0,
            dt,
            dealias: false,
            init_method: InitMethod::FirstOrderStabilized,
            init_a: 2.0,
        }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        SchemeParams { dt, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {v} must be positive")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} = {v} must be nonnegative")))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("dt", self.dt)?;
        nonneg("A0", self.a0)?;
        nonneg("A1", self.a1)?;
        nonneg("init_A", self.init_a)
    }

    /// Warnings for stabilization constants below the energy-stability
    /// thresholds `A0 >= 3/2 M0^2`, `A1 >= 19/4 M0^2`.
    pub fn stability_warnings(&self, m0: f64) -> Vec<String> {
        let mut out = Vec::new();
        let m2 = m0 * m0;
        if self.a0 < 1.5 * m2 {
            out.push(format!("A0 = {} is below 3/2 M0^2 = {}", self.a0, 1.5 * m2));
        }
        if self.a1 < 4.75 * m2 {
            out.push(format!("A1 = {} is below 19/4 M0^2 = {}", self.a1, 4.75 * m2));
        }
        out
    }
}

/// Two-level history of the scheme.
#[derive(Clone, Debug)]
pub struct StepperState {
    pub phi_prev: RealField,
    pub phi_curr: RealField,
    pub t: f64,
    pub n: usize,
}

impl StepperState {
    pub fn new(phi_prev: RealField, phi_curr: RealField, t: f64, n: usize) -> Result<Self> {
        phi_prev.check_same_grid(&phi_curr)?;
        let (a, b) = (phi_prev.mean(), phi_curr.mean());
        if (a - b).abs() > 1e-12 * (1.0 + phi_prev.linf().max(phi_curr.linf())) {
            return Err(Error::domain(format!(
                "consecutive states carry different means ({a:e} vs {b:e})"
            )));
        }
        Ok(StepperState {
            phi_prev,
            phi_curr,
            t,
            n,
        })
    }
}

/// A field together with its unnormalized spectrum.
#[derive(Clone)]
struct Level {
    field: RealField,
    spec: Vec<Complex64>,
}

impl Level {
    fn from_field(field: RealField) -> Level {
        let spec = field.grid().spectrum_raw(field.values());
        Level { field, spec }
    }

    fn from_spec(grid: &Arc<Grid>, mut spec: Vec<Complex64>, t: f64) -> Result<Level> {
        grid.project_hermitian(&mut spec);
        let values = grid.values_from_raw(spec.clone());
        let field = RealField::from_vec(grid.clone(), values);
        check_divergence(&field, t)?;
        Ok(Level { field, spec })
    }
}

fn check_divergence(field: &RealField, t: f64) -> Result<()> {
    let linf = field.values().iter().fold(0.0f64, |m, v| {
        if v.is_finite() {
            m.max(v.abs())
        } else {
            f64::INFINITY
        }
    });
    if linf > DIVERGENCE_BOUND || !linf.is_finite() {
        return Err(Error::Divergence { t, linf });
    }
    Ok(())
}

/// Spectrum of `sum_i w_i phi_i^3`, by collocation or with 3/2-rule padding.
#[derive(Clone, Debug)]
struct CubicTerm {
    grid: Arc<Grid>,
    padded: Option<Arc<Grid>>,
    enabled: bool,
}

fn padded_size(n: usize) -> usize {
    let m = (3 * n).div_ceil(2);
    m + m % 2
}

impl CubicTerm {
    fn new(grid: &Arc<Grid>, dealias: bool) -> Result<Self> {
        let padded = if dealias {
            Some(Grid::new(
                grid.x1(),
                grid.x2(),
                padded_size(grid.n1()),
                padded_size(grid.n2()),
            )?)
        } else {
            None
        };
        Ok(CubicTerm {
            grid: grid.clone(),
            padded,
            enabled: true,
        })
    }

    fn spectrum(&self, terms: &[(f64, &Level)]) -> Vec<Complex64> {
        if !self.enabled {
            return vec![Complex64::default(); self.grid.len()];
        }
        match &self.padded {
            None => {
                let n = self.grid.len();
                let mut vals = vec![0.0; n];
                for (w, level) in terms {
                    for (acc, &v) in vals.iter_mut().zip(level.field.values()) {
                        *acc += w * v * v * v;
                    }
                }
                self.grid.spectrum_raw(&vals)
            }
            Some(pg) => self.padded_spectrum(pg, terms),
        }
    }

    fn padded_spectrum(&self, pg: &Arc<Grid>, terms: &[(f64, &Level)]) -> Vec<Complex64> {
        let g = &self.grid;
        let (n1, n2) = (g.n1(), g.n2());
        let inv_n = 1.0 / g.len() as f64;
        let mut vals = vec![0.0; pg.len()];
        for (w, level) in terms {
            let mut buf = vec![Complex64::default(); pg.len()];
            for (idx, &c) in level.spec.iter().enumerate() {
                let (k, l) = g.mode_of(idx);
                let c = c * inv_n;
                // Nyquist coefficients are split evenly between +N/2 and -N/2.
                let ks: &[i64] = if k == (n1 / 2) as i64 { &[k, -k] } else { &[k] };
                let ls: &[i64] = if l == (n2 / 2) as i64 { &[l, -l] } else { &[l] };
                let share = c / (ks.len() * ls.len()) as f64;
                for &kk in ks {
                    for &ll in ls {
                        buf[pg.mode_index(kk, ll)] += share;
                    }
                }
            }
            pg.inverse_raw(&mut buf);
            for (acc, c) in vals.iter_mut().zip(&buf) {
                let v = c.re;
                *acc += w * v * v * v;
            }
        }
        let spec = pg.spectrum_raw(&vals);
        let scale = g.len() as f64 / pg.len() as f64;
        let mut out = vec![Complex64::default(); g.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let (k, l) = g.mode_of(idx);
            let ks: &[i64] = if k == (n1 / 2) as i64 { &[k, -k] } else { &[k] };
            let ls: &[i64] = if l == (n2 / 2) as i64 { &[l, -l] } else { &[l] };
            let mut sum = Complex64::default();
            for &kk in ks {
                for &ll in ls {
                    sum += spec[pg.mode_index(kk, ll)];
                }
            }
            *o = sum * scale;
        }
        out
    }
}

fn check_positivity(params: &SchemeParams, kernel: &Kernel) -> Result<()> {
    let gamma0 = kernel::gamma0(kernel, params.epsilon);
    if gamma0 > 0.0 {
        Ok(())
    } else {
        Err(Error::ModelValidity { gamma0 })
    }
}

/// The second-order stepper with its per-mode implicit operator precomputed.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: SchemeParams,
    kernel: Arc<Kernel>,
    denom: Vec<f64>,
    cubic: CubicTerm,
}

/// Builds a stepper; fails when `gamma0 <= 0` or `grid` is not the kernel's grid.
pub fn build_stepper(params: SchemeParams, grid: &Arc<Grid>, kernel: Arc<Kernel>) -> Result<Stepper> {
    if !grid.same_as(kernel.grid()) {
        return Err(Error::Shape {
            expected: grid.describe(),
            found: kernel.grid().describe(),
        });
    }
    Stepper::new(params, kernel)
}

impl Stepper {
    pub fn new(params: SchemeParams, kernel: Arc<Kernel>) -> Result<Stepper> {
        params.validate()?;
        check_positivity(&params, &kernel)?;
        let grid = kernel.grid().clone();
        let eps2 = params.epsilon * params.epsilon;
        let stab = params.a0 + params.a1 * params.dt;
        let denom = grid
            .lambda_table()
            .iter()
            .zip(kernel.symbol_table())
            .map(|(&lam, &sig)| 1.0 / params.dt + lam * stab + 0.75 * eps2 * lam * sig)
            .collect();
        let cubic = CubicTerm::new(&grid, params.dealias)?;
        Ok(Stepper {
            params,
            kernel,
            denom,
            cubic,
        })
    }

    /// Drops the cubic term, leaving a linear scheme. Used to compare single
    /// modes against the closed-form recurrence.
    #[doc(hidden)]
    pub fn without_cubic_term(mut self) -> Self {
        self.cubic.enabled = false;
        self
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn kernel(&self) -> &Arc<Kernel> {
        &self.kernel
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.kernel.grid()
    }

    /// Implicit operator `1/dt + lambda (A0 + A1 dt) + 3/4 eps^2 lambda sigma` at mode `(k, l)`.
    pub fn denom(&self, k: i64, l: i64) -> f64 {
        self.denom[self.grid().mode_index(k, l)]
    }

    pub fn denom_table(&self) -> &[f64] {
        &self.denom
    }

    /// One step from `(phi^{n-1}, phi^n)` to `phi^{n+1}`.
    pub fn step_cn2(&self, st: &StepperState) -> Result<RealField> {
        st.phi_prev.check_same_grid(&st.phi_curr)?;
        self.kernel.samples().check_same_grid(&st.phi_curr)?;
        let prev = Level::from_field(st.phi_prev.clone());
        let curr = Level::from_field(st.phi_curr.clone());
        Ok(self.advance(&prev, &curr, st.t + self.params.dt)?.field)
    }

    fn advance(&self, prev: &Level, curr: &Level, t_next: f64) -> Result<Level> {
        let p = &self.params;
        let dt = p.dt;
        let eps2_4 = 0.25 * p.epsilon * p.epsilon;
        let nl = self.cubic.spectrum(&[(1.5, curr), (-0.5, prev)]);
        let lambda = self.grid().lambda_table();
        let sigma = self.kernel.symbol_table();
        let mut next = Vec::with_capacity(nl.len());
        next.push(curr.spec[0]);
        for idx in 1..nl.len() {
            let c = curr.spec[idx];
            let q = prev.spec[idx];
            let explicit = nl[idx] - (1.5 * c - 0.5 * q) - 2.0 * p.a0 * c + p.a0 * q
                - p.a1 * dt * c
                + eps2_4 * sigma[idx] * q;
            next.push((c / dt - lambda[idx] * explicit) / self.denom[idx]);
        }
        Level::from_spec(self.grid(), next, t_next)
    }

    /// `||LHS - RHS||_2` of the scheme for a candidate `phi_next`, assembled
    /// in physical space with `laplacian` and `nonlocal_apply`.
    pub fn residual(&self, phi_prev: &RealField, phi_curr: &RealField, phi_next: &RealField) -> Result<f64> {
        phi_prev.check_same_grid(phi_curr)?;
        phi_prev.check_same_grid(phi_next)?;
        self.kernel.samples().check_same_grid(phi_next)?;
        let p = &self.params;
        let g = self.grid();
        let cube: Vec<f64> = if !self.cubic.enabled {
            vec![0.0; g.len()]
        } else if self.cubic.padded.is_some() {
            let prev = Level::from_field(phi_prev.clone());
            let curr = Level::from_field(phi_curr.clone());
            g.values_from_raw(self.cubic.spectrum(&[(1.5, &curr), (-0.5, &prev)]))
        } else {
            phi_curr
                .values()
                .iter()
                .zip(phi_prev.values())
                .map(|(&c, &q)| 1.5 * c * c * c - 0.5 * q * q * q)
                .collect()
        };
        let blend = phi_next.zip_map(phi_prev, |a, b| 0.75 * a + 0.25 * b)?;
        let nonlocal = kernel::nonlocal_apply(&self.kernel, &blend)?;
        let eps2 = p.epsilon * p.epsilon;
        let n = g.len();
        let (a, b, c) = (phi_next.values(), phi_curr.values(), phi_prev.values());
        let mu: Vec<f64> = (0..n)
            .map(|i| {
                cube[i] - (1.5 * b[i] - 0.5 * c[i])
                    + p.a0 * (a[i] - 2.0 * b[i] + c[i])
                    + p.a1 * p.dt * (a[i] - b[i])
                    + eps2 * nonlocal.values()[i]
            })
            .collect();
        let lap = grid::laplacian(&RealField::from_vec(g.clone(), mu));
        let r: Vec<f64> = (0..n)
            .map(|i| (a[i] - b[i]) / p.dt - lap.values()[i])
            .collect();
        Ok(grid::norm(&RealField::from_vec(g.clone(), r), Norm::L2))
    }
}

fn first_order_level(params: &SchemeParams, kernel: &Kernel, cubic: &CubicTerm, phi0: &Level, t_next: f64) -> Result<Level> {
    let dt = params.dt;
    let a = params.init_a;
    let eps2 = params.epsilon * params.epsilon;
    let nl = cubic.spectrum(&[(1.0, phi0)]);
    let lambda = kernel.grid().lambda_table();
    let sigma = kernel.symbol_table();
    let mut next = Vec::with_capacity(nl.len());
    next.push(phi0.spec[0]);
    for idx in 1..nl.len() {
        let c = phi0.spec[idx];
        let lam = lambda[idx];
        let den = 1.0 / dt + lam * a + eps2 * lam * sigma[idx];
        next.push((c / dt - lam * (nl[idx] - c - a * c)) / den);
    }
    Level::from_spec(kernel.grid(), next, t_next)
}

fn rk2_level(params: &SchemeParams, kernel: &Kernel, cubic: &CubicTerm, phi0: &Level, t_next: f64) -> Result<Level> {
    let dt = params.dt;
    let eps2 = params.epsilon * params.epsilon;
    let lambda = kernel.grid().lambda_table();
    let sigma = kernel.symbol_table();
    let rate = |level: &Level| -> Vec<Complex64> {
        let nl = cubic.spectrum(&[(1.0, level)]);
        nl.iter()
            .zip(&level.spec)
            .enumerate()
            .map(|(idx, (&n, &c))| {
                if idx == 0 {
                    Complex64::default()
                } else {
                    -lambda[idx] * (n - c + eps2 * sigma[idx] * c)
                }
            })
            .collect()
    };
    let k1 = rate(phi0);
    let stage: Vec<Complex64> = phi0.spec.iter().zip(&k1).map(|(&c, &r)| c + dt * r).collect();
    let stage = Level::from_spec(kernel.grid(), stage, t_next)?;
    let k2 = rate(&stage);
    let next = phi0
        .spec
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(&c, (&r1, &r2))| c + 0.5 * dt * (r1 + r2))
        .collect();
    Level::from_spec(kernel.grid(), next, t_next)
}

fn init_level(params: &SchemeParams, kernel: &Kernel, cubic: &CubicTerm, phi0: &Level, t_next: f64) -> Result<Level> {
    match params.init_method {
        InitMethod::FirstOrderStabilized => first_order_level(params, kernel, cubic, phi0, t_next),
        InitMethod::Rk2 => rk2_level(params, kernel, cubic, phi0, t_next),
    }
}

fn init_common(params: &SchemeParams, kernel: &Kernel, phi0: &RealField) -> Result<CubicTerm> {
    params.validate()?;
    kernel.samples().check_same_grid(phi0)?;
    check_positivity(params, kernel)?;
    CubicTerm::new(kernel.grid(), params.dealias)
}

/// First-order stabilized step: implicit nonlocal and stabilization terms,
/// explicit cubic and concave terms, constant `params.init_a`.
pub fn step_init_first_order(params: &SchemeParams, kernel: &Kernel, phi0: &RealField) -> Result<RealField> {
    let cubic = init_common(params, kernel, phi0)?;
    let level = Level::from_field(phi0.clone());
    Ok(first_order_level(params, kernel, &cubic, &level, params.dt)?.field)
}

/// Heun step on `phi_t = Delta_N(phi^3 - phi + eps^2 L_N phi)`; explicit, so
/// only stable for small `dt`.
pub fn step_init_rk2(params: &SchemeParams, kernel: &Kernel, phi0: &RealField) -> Result<RealField> {
    let cubic = init_common(params, kernel, phi0)?;
    let level = Level::from_field(phi0.clone());
    Ok(rk2_level(params, kernel, &cubic, &level, params.dt)?.field)
}

/// One piece of a piecewise-constant step-size schedule, active until `t_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_end: f64,
    pub dt: f64,
}

/// Validated list of segments with strictly increasing end times.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Result<Schedule> {
        if segments.is_empty() {
            return Err(Error::config("schedule: at least one segment is required"));
        }
        let mut last = 0.0;
        for (i, s) in segments.iter().enumerate() {
            if !(s.dt.is_finite() && s.dt > 0.0) {
                return Err(Error::config(format!("schedule[{i}]: dt = {} must be positive", s.dt)));
            }
            if !(s.t_end.is_finite() && s.t_end > last) {
                return Err(Error::config(format!(
                    "schedule[{i}]: t_end = {} must exceed the previous end time {last}",
                    s.t_end
                )));
            }
            last = s.t_end;
        }
        Ok(Schedule { segments })
    }

    /// Single segment `[0, t_end)` with step `dt`.
    pub fn uniform(t_end: f64, dt: f64) -> Result<Schedule> {
        Schedule::new(vec![Segment { t_end, dt }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn t_final(&self) -> f64 {
        self.segments.last().map(|s| s.t_end).unwrap_or(0.0)
    }

    /// `(t_start, dt, steps)` per segment; step counts are rounded to the
    /// nearest integer, so a segment may end within `dt/2` of its `t_end`.
    pub fn plan(&self) -> Vec<(f64, f64, usize)> {
        let mut start = 0.0;
        let mut out = Vec::new();
        for s in &self.segments {
            let steps = ((s.t_end - start) / s.dt).round().max(1.0) as usize;
            out.push((start, s.dt, steps));
            start += steps as f64 * s.dt;
        }
        out
    }
}

/// What observers see after every accepted step (and once for `phi^0`).
pub struct StepInfo<'a> {
    pub n: usize,
    pub t: f64,
    pub dt: f64,
    pub phi: &'a RealField,
}

pub trait Observer {
    fn on_step(&mut self, step: &StepInfo<'_>) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(&StepInfo<'_>) -> Result<()>,
{
    fn on_step(&mut self, step: &StepInfo<'_>) -> Result<()> {
        self(step)
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl Observer for NoObserver {
    fn on_step(&mut self, _: &StepInfo<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Record an [`EnergyRecord`] every this many steps (0 disables records
    /// except the first and last).
    pub record_every: usize,
    /// When set, records carry the modified energy computed with this `M0`.
    pub m0: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            record_every: 1,
            m0: None,
        }
    }
}

/// Result of [`run`]. On divergence `failure` is set and `state`/`records`
/// hold the last valid data.
#[derive(Debug)]
pub struct RunOutput {
    pub state: StepperState,
    pub records: Vec<EnergyRecord>,
    pub failure: Option<Error>,
}

impl RunOutput {
    pub fn into_result(self) -> Result<(StepperState, Vec<EnergyRecord>)> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok((self.state, self.records)),
        }
    }
}

struct Recorder<'a> {
    kernel: &'a Kernel,
    epsilon: f64,
    energy_params: Option<EnergyParams>,
    every: usize,
    records: Vec<EnergyRecord>,
}

impl Recorder<'_> {
    /// `older` holds up to two earlier levels of the current segment.
    fn record(&mut self, n: usize, t: f64, dt: f64, level: &Level, older: [Option<&Level>; 2], force: bool) {
        let due = force || (self.every > 0 && n % self.every == 0);
        if !due {
            return;
        }
        if let Some(last) = self.records.last() {
            if last.t == t && n > 0 {
                return;
            }
        }
        let e = energetics::energy_from_spectrum(level.field.values(), &level.spec, self.kernel, self.epsilon);
        let modified = match (self.energy_params, older) {
            (Some(ep), [Some(curr), Some(prev)]) => Some(
                e + energetics::modified_energy_correction(
                    level.field.values(),
                    curr.field.values(),
                    prev.field.values(),
                    level.field.grid().cell_area(),
                    self.kernel.j_star_one(),
                    &ep,
                    dt,
                ),
            ),
            _ => None,
        };
        self.records.push(EnergyRecord::observe(&level.field, t, dt, e, modified));
    }
}

/// Integrates from `t = 0` through the schedule. Each segment starts with one
/// initializer step (the two-step history is discarded when `dt` changes),
/// then continues with the second-order stepper. `params.dt` is ignored.
pub fn run(
    params: &SchemeParams,
    kernel: Arc<Kernel>,
    schedule: &Schedule,
    phi0: RealField,
    options: &RunOptions,
    observer: &mut dyn Observer,
) -> Result<RunOutput> {
    let first_dt = schedule.segments()[0].dt;
    init_common(&params.with_dt(first_dt), &kernel, &phi0)?;
    let energy_params = match options.m0 {
        Some(m0) => Some(EnergyParams::new(params.epsilon, m0, params.a0, params.a1)?),
        None => None,
    };
    let mut rec = Recorder {
        kernel: &kernel,
        epsilon: params.epsilon,
        energy_params,
        every: options.record_every,
        records: Vec::new(),
    };

    let mut n = 0usize;
    let mut t = 0.0;
    let mut prev: Option<Level> = None;
    let mut curr = Level::from_field(phi0);
    observer.on_step(&StepInfo { n, t, dt: first_dt, phi: &curr.field })?;
    rec.record(n, t, first_dt, &curr, [None, None], true);

    let plan = schedule.plan();
    let total_steps: usize = plan.iter().map(|p| p.2).sum();
    let mut failure = None;

    'segments: for (start, dt, steps) in plan {
        let seg_params = params.with_dt(dt);
        let stepper = Stepper::new(seg_params.clone(), kernel.clone())?;
        prev = None;
        for k in 1..=steps {
            let t_next = start + k as f64 * dt;
            let result = match &prev {
                None => init_level(&seg_params, &kernel, &stepper.cubic, &curr, t_next),
                Some(p) => stepper.advance(p, &curr, t_next),
            };
            let next = match result {
                Ok(level) => level,
                Err(e) => {
                    failure = Some(e);
                    break 'segments;
                }
            };
            n += 1;
            t = t_next;
            observer.on_step(&StepInfo { n, t, dt, phi: &next.field })?;
            let older = match &prev {
                Some(p) => [Some(&curr), Some(p)],
                None => [None, None],
            };
            rec.record(n, t, dt, &next, older, n == total_steps);
            prev = Some(std::mem::replace(&mut curr, next));
        }
    }

    if failure.is_some() {
        let dt = rec.records.last().map(|r| r.dt).unwrap_or(first_dt);
        rec.record(n, t, dt, &curr, [None, None], true);
    }
    let phi_prev = prev.map(|p| p.field).unwrap_or_else(|| curr.field.clone());
    Ok(RunOutput {
        state: StepperState {
            phi_prev,
            phi_curr: curr.field,
            t,
            n,
        },
        records: rec.records,
        failure,
    })
}
