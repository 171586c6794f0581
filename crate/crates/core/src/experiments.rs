//! Temporal convergence study, coarsening runs and power-law fitting of the
//! energy decay.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energetics::EnergyRecord;
use crate::error::{Error, Result};
use crate::grid::{self, Grid, Norm, RealField};
use crate::integrators::{self, InitMethod, Observer, RunOptions, Schedule, SchemeParams, StepInfo};
use crate::kernel::{self, Kernel};
use crate::rng::XorShift64Star;

/// Initial data selectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `amplitude * sin(pi x / X1) sin(pi y / X2) + offset`.
    SineBump { amplitude: f64, offset: f64 },
    Constant { offset: f64 },
    /// I.i.d. uniform values in `[offset - amplitude, offset + amplitude)`.
    Random {
        amplitude: f64,
        #[serde(default)]
        offset: f64,
        seed: u64,
    },
}

impl InitialCondition {
    /// The smooth datum of the convergence test, `0.5 sin(pi x) sin(pi y) + 0.1`.
    pub fn convergence_default() -> Self {
        InitialCondition::SineBump {
            amplitude: 0.5,
            offset: 0.1,
        }
    }

    pub fn build(&self, grid: &Arc<Grid>) -> Result<RealField> {
        match *self {
            InitialCondition::SineBump { amplitude, offset } => {
                let (x1, x2) = (grid.x1(), grid.x2());
                let pi = std::f64::consts::PI;
                Ok(RealField::from_fn(grid.clone(), |x, y| {
                    amplitude * (pi * x / x1).sin() * (pi * y / x2).sin() + offset
                }))
            }
            InitialCondition::Constant { offset } => Ok(RealField::constant(grid.clone(), offset)),
            InitialCondition::Random {
                amplitude,
                offset,
                seed,
            } => Ok(random_initial(grid, amplitude, seed)?.map(|v| v + offset)),
        }
    }
}

/// Uniform noise in `[-amplitude, amplitude)` per node, filled in storage
/// order from [`XorShift64Star`] seeded with `seed`.
pub fn random_initial(grid: &Arc<Grid>, amplitude: f64, seed: u64) -> Result<RealField> {
    if !(amplitude.is_finite() && amplitude > 0.0) {
        return Err(Error::config(format!("amplitude = {amplitude} must be positive")));
    }
    let mut rng = XorShift64Star::new(seed);
    let values = (0..grid.len()).map(|_| rng.uniform(-amplitude, amplitude)).collect();
    RealField::new(grid.clone(), values)
}

/// Scheme-related constants shared by the experiment drivers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSetup {
    pub epsilon: f64,
    pub delta: f64,
    pub image_range: usize,
    pub a0: f64,
    pub a1: f64,
    pub dealias: bool,
    pub init_method: InitMethod,
    pub init_a: f64,
}

impl ModelSetup {
    /// `A0 = 2`, `A1 = 5`, first-order initializer with constant 2, one image.
    pub fn new(epsilon: f64, delta: f64) -> Self {
        ModelSetup {
            epsilon,
            delta,
            image_range: 1,
            a0: 2.0,
            a1: 5.0,
            dealias: false,
            init_method: InitMethod::FirstOrderStabilized,
            init_a: 2.0,
        }
    }

    pub fn scheme(&self, dt: f64) -> SchemeParams {
        SchemeParams {
            epsilon: self.epsilon,
            a0: self.a0,
            a1: self.a1,
            dt,
            dealias: self.dealias,
            init_method: self.init_method,
            init_a: self.init_a,
        }
    }

    pub fn kernel(&self, grid: &Arc<Grid>) -> Result<Arc<Kernel>> {
        let k = kernel::build_kernel(self.delta, grid, self.image_range)?;
        for w in k.warnings() {
            log::warn!("{w}");
        }
        Ok(Arc::new(k))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConfig {
    pub x1: f64,
    pub x2: f64,
    pub n1: usize,
    pub n2: usize,
    pub model: ModelSetup,
    pub dt_base: f64,
    /// Steps `dt_base * 2^-k` for `k = 0..=k_max`.
    pub k_max: u32,
    /// Benchmark step; defaults to the smallest ladder step divided by 8.
    pub dt_ref: Option<f64>,
    pub t_final: f64,
    pub initial: InitialCondition,
}

impl ConvergenceConfig {
    /// `(-1,1)^2`, the smooth datum, `T = 0.05`, `dt = 0.005 * 2^-k`.
    pub fn desk(n: usize, epsilon: f64, delta: f64, k_max: u32) -> Self {
        ConvergenceConfig {
            x1: 1.0,
            x2: 1.0,
            n1: n,
            n2: n,
            model: ModelSetup::new(epsilon, delta),
            dt_base: 0.005,
            k_max,
            dt_ref: None,
            t_final: 0.05,
            initial: InitialCondition::convergence_default(),
        }
    }

    pub fn ladder(&self) -> Vec<f64> {
        (0..=self.k_max).map(|k| self.dt_base / f64::powi(2.0, k as i32)).collect()
    }

    pub fn benchmark_dt(&self) -> f64 {
        self.dt_ref
            .unwrap_or(self.dt_base / f64::powi(2.0, self.k_max as i32) / 8.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub steps: usize,
    /// `||phi_ref(T) - phi_dt(T)||_2`.
    pub l2_error: Option<f64>,
    /// `log2(e_{k-1} / e_k)`; absent on the first row.
    pub observed_rate: Option<f64>,
    /// Set when `T/dt` was not an integer and the step count was rounded.
    pub adjusted: bool,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub dt_ref: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Least-squares slope of `ln(error)` against `ln(dt)` over the rows that
    /// have an error.
    pub fn fitted_order(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter_map(|r| r.l2_error.filter(|e| *e > 0.0).map(|e| (r.dt.ln(), e.ln())))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        Some(least_squares(&pts).0)
    }

    pub fn mean_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.rows.iter().filter_map(|r| r.observed_rate).collect();
        if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        }
    }

    pub fn errors_decrease(&self) -> bool {
        let errs: Vec<Option<f64>> = self.rows.iter().map(|r| r.l2_error).collect();
        errs.windows(2).all(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => b < a,
            _ => false,
        })
    }
}

fn solve_to(cfg: &ConvergenceConfig, kernel: &Arc<Kernel>, phi0: &RealField, dt: f64) -> (usize, bool, Result<RealField>) {
    let steps = (cfg.t_final / dt).round().max(1.0) as usize;
    let adjusted = ((steps as f64) * dt - cfg.t_final).abs() > 1e-9 * cfg.t_final;
    let result = Schedule::uniform(steps as f64 * dt, dt).and_then(|schedule| {
        let options = RunOptions {
            record_every: 0,
            m0: None,
        };
        integrators::run(
            &cfg.model.scheme(dt),
            kernel.clone(),
            &schedule,
            phi0.clone(),
            &options,
            &mut integrators::NoObserver,
        )?
        .into_result()
        .map(|(state, _)| state.phi_curr)
    });
    (steps, adjusted, result)
}

/// Runs the ladder of step sizes and the benchmark (in parallel) and tabulates
/// `l2` errors at `t_final` with successive observed rates.
pub fn convergence_study(cfg: &ConvergenceConfig) -> Result<ConvergenceTable> {
    let grid = Grid::new(cfg.x1, cfg.x2, cfg.n1, cfg.n2)?;
    let kernel = cfg.model.kernel(&grid)?;
    let gamma0 = kernel::gamma0(&kernel, cfg.model.epsilon);
    if gamma0 <= 0.0 {
        return Err(Error::ModelValidity { gamma0 });
    }
    if !(cfg.t_final > 0.0 && cfg.dt_base > 0.0) {
        return Err(Error::config("t_final and dt_base must be positive"));
    }
    let ladder = cfg.ladder();
    let dt_ref = cfg.benchmark_dt();
    let smallest = *ladder.last().unwrap();
    if !(dt_ref > 0.0 && dt_ref <= smallest / 4.0 * (1.0 + 1e-12)) {
        return Err(Error::config(format!(
            "benchmark dt {dt_ref} must not exceed a quarter of the smallest ladder step {smallest}"
        )));
    }
    let phi0 = cfg.initial.build(&grid)?;

    let mut all = ladder.clone();
    all.push(dt_ref);
    let results: Vec<(usize, bool, Result<RealField>)> = all
        .par_iter()
        .map(|&dt| solve_to(cfg, &kernel, &phi0, dt))
        .collect();
    let mut results = results.into_iter();
    let mut runs: Vec<_> = results.by_ref().take(ladder.len()).collect();
    let (_, _, reference) = results.next().unwrap();

    let mut rows = Vec::with_capacity(ladder.len());
    let mut last_err: Option<f64> = None;
    for (dt, (steps, adjusted, res)) in ladder.iter().zip(runs.drain(..)) {
        let (l2_error, failure) = match (&reference, res) {
            (Ok(r), Ok(phi)) => (Some(grid::norm(&r.sub(&phi)?, Norm::L2)), None),
            (Err(e), _) => (None, Some(format!("benchmark failed: {e}"))),
            (_, Err(e)) => (None, Some(e.to_string())),
        };
        let observed_rate = match (last_err, l2_error) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
            _ => None,
        };
        last_err = l2_error;
        rows.push(ConvergenceRow {
            dt: *dt,
            steps,
            l2_error,
            observed_rate,
            adjusted,
            failure,
        });
    }
    Ok(ConvergenceTable { dt_ref, rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoarseningConfig {
    pub x1: f64,
    pub x2: f64,
    pub n1: usize,
    pub n2: usize,
    pub model: ModelSetup,
    pub schedule: Schedule,
    pub initial: InitialCondition,
    /// Energy record cadence in steps.
    pub record_every: usize,
    /// Sorted capture times; each snapshot is the first state at or past
    /// the requested time (within half a step).
    pub snapshot_times: Vec<f64>,
    pub m0: Option<f64>,
}

impl CoarseningConfig {
    /// `(-2 pi, 2 pi)^2`, random data in `[-0.1, 0.1)`, the given schedule.
    pub fn new(n: usize, epsilon: f64, delta: f64, schedule: Schedule, seed: u64) -> Self {
        let x = 2.0 * std::f64::consts::PI;
        CoarseningConfig {
            x1: x,
            x2: x,
            n1: n,
            n2: n,
            model: ModelSetup::new(epsilon, delta),
            schedule,
            initial: InitialCondition::Random {
                amplitude: 0.1,
                offset: 0.0,
                seed,
            },
            record_every: 1,
            snapshot_times: Vec::new(),
            m0: None,
        }
    }
}

/// Step-size schedule `dt = 0.001` on `[0, 1000)`, `0.01` on `[1000, 10^4)`,
/// `0.1` beyond, truncated at `t_final`.
pub fn reference_schedule(t_final: f64) -> Result<Schedule> {
    piecewise_schedule(&[(1000.0, 0.001), (10_000.0, 0.01), (f64::INFINITY, 0.1)], t_final)
}

/// Cheaper schedule for desk-scale coarsening runs: `0.001` until 1, `0.01`
/// until 100, `0.05` beyond, truncated at `t_final`.
pub fn desk_schedule(t_final: f64) -> Result<Schedule> {
    piecewise_schedule(&[(1.0, 0.001), (100.0, 0.01), (f64::INFINITY, 0.05)], t_final)
}

fn piecewise_schedule(pieces: &[(f64, f64)], t_final: f64) -> Result<Schedule> {
    let mut segs = Vec::new();
    for &(end, dt) in pieces {
        segs.push(integrators::Segment {
            t_end: end.min(t_final),
            dt,
        });
        if end >= t_final {
            break;
        }
    }
    Schedule::new(segs)
}

#[derive(Debug)]
pub struct CoarseningOutput {
    pub records: Vec<EnergyRecord>,
    pub snapshots: Vec<(f64, RealField)>,
    pub final_state: RealField,
    /// Divergence, with everything above holding the data up to it.
    pub failure: Option<Error>,
}

struct SnapshotTaker {
    targets: Vec<f64>,
    next: usize,
    taken: Vec<(f64, RealField)>,
}

impl Observer for SnapshotTaker {
    fn on_step(&mut self, step: &StepInfo<'_>) -> Result<()> {
        while self.next < self.targets.len() && step.t >= self.targets[self.next] - 0.5 * step.dt {
            self.taken.push((step.t, step.phi.clone()));
            self.next += 1;
        }
        Ok(())
    }
}

/// Streaming form of [`estimate_m0`](crate::energetics::estimate_m0) over a
/// run, using each step's own `dt`.
#[derive(Debug, Default)]
pub struct M0Tracker {
    prev: Option<RealField>,
    best: f64,
}

impl M0Tracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// `1 + max_k (||phi^k||_inf + ||(phi^k - phi^{k-1})/dt||_inf)`, or `None`
    /// before two states have been seen.
    pub fn estimate(&self) -> Option<f64> {
        self.prev.as_ref()?;
        Some(1.0 + self.best)
    }
}

impl Observer for M0Tracker {
    fn on_step(&mut self, step: &StepInfo<'_>) -> Result<()> {
        match &self.prev {
            None => self.best = step.phi.linf(),
            Some(p) => {
                let rate = step.phi.sub(p)?.linf() / step.dt;
                self.best = self.best.max(step.phi.linf() + rate);
            }
        }
        self.prev = Some(step.phi.clone());
        Ok(())
    }
}

/// Runs `cfg` once without records and returns the tracked `M0`.
pub fn preliminary_m0(cfg: &CoarseningConfig) -> Result<f64> {
    let grid = Grid::new(cfg.x1, cfg.x2, cfg.n1, cfg.n2)?;
    let kernel = cfg.model.kernel(&grid)?;
    let phi0 = cfg.initial.build(&grid)?;
    let params = cfg.model.scheme(cfg.schedule.segments()[0].dt);
    let mut tracker = M0Tracker::new();
    let options = RunOptions { record_every: 0, m0: None };
    integrators::run(&params, kernel, &cfg.schedule, phi0, &options, &mut tracker)?.into_result()?;
    tracker
        .estimate()
        .ok_or_else(|| Error::config("the schedule produced no steps"))
}

/// Integrates random initial data through the schedule, recording energies
/// and snapshots.
pub fn coarsening_run(cfg: &CoarseningConfig) -> Result<CoarseningOutput> {
    if cfg.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::config("snapshot_times must be sorted"));
    }
    let grid = Grid::new(cfg.x1, cfg.x2, cfg.n1, cfg.n2)?;
    let kernel = cfg.model.kernel(&grid)?;
    let phi0 = cfg.initial.build(&grid)?;
    let params = cfg.model.scheme(cfg.schedule.segments()[0].dt);
    if let Some(m0) = cfg.m0 {
        for w in params.stability_warnings(m0) {
            log::warn!("{w}");
        }
    }
    let mut snaps = SnapshotTaker {
        targets: cfg.snapshot_times.clone(),
        next: 0,
        taken: Vec::new(),
    };
    let options = RunOptions {
        record_every: cfg.record_every,
        m0: cfg.m0,
    };
    let out = integrators::run(&params, kernel, &cfg.schedule, phi0, &options, &mut snaps)?;
    Ok(CoarseningOutput {
        records: out.records,
        snapshots: snaps.taken,
        final_state: out.state.phi_curr,
        failure: out.failure,
    })
}

/// `E(t) ~ b_e t^{m_e}` fitted by least squares on `(ln t, ln E)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub m_e: f64,
    pub b_e: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// RMS of the residuals of the log-linear fit.
    pub residual: f64,
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Fits `(t, E)` pairs with `t_min <= t <= t_max`.
pub fn fit_power_law_points(points: &[(f64, f64)], t_min: f64, t_max: f64) -> Result<PowerLawFit> {
    if !(t_min > 0.0 && t_max > t_min) {
        return Err(Error::config(format!(
            "fit window [{t_min}, {t_max}] must satisfy 0 < t_min < t_max"
        )));
    }
    let window: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_min && t <= t_max)
        .collect();
    if window.len() < 8 {
        return Err(Error::config(format!(
            "fit window [{t_min}, {t_max}] holds {} samples; at least 8 are required",
            window.len()
        )));
    }
    if let Some(&(t, e)) = window.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::domain(format!("energy {e} at t = {t} is not positive")));
    }
    let logs: Vec<(f64, f64)> = window.iter().map(|&(t, e)| (t.ln(), e.ln())).collect();
    let (slope, intercept) = least_squares(&logs);
    let rss: f64 = logs
        .iter()
        .map(|&(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok(PowerLawFit {
        m_e: slope,
        b_e: intercept.exp(),
        t_min,
        t_max,
        points: logs.len(),
        residual: (rss / logs.len() as f64).sqrt(),
    })
}

pub fn fit_power_law(series: &[EnergyRecord], t_min: f64, t_max: f64) -> Result<PowerLawFit> {
    let pts: Vec<(f64, f64)> = series.iter().map(|r| (r.t, r.energy)).collect();
    fit_power_law_points(&pts, t_min, t_max)
}
