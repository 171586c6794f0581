//! Periodic collocation grid, discrete Fourier transforms and the spectral
//! differential operators built on them.
//!
//! The grid covers `(-X1, X1) x (-X2, X2)` with `N1 x N2` nodes. Storage index
//! `i = 0..N1` is the node `x = -X1 + (i + 1) h1` (the last node sits on `X1`,
//! which is identified with `-X1` by periodicity); `y` is laid out the same
//! way. Values are stored x-major: `values[i * N2 + j]`.
//!
//! Wavenumbers run over `k in (-N1/2, N1/2]`. The exposed [`SpectralField`]
//! uses the normalization
//!
//! ```text
//! f_hat[k, l] = 1/(N1 N2) * sum_{i,j} f[i, j] * exp(-i pi (k x_i / X1 + l y_j / X2))
//! ```
//!
//! so that `f[i, j] = sum_{k,l} f_hat[k, l] * exp(i pi (k x_i / X1 + l y_j / X2))`.
//! Internally operators act on unnormalized FFT output; every operator in this
//! crate is a per-mode multiplier, so the node phase never enters them.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Immutable description of the periodic mesh plus cached FFT plans and the
/// eigenvalues of `-Laplacian`.
pub struct Grid {
    x1: f64,
    x2: f64,
    n1: usize,
    n2: usize,
    h1: f64,
    h2: f64,
    /// `k pi / X1` per storage index along x.
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// `(k pi / X1)^2 + (l pi / X2)^2`, storage order.
    lambda: Vec<f64>,
    /// Node phase `exp(-i pi k x_0 / X1)` per storage index, `x_0` the first node.
    phase_x: Vec<Complex64>,
    phase_y: Vec<Complex64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("x1", &self.x1)
            .field("x2", &self.x2)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .finish()
    }
}

/// Signed wavenumber of storage index `a` on an `n`-point axis.
pub fn wavenumber(a: usize, n: usize) -> i64 {
    if a <= n / 2 {
        a as i64
    } else {
        a as i64 - n as i64
    }
}

fn axis_phase(n: usize, x: f64, h: f64) -> Vec<Complex64> {
    let x0 = -x + h;
    (0..n)
        .map(|a| {
            let k = wavenumber(a, n) as f64;
            Complex64::from_polar(1.0, -std::f64::consts::PI * k * x0 / x)
        })
        .collect()
}

impl Grid {
    /// Builds the grid for `(-x1, x1) x (-x2, x2)` with `n1 x n2` nodes.
    pub fn new(x1: f64, x2: f64, n1: usize, n2: usize) -> Result<Arc<Grid>> {
        for (name, n) in [("N1", n1), ("N2", n2)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::config(format!(
                    "{name} = {n}: mode counts must be even and at least 4"
                )));
            }
        }
        for (name, x) in [("X1", x1), ("X2", x2)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::config(format!(
                    "{name} = {x}: domain half-widths must be positive"
                )));
            }
        }
        let pi = std::f64::consts::PI;
        let kx: Vec<f64> = (0..n1).map(|a| wavenumber(a, n1) as f64 * pi / x1).collect();
        let ky: Vec<f64> = (0..n2).map(|b| wavenumber(b, n2) as f64 * pi / x2).collect();
        let mut lambda = Vec::with_capacity(n1 * n2);
        for &p in &kx {
            for &q in &ky {
                lambda.push(p * p + q * q);
            }
        }
        let h1 = 2.0 * x1 / n1 as f64;
        let h2 = 2.0 * x2 / n2 as f64;
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Grid {
            x1,
            x2,
            n1,
            n2,
            h1,
            h2,
            phase_x: axis_phase(n1, x1, h1),
            phase_y: axis_phase(n2, x2, h2),
            kx,
            ky,
            lambda,
            fwd_x: planner.plan_fft_forward(n1),
            inv_x: planner.plan_fft_inverse(n1),
            fwd_y: planner.plan_fft_forward(n2),
            inv_y: planner.plan_fft_inverse(n2),
        }))
    }

    /// Square domain `(-x, x)^2` with `n x n` nodes.
    pub fn square(x: f64, n: usize) -> Result<Arc<Grid>> {
        Grid::new(x, x, n, n)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn h1(&self) -> f64 {
        self.h1
    }
    pub fn h2(&self) -> f64 {
        self.h2
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `|Omega| = 4 X1 X2`.
    pub fn area(&self) -> f64 {
        4.0 * self.x1 * self.x2
    }

    /// Weight of the discrete inner product, `h1 h2`.
    pub fn cell_area(&self) -> f64 {
        self.h1 * self.h2
    }

    pub fn node_x(&self, i: usize) -> f64 {
        -self.x1 + (i + 1) as f64 * self.h1
    }

    pub fn node_y(&self, j: usize) -> f64 {
        -self.x2 + (j + 1) as f64 * self.h2
    }

    pub fn nodes_x(&self) -> Vec<f64> {
        (0..self.n1).map(|i| self.node_x(i)).collect()
    }

    pub fn nodes_y(&self) -> Vec<f64> {
        (0..self.n2).map(|j| self.node_y(j)).collect()
    }

    /// Storage index of mode `(k, l)`; wavenumbers are taken modulo `N`.
    pub fn mode_index(&self, k: i64, l: i64) -> usize {
        let a = k.rem_euclid(self.n1 as i64) as usize;
        let b = l.rem_euclid(self.n2 as i64) as usize;
        a * self.n2 + b
    }

    /// Signed wavenumbers of storage index `idx`.
    pub fn mode_of(&self, idx: usize) -> (i64, i64) {
        (wavenumber(idx / self.n2, self.n1), wavenumber(idx % self.n2, self.n2))
    }

    /// Eigenvalue of `-Laplacian` for mode `(k, l)`.
    pub fn lambda(&self, k: i64, l: i64) -> f64 {
        self.lambda[self.mode_index(k, l)]
    }

    /// Eigenvalues of `-Laplacian` in storage order.
    pub fn lambda_table(&self) -> &[f64] {
        &self.lambda
    }

    /// Whether `idx` lies on a Nyquist row or column.
    pub fn is_nyquist(&self, idx: usize) -> bool {
        idx / self.n2 == self.n1 / 2 || idx % self.n2 == self.n2 / 2
    }

    /// Two grids are compatible when they describe the same mesh.
    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.x1 == other.x1
                && self.x2 == other.x2
                && self.n1 == other.n1
                && self.n2 == other.n2)
    }

    pub(crate) fn describe(&self) -> String {
        format!("{}x{} grid on ({}, {})", self.n1, self.n2, self.x1, self.x2)
    }

    /// Unnormalized forward 2-D DFT in place (`exp(-2 pi i ...)`, storage order).
    pub(crate) fn forward_raw(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.fwd_x, &self.fwd_y);
    }

    /// Unnormalized inverse 2-D DFT in place.
    pub(crate) fn inverse_raw(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inv_x, &self.inv_y);
    }

    fn transform(&self, buf: &mut [Complex64], px: &Arc<dyn Fft<f64>>, py: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.len());
        let (n1, n2) = (self.n1, self.n2);
        let scratch_len = px
            .get_inplace_scratch_len()
            .max(py.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];
        // rows are contiguous along y
        py.process_with_scratch(buf, &mut scratch[..py.get_inplace_scratch_len()]);
        let mut cols = vec![Complex64::default(); n1 * n2];
        transpose(buf, &mut cols, n1, n2);
        px.process_with_scratch(&mut cols, &mut scratch[..px.get_inplace_scratch_len()]);
        transpose(&cols, buf, n2, n1);
    }

    /// Real field to unnormalized spectrum.
    pub(crate) fn spectrum_raw(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_raw(&mut buf);
        buf
    }

    /// Replaces `spec` by the spectrum of the real part of its inverse, i.e.
    /// `(c(k) + conj(c(-k))) / 2`. Spectra evolved mode by mode must be
    /// projected like this, or round-off in the anti-Hermitian part grows
    /// under the linear anti-diffusion without the cubic term to saturate it.
    pub(crate) fn project_hermitian(&self, spec: &mut [Complex64]) {
        let (n1, n2) = (self.n1, self.n2);
        for a in 0..n1 {
            let ma = (n1 - a) % n1;
            for b in 0..n2 {
                let mb = (n2 - b) % n2;
                let (i, m) = (a * n2 + b, ma * n2 + mb);
                if i < m {
                    let avg = 0.5 * (spec[i] + spec[m].conj());
                    spec[i] = avg;
                    spec[m] = avg.conj();
                } else if i == m {
                    spec[i].im = 0.0;
                }
            }
        }
    }

    /// Unnormalized spectrum back to real values; the imaginary part is dropped.
    pub(crate) fn values_from_raw(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse_raw(&mut spec);
        let scale = 1.0 / self.len() as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    /// Applies a per-mode multiplier given in storage order.
    pub(crate) fn apply_symbol<F>(&self, values: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn(usize) -> Complex64,
    {
        let mut spec = self.spectrum_raw(values);
        for (idx, c) in spec.iter_mut().enumerate() {
            *c *= symbol(idx);
        }
        self.values_from_raw(spec)
    }

    /// First-derivative multiplier along x with the Nyquist column zeroed.
    fn dx_symbol(&self, idx: usize) -> Complex64 {
        let a = idx / self.n2;
        if a == self.n1 / 2 {
            Complex64::default()
        } else {
            Complex64::new(0.0, self.kx[a])
        }
    }

    fn dy_symbol(&self, idx: usize) -> Complex64 {
        let b = idx % self.n2;
        if b == self.n2 / 2 {
            Complex64::default()
        } else {
            Complex64::new(0.0, self.ky[b])
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const TILE: usize = 16;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Values of a periodic grid function.
#[derive(Clone)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl fmt::Debug for RealField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealField")
            .field("grid", &self.grid)
            .field("min", &self.min())
            .field("max", &self.max())
            .finish()
    }
}

impl PartialEq for RealField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.values == other.values
    }
}

impl RealField {
    /// Wraps `values` (x-major, length `N1 N2`); non-finite values are rejected.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape {
                expected: format!("{} values for the {}", grid.len(), grid.describe()),
                found: format!("{} values", values.len()),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite value {} at index {pos}",
                values[pos]
            )));
        }
        Ok(RealField { grid, values })
    }

    pub(crate) fn from_vec(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        RealField { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        RealField { grid, values }
    }

    /// Samples `f(x, y)` at the grid nodes.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n1() {
            let x = grid.node_x(i);
            for j in 0..grid.n2() {
                values.push(f(x, grid.node_y(j)));
            }
        }
        RealField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n2() + j]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |f|`.
    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_same_grid(&self, other: &RealField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.grid.describe(),
                found: other.grid.describe(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField::from_vec(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Result<RealField> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(RealField::from_vec(self.grid.clone(), values))
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &RealField) -> Result<RealField> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> RealField {
        self.map(|v| s * v)
    }
}

/// Fourier coefficients of a grid function, storage order, normalized as in
/// the module docs.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::Shape {
                expected: format!("{} coefficients for the {}", grid.len(), grid.describe()),
                found: format!("{} coefficients", coeffs.len()),
            });
        }
        Ok(SpectralField { grid, coeffs })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of mode `(k, l)`.
    pub fn coeff(&self, k: i64, l: i64) -> Complex64 {
        self.coeffs[self.grid.mode_index(k, l)]
    }
}

/// Discrete Fourier coefficients of `f`.
pub fn fft_forward(f: &RealField) -> SpectralField {
    let g = &f.grid;
    let mut spec = g.spectrum_raw(&f.values);
    let scale = 1.0 / g.len() as f64;
    for (idx, c) in spec.iter_mut().enumerate() {
        let (a, b) = (idx / g.n2, idx % g.n2);
        *c *= g.phase_x[a] * g.phase_y[b] * scale;
    }
    SpectralField {
        grid: g.clone(),
        coeffs: spec,
    }
}

/// Grid values of the trigonometric interpolant with coefficients `f_hat`.
/// Only the real part is kept.
pub fn fft_inverse(f_hat: &SpectralField) -> RealField {
    let g = &f_hat.grid;
    let n = g.len() as f64;
    let spec: Vec<Complex64> = f_hat
        .coeffs
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let (a, b) = (idx / g.n2, idx % g.n2);
            c * (g.phase_x[a] * g.phase_y[b]).conj() * n
        })
        .collect();
    RealField::from_vec(g.clone(), g.values_from_raw(spec))
}

/// Spectral Laplacian `Delta_N f`.
pub fn laplacian(f: &RealField) -> RealField {
    let g = &f.grid;
    let v = g.apply_symbol(&f.values, |idx| Complex64::new(-g.lambda[idx], 0.0));
    RealField::from_vec(g.clone(), v)
}

/// Spectral gradient `(D_x f, D_y f)`, Nyquist modes removed.
pub fn gradient(f: &RealField) -> (RealField, RealField) {
    let g = &f.grid;
    let dx = g.apply_symbol(&f.values, |idx| g.dx_symbol(idx));
    let dy = g.apply_symbol(&f.values, |idx| g.dy_symbol(idx));
    (
        RealField::from_vec(g.clone(), dx),
        RealField::from_vec(g.clone(), dy),
    )
}

/// Spectral divergence `D_x fx + D_y fy`, Nyquist modes removed.
pub fn divergence(fx: &RealField, fy: &RealField) -> Result<RealField> {
    fx.check_same_grid(fy)?;
    let g = &fx.grid;
    let mut sx = g.spectrum_raw(&fx.values);
    let sy = g.spectrum_raw(&fy.values);
    for (idx, (a, b)) in sx.iter_mut().zip(&sy).enumerate() {
        *a = *a * g.dx_symbol(idx) + *b * g.dy_symbol(idx);
    }
    Ok(RealField::from_vec(g.clone(), g.values_from_raw(sx)))
}

fn check_mean_zero(f: &RealField) -> Result<()> {
    let mean = f.mean();
    if mean.abs() > 1e-12 * f.linf() {
        return Err(Error::domain(format!(
            "expected a mean-zero grid function, measured mean {mean:e}"
        )));
    }
    Ok(())
}

/// `(-Delta_N)^{-1} f` on the mean-zero subspace; the result has zero mean.
pub fn inverse_laplacian(f: &RealField) -> Result<RealField> {
    check_mean_zero(f)?;
    let g = &f.grid;
    let v = g.apply_symbol(&f.values, |idx| {
        if idx == 0 {
            Complex64::default()
        } else {
            Complex64::new(1.0 / g.lambda[idx], 0.0)
        }
    });
    Ok(RealField::from_vec(g.clone(), v))
}

/// Discrete inner product `<f, g> = h1 h2 sum f g`.
pub fn inner(f: &RealField, g: &RealField) -> Result<f64> {
    f.check_same_grid(g)?;
    Ok(inner_unchecked(&f.values, &g.values, f.grid.cell_area()))
}

pub(crate) fn inner_unchecked(a: &[f64], b: &[f64], w: f64) -> f64 {
    w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Supported discrete norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L2,
    L4,
    Inf,
}

impl Norm {
    /// Maps `p` to a supported norm; anything other than 2, 4 or infinity is
    /// a configuration error.
    pub fn from_p(p: f64) -> Result<Norm> {
        if p == 2.0 {
            Ok(Norm::L2)
        } else if p == 4.0 {
            Ok(Norm::L4)
        } else if p == f64::INFINITY {
            Ok(Norm::Inf)
        } else {
            Err(Error::config(format!(
                "unsupported norm exponent {p}; expected 2, 4 or inf"
            )))
        }
    }
}

pub fn norm(f: &RealField, p: Norm) -> f64 {
    let w = f.grid.cell_area();
    match p {
        Norm::L2 => (w * f.values.iter().map(|v| v * v).sum::<f64>()).sqrt(),
        Norm::L4 => (w * f.values.iter().map(|v| (v * v) * (v * v)).sum::<f64>()).powf(0.25),
        Norm::Inf => f.linf(),
    }
}

/// Discrete `H^{-1}` norm `||(-Delta_N)^{-1/2} f||_2`, evaluated by Parseval.
pub fn norm_hm1(f: &RealField) -> Result<f64> {
    check_mean_zero(f)?;
    let g = &f.grid;
    let spec = g.spectrum_raw(&f.values);
    let n = g.len() as f64;
    let sum: f64 = spec
        .iter()
        .zip(&g.lambda)
        .skip(1)
        .map(|(c, &lam)| c.norm_sqr() / lam)
        .sum();
    Ok((g.area() * sum / (n * n)).sqrt())
}
