//! Periodized Gaussian interaction kernel, discrete convolution and the
//! nonlocal operator `L_N phi = (J*1) phi - J*phi`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, fft_forward, Grid, RealField};

/// Sampled kernel together with its cached Fourier data.
#[derive(Clone, Debug)]
pub struct Kernel {
    delta: f64,
    image_range: usize,
    samples: RealField,
    j_star_one: f64,
    /// `|Omega| J_hat`, the multiplier of `phi -> J * phi` (real, even kernel).
    transfer: Vec<f64>,
    /// Symbol of `L_N`: `J*1 - |Omega| J_hat`, zero at the mean mode.
    symbol: Vec<f64>,
    warnings: Vec<String>,
}

/// Result of checking the kernel against the model's structural conditions.
#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub delta: f64,
    pub j_star_one: f64,
    /// `4 / delta^2`, the continuum value of `J*1` for the Gaussian family.
    pub j_star_one_continuum: f64,
    pub epsilon: Option<f64>,
    pub gamma0: Option<f64>,
    /// `(2 eps / delta)^2 - 1`, i.e. `gamma0` with the continuum `J*1`. It
    /// is exactly zero at `delta = 2 eps`.
    pub gamma0_continuum: Option<f64>,
    /// `gamma0 > 0` and `gamma0_continuum > 0`; absent without an interface
    /// parameter.
    pub positivity_holds: Option<bool>,
    /// `1/2 h1 h2 sum J |x|^2`; the normalization condition asks for 1.
    pub second_moment: f64,
    pub min_sample: f64,
    /// Largest `|J(x) - J(-x)|` over the nodes.
    pub evenness_residual: f64,
    /// `max(0, -min sigma)`.
    pub max_symbol_negativity: f64,
    pub warnings: Vec<String>,
}

/// Numbers entering the convolution bound `|<J*phi, Delta psi>| <= a ||phi||^2 + (C/a) ||grad psi||^2`.
#[derive(Clone, Copy, Debug)]
pub struct ConvolutionBound {
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Empirical constant `(max_k |Omega| |J_hat_k| sqrt(lambda_k))^2 / 4`.
    pub c_f: f64,
    pub margin: f64,
}

/// Centered signed offset of storage index `s` on an `n`-point axis, such
/// that the node coordinate is `offset * h`.
fn centered_offset(s: usize, n: usize) -> i64 {
    s as i64 + 1 - (n / 2) as i64
}

/// Largest `|J(x) - J(-x)|` over the nodes. Offset `m` lives at storage
/// index `m + N/2 - 1`, so its mirror is at `(N - 2 - s) mod N`.
fn evenness_residual(samples: &RealField) -> f64 {
    let g = samples.grid();
    let (n1, n2) = (g.n1(), g.n2());
    let s = samples.values();
    let mut worst: f64 = 0.0;
    for i in 0..n1 {
        let ri = (2 * n1 - 2 - i) % n1;
        for j in 0..n2 {
            let rj = (2 * n2 - 2 - j) % n2;
            worst = worst.max((s[i * n2 + j] - s[ri * n2 + rj]).abs());
        }
    }
    worst
}

/// `sum_{p=-P..P} exp(-(x - 2 X p)^2 / delta^2)`, summed in mirror pairs so
/// that the value is bit-identical under `x -> -x`.
fn periodized_gaussian_1d(x: f64, half_width: f64, delta: f64, range: usize) -> f64 {
    let d2 = delta * delta;
    let mut sum = (-(x * x) / d2).exp();
    for p in 1..=range {
        let shift = 2.0 * half_width * p as f64;
        let a = x - shift;
        let b = x + shift;
        sum += (-(a * a) / d2).exp() + (-(b * b) / d2).exp();
    }
    sum
}

/// Samples the periodized Gaussian `J_delta(x) = 4/(pi delta^4) exp(-|x|^2/delta^2)`
/// over `(2 P + 1)^2` periodic images.
pub fn build_kernel(delta: f64, grid: &Arc<Grid>, image_range: usize) -> Result<Kernel> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::config(format!("kernel width delta = {delta} must be positive")));
    }
    let mut warnings = Vec::new();
    let min_half = grid.x1().min(grid.x2());
    if delta > min_half {
        warnings.push(format!(
            "delta = {delta} exceeds the domain half-width {min_half}; the kernel is not effectively supported in the domain"
        ));
    }
    let tail = (-((2 * image_range + 1) as f64 * min_half / delta).powi(2)).exp();
    if tail > 1e-14 {
        warnings.push(format!(
            "image range {image_range} leaves a relative periodization tail of {tail:e}"
        ));
    }
    let norm = 4.0 / (std::f64::consts::PI * delta.powi(4));
    let gx: Vec<f64> = (0..grid.n1())
        .map(|s| {
            let x = centered_offset(s, grid.n1()) as f64 * grid.h1();
            periodized_gaussian_1d(x, grid.x1(), delta, image_range)
        })
        .collect();
    let gy: Vec<f64> = (0..grid.n2())
        .map(|s| {
            let y = centered_offset(s, grid.n2()) as f64 * grid.h2();
            periodized_gaussian_1d(y, grid.x2(), delta, image_range)
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    for &a in &gx {
        for &b in &gy {
            values.push(norm * a * b);
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(format!(
            "kernel samples overflow for delta = {delta}"
        )));
    }
    let samples = RealField::new(grid.clone(), values)?;
    Ok(Kernel::from_samples_unchecked(samples, delta, image_range, warnings))
}

impl Kernel {
    /// Kernel from user-supplied samples (nonnegative and even about the
    /// origin node). `delta` is informational only.
    pub fn from_samples(samples: RealField, delta: f64) -> Result<Kernel> {
        if samples.min() < 0.0 {
            return Err(Error::domain("kernel samples must be nonnegative"));
        }
        let residual = evenness_residual(&samples);
        if residual > 1e-12 * samples.linf() {
            return Err(Error::domain(format!(
                "kernel samples must be even about the origin node (residual {residual:e})"
            )));
        }
        Ok(Kernel::from_samples_unchecked(samples, delta, 0, Vec::new()))
    }

    fn from_samples_unchecked(
        samples: RealField,
        delta: f64,
        image_range: usize,
        warnings: Vec<String>,
    ) -> Kernel {
        let grid = samples.grid().clone();
        let j_star_one = grid.cell_area() * samples.values().iter().sum::<f64>();
        let coeffs = fft_forward(&samples);
        let area = grid.area();
        let mut transfer: Vec<f64> = coeffs.coeffs().iter().map(|c| area * c.re).collect();
        transfer[0] = j_star_one;
        let symbol: Vec<f64> = transfer.iter().map(|t| j_star_one - t).collect();
        Kernel {
            delta,
            image_range,
            samples,
            j_star_one,
            transfer,
            symbol,
            warnings,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.samples.grid()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn image_range(&self) -> usize {
        self.image_range
    }

    pub fn samples(&self) -> &RealField {
        &self.samples
    }

    /// `J*1 = h1 h2 sum J`.
    pub fn j_star_one(&self) -> f64 {
        self.j_star_one
    }

    /// Symbol of `L_N` in storage order.
    pub fn symbol_table(&self) -> &[f64] {
        &self.symbol
    }

    /// Symbol of `L_N` at mode `(k, l)`.
    pub fn symbol(&self, k: i64, l: i64) -> f64 {
        self.symbol[self.grid().mode_index(k, l)]
    }

    /// Multiplier of `phi -> J * phi` in storage order.
    pub fn transfer_table(&self) -> &[f64] {
        &self.transfer
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn check_grid(&self, phi: &RealField) -> Result<()> {
        self.samples.check_same_grid(phi)
    }
}

/// Discrete periodic convolution `(J * phi)_ij = h1 h2 sum_pq J(x_i - x_p, y_j - y_q) phi_pq`.
pub fn convolve(kernel: &Kernel, phi: &RealField) -> Result<RealField> {
    kernel.check_grid(phi)?;
    let g = kernel.grid();
    let v = g.apply_symbol(phi.values(), |idx| Complex64::new(kernel.transfer[idx], 0.0));
    Ok(RealField::from_vec(g.clone(), v))
}

/// `L_N phi = (J*1) phi - J*phi`, applied through its Fourier symbol.
pub fn nonlocal_apply(kernel: &Kernel, phi: &RealField) -> Result<RealField> {
    kernel.check_grid(phi)?;
    let g = kernel.grid();
    let v = g.apply_symbol(phi.values(), |idx| Complex64::new(kernel.symbol[idx], 0.0));
    Ok(RealField::from_vec(g.clone(), v))
}

/// `gamma0 = eps^2 (J*1) - 1`. The model is well posed only when it is positive.
pub fn gamma0(kernel: &Kernel, epsilon: f64) -> f64 {
    epsilon * epsilon * kernel.j_star_one - 1.0
}

/// Reports nonnegativity, evenness, the second moment, `J*1`, `gamma0` and
/// the sign of the `L_N` symbol. Nothing here is enforced.
pub fn verify_conditions(kernel: &Kernel, epsilon: Option<f64>) -> KernelReport {
    let g = kernel.grid();
    let (n1, n2) = (g.n1(), g.n2());
    let s = kernel.samples.values();
    let mut moment = 0.0;
    for i in 0..n1 {
        let x = centered_offset(i, n1) as f64 * g.h1();
        for j in 0..n2 {
            let y = centered_offset(j, n2) as f64 * g.h2();
            moment += s[i * n2 + j] * (x * x + y * y);
        }
    }
    let evenness_residual = evenness_residual(&kernel.samples);
    let min_symbol = kernel.symbol.iter().copied().fold(f64::INFINITY, f64::min);
    let gamma = epsilon.map(|e| gamma0(kernel, e));
    let gamma_continuum = epsilon.map(|e| (2.0 * e / kernel.delta).powi(2) - 1.0);
    let mut warnings = kernel.warnings.clone();
    if let Some(gm) = gamma {
        if gm <= 0.0 {
            warnings.push(format!("gamma0 = {gm} is not positive; the scheme will refuse this kernel"));
        }
    }
    if let Some(gc) = gamma_continuum {
        if gc <= 0.0 {
            warnings.push(format!("delta >= 2 epsilon (continuum gamma0 = {gc}); condition gamma0 > 0 fails"));
        }
    }
    KernelReport {
        delta: kernel.delta,
        j_star_one: kernel.j_star_one,
        j_star_one_continuum: 4.0 / (kernel.delta * kernel.delta),
        epsilon,
        gamma0: gamma,
        gamma0_continuum: gamma_continuum,
        positivity_holds: gamma.zip(gamma_continuum).map(|(a, b)| a > 0.0 && b > 0.0),
        second_moment: 0.5 * g.cell_area() * moment,
        min_sample: kernel.samples.min(),
        evenness_residual,
        max_symbol_negativity: (-min_symbol).max(0.0),
        warnings,
    }
}

/// Evaluates both sides of `|<J*phi, Delta_N psi>| <= alpha ||phi||^2 + (C_f/alpha) ||grad psi||^2`
/// with an empirically measured `C_f`. The gradient term uses `<psi, -Delta_N psi>`.
pub fn convolution_bound(
    kernel: &Kernel,
    phi: &RealField,
    psi: &RealField,
    alpha: f64,
) -> Result<ConvolutionBound> {
    kernel.check_grid(phi)?;
    kernel.check_grid(psi)?;
    if !(alpha > 0.0) {
        return Err(Error::config(format!("alpha = {alpha} must be positive")));
    }
    let g = kernel.grid();
    let sup = kernel
        .transfer
        .iter()
        .zip(g.lambda_table())
        .map(|(t, lam)| t.abs() * lam.sqrt())
        .fold(0.0, f64::max);
    let c_f = sup * sup / 4.0;
    let conv = convolve(kernel, phi)?;
    let lap = grid::laplacian(psi);
    let lhs = grid::inner(&conv, &lap)?.abs();
    let phi_sq = grid::inner(phi, phi)?;
    let grad_sq = -grid::inner(psi, &lap)?;
    let rhs = alpha * phi_sq + c_f / alpha * grad_sq;
    Ok(ConvolutionBound {
        alpha,
        lhs,
        rhs,
        c_f,
        margin: rhs - lhs,
    })
}
