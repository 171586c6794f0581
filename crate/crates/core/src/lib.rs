//! Fourier-spectral simulation of the nonlocal Cahn-Hilliard equation
//!
//! ```text
//! phi_t = Delta( phi^3 - phi + eps^2 L phi ),   L phi = (J*1) phi - J*phi,
//! ```
//!
//! on a doubly periodic rectangle, advanced by a linear, second-order,
//! double-stabilized scheme that is unconditionally uniquely solvable and
//! dissipates a modified energy.
//!
//! Modules:
//!
//! * [`grid`]: collocation grid, FFTs, spectral operators and discrete norms.
//! * [`kernel`]: periodized Gaussian kernel, convolution, the nonlocal operator.
//! * [`integrators`]: the second-order stepper, initializers and the run loop.
//! * [`energetics`]: original and modified discrete energies, mass.
//! * [`experiments`]: convergence study, coarsening runs, power-law fits.
//! * [`io`]: run configuration, CSV/snapshot/PGM formats and the CLI driver.
//!
//! ```
//! use std::sync::Arc;
//! use nch::{grid::{Grid, RealField}, kernel::build_kernel, integrators::*};
//!
//! let grid = Grid::square(1.0, 32).unwrap();
//! let kernel = Arc::new(build_kernel(0.05, &grid, 1).unwrap());
//! let phi0 = RealField::from_fn(grid.clone(), |x, y| {
//!     0.5 * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin() + 0.1
//! });
//! let params = SchemeParams::new(0.1, 1e-3);
//! let schedule = Schedule::uniform(0.01, 1e-3).unwrap();
//! let out = run(&params, kernel, &schedule, phi0, &RunOptions::default(), &mut NoObserver).unwrap();
//! let (state, records) = out.into_result().unwrap();
//! assert_eq!(state.n, 10);
//! assert!(records.last().unwrap().energy < records[0].energy);
//! ```

pub mod energetics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod integrators;
pub mod io;
pub mod kernel;
pub mod rng;

pub use error::{Error, Result};
