//! Run configuration, file formats and the command-line driver.

pub mod cli;
mod formats;

pub use formats::{
    decode_snapshot, encode_pgm, encode_snapshot, format_energy_csv, gray_level, parse_energy_csv,
    read_energy_csv, read_snapshot, write_energy_csv, write_pgm, write_snapshot, ENERGY_CSV_HEADER,
    SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{CoarseningConfig, ConvergenceConfig, InitialCondition, ModelSetup};
use crate::grid::Grid;
use crate::integrators::{InitMethod, Schedule, Segment};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(rename = "X1")]
    pub x1: f64,
    #[serde(rename = "X2")]
    pub x2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
}

fn one() -> usize {
    1
}

fn two() -> f64 {
    2.0
}

fn first_order() -> InitMethod {
    InitMethod::FirstOrderStabilized
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub kernel_image_range: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default = "first_order")]
    pub init_method: InitMethod,
    #[serde(rename = "init_A", default = "two")]
    pub init_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub energy_every_steps: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Also write an 8-bit PGM preview next to every snapshot.
    #[serde(default)]
    pub pgm: bool,
}

/// Parameters of the `converge` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub dt_base: f64,
    pub k_max: u32,
    pub t_final: f64,
    #[serde(default)]
    pub dt_ref: Option<f64>,
}

/// Regression window of the energy power-law fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub t_min: f64,
    pub t_max: f64,
}

/// A complete experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub scheme: SchemeConfig,
    pub schedule: Vec<Segment>,
    pub initial: InitialCondition,
    pub output: OutputConfig,
    #[serde(default)]
    pub m0: Option<f64>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
    #[serde(default)]
    pub fit: Option<FitSection>,
}

fn invariant(path: &str, key: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, &path.display().to_string())
}

/// Parses configuration text; `origin` labels error messages.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let key = if key == "." { "<root>".to_string() } else { key };
        invariant(origin, &key, e.inner().to_string())
    })?;
    cfg.validate(origin)?;
    Ok(cfg)
}

impl RunConfig {
    /// Checks every invariant the solver relies on, naming the offending key.
    pub fn validate(&self, origin: &str) -> Result<()> {
        let finite_pos = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invariant(origin, key, format!("{v} must be a positive finite number")))
            }
        };
        let finite_nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invariant(origin, key, format!("{v} must be a nonnegative finite number")))
            }
        };
        finite_pos("domain.X1", self.domain.x1)?;
        finite_pos("domain.X2", self.domain.x2)?;
        Grid::new(self.domain.x1, self.domain.x2, self.grid.n1, self.grid.n2)
            .map_err(|e| invariant(origin, "grid", e.to_string()))?;
        finite_pos("model.epsilon", self.model.epsilon)?;
        finite_pos("model.delta", self.model.delta)?;
        finite_nonneg("scheme.A0", self.scheme.a0)?;
        finite_nonneg("scheme.A1", self.scheme.a1)?;
        finite_nonneg("scheme.init_A", self.scheme.init_a)?;
        Schedule::new(self.schedule.clone()).map_err(|e| invariant(origin, "schedule", e.to_string()))?;
        match self.initial {
            InitialCondition::SineBump { amplitude, offset } => {
                if !amplitude.is_finite() {
                    return Err(invariant(origin, "initial.amplitude", "must be finite"));
                }
                if !offset.is_finite() {
                    return Err(invariant(origin, "initial.offset", "must be finite"));
                }
            }
            InitialCondition::Constant { offset } => {
                if !offset.is_finite() {
                    return Err(invariant(origin, "initial.offset", "must be finite"));
                }
            }
            InitialCondition::Random { amplitude, offset, .. } => {
                finite_pos("initial.amplitude", amplitude)?;
                if !offset.is_finite() {
                    return Err(invariant(origin, "initial.offset", "must be finite"));
                }
            }
        }
        let times = &self.output.snapshot_times;
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invariant(
                origin,
                "output.snapshot_times",
                "must be finite, nonnegative and sorted",
            ));
        }
        if let Some(m0) = self.m0 {
            finite_pos("m0", m0)?;
        }
        if let Some(c) = &self.convergence {
            finite_pos("convergence.dt_base", c.dt_base)?;
            finite_pos("convergence.t_final", c.t_final)?;
            if let Some(r) = c.dt_ref {
                finite_pos("convergence.dt_ref", r)?;
            }
        }
        if let Some(f) = &self.fit {
            finite_pos("fit.t_min", f.t_min)?;
            if !(f.t_max > f.t_min && f.t_max.is_finite()) {
                return Err(invariant(origin, "fit.t_max", "must exceed fit.t_min"));
            }
        }
        Ok(())
    }

    pub fn model_setup(&self) -> ModelSetup {
        ModelSetup {
            epsilon: self.model.epsilon,
            delta: self.model.delta,
            image_range: self.model.kernel_image_range,
            a0: self.scheme.a0,
            a1: self.scheme.a1,
            dealias: self.scheme.dealias,
            init_method: self.scheme.init_method,
            init_a: self.scheme.init_a,
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.schedule.clone())
    }

    pub fn to_coarsening(&self) -> Result<CoarseningConfig> {
        Ok(CoarseningConfig {
            x1: self.domain.x1,
            x2: self.domain.x2,
            n1: self.grid.n1,
            n2: self.grid.n2,
            model: self.model_setup(),
            schedule: self.schedule()?,
            initial: self.initial.clone(),
            record_every: self.output.energy_every_steps,
            snapshot_times: self.output.snapshot_times.clone(),
            m0: self.m0,
        })
    }

    pub fn to_convergence(&self) -> Result<ConvergenceConfig> {
        let c = self
            .convergence
            .as_ref()
            .ok_or_else(|| Error::config("the configuration has no `convergence` section"))?;
        Ok(ConvergenceConfig {
            x1: self.domain.x1,
            x2: self.domain.x2,
            n1: self.grid.n1,
            n2: self.grid.n2,
            model: self.model_setup(),
            dt_base: c.dt_base,
            k_max: c.k_max,
            dt_ref: c.dt_ref,
            t_final: c.t_final,
            initial: self.initial.clone(),
        })
    }

    /// Configured fit window, or `(10, 0.8 T)`.
    pub fn fit_window(&self) -> (f64, f64) {
        match &self.fit {
            Some(f) => (f.t_min, f.t_max),
            None => {
                let t = self.schedule.last().map(|s| s.t_end).unwrap_or(0.0);
                (10.0, 0.8 * t)
            }
        }
    }
}
