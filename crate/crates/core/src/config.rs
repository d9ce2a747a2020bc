//! TOML game configurations.

use std::path::Path;

use serde::Deserialize;

use crate::dpp::{DppConfig, DppMode};
use crate::dynamics::IntegratorConfig;
use crate::error::{Error, Result};
use crate::game::{ControlBox, GameSpec, TargetedEnsemble};
use crate::hji::{Axis, SchemeConfig, SpatialGrid};
use crate::measure::{quantize, EmpiricalMeasure, LawFamily, QuantizationSpec};

/// Configurations bundled with the library, by name.
pub const SHIPPED: &[(&str, &str)] = &[
    ("example1_gaussian", include_str!("../configs/example1_gaussian.toml")),
    ("example2_dirac", include_str!("../configs/example2_dirac.toml")),
    ("mean_variance", include_str!("../configs/mean_variance.toml")),
    ("vehicles", include_str!("../configs/vehicles.toml")),
    ("quadratic_coupling", include_str!("../configs/quadratic_coupling.toml")),
];

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum LawConfig {
    Gaussian {
        #[serde(default)]
        mean: f64,
        #[serde(default = "unit")]
        variance: f64,
        atoms: Option<usize>,
    },
    Uniform {
        lo: f64,
        hi: f64,
        atoms: Option<usize>,
    },
    Dirac {
        point: Vec<f64>,
    },
    /// Explicit atoms, uniform weights unless given.
    Atoms {
        points: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    },
}

fn unit() -> f64 {
    1.0
}

impl LawConfig {
    /// Empirical law; `default_atoms` applies to quantized families without
    /// an explicit count.
    pub fn measure(&self, default_atoms: usize) -> Result<EmpiricalMeasure> {
        let quantized = |family, atoms: Option<usize>| {
            quantize(&QuantizationSpec {
                family,
                atom_count: atoms.unwrap_or(default_atoms),
            })
        };
        match self {
            LawConfig::Gaussian { mean, variance, atoms } => quantized(
                LawFamily::Gaussian {
                    mean: *mean,
                    variance: *variance,
                },
                *atoms,
            ),
            LawConfig::Uniform { lo, hi, atoms } => quantized(LawFamily::Uniform { lo: *lo, hi: *hi }, *atoms),
            LawConfig::Dirac { point } => EmpiricalMeasure::dirac(point),
            LawConfig::Atoms { points, weights } => match weights {
                Some(w) => EmpiricalMeasure::new(points, w.clone()),
                None => EmpiricalMeasure::uniform(points),
            },
        }
    }

    fn dim(&self) -> usize {
        match self {
            LawConfig::Gaussian { .. } | LawConfig::Uniform { .. } => 1,
            LawConfig::Dirac { point } => point.len(),
            LawConfig::Atoms { points, .. } => points.first().map_or(0, Vec::len),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppSection {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_points() -> usize {
    21
}

fn default_substeps() -> usize {
    8
}

impl Default for DppSection {
    fn default() -> Self {
        Self {
            points: default_points(),
            substeps: default_substeps(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    horizon: f64,
    dim: usize,
    f: OneOrMany<String>,
    l: String,
    m: String,
    #[serde(rename = "U")]
    u: Vec<(f64, f64)>,
    #[serde(rename = "V")]
    v: Vec<(f64, f64)>,
    x_law: LawConfig,
    z_law: LawConfig,
    #[serde(default = "one")]
    particles: usize,
    #[serde(default = "default_resolution")]
    control_resolution: OneOrMany<usize>,
    #[serde(default = "default_steps")]
    time_steps: usize,
    grid: Option<GridConfig>,
    lipschitz: Option<f64>,
    #[serde(default)]
    dpp: DppSection,
}

fn one() -> usize {
    1
}

fn default_resolution() -> OneOrMany<usize> {
    OneOrMany::One(5)
}

fn default_steps() -> usize {
    20
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct GameConfig {
    pub name: String,
    pub spec: GameSpec,
    pub x_law: LawConfig,
    pub z_law: LawConfig,
    pub particles: usize,
    pub u_resolution: usize,
    pub v_resolution: usize,
    pub time_steps: usize,
    pub grid: Option<GridConfig>,
    pub dpp: DppSection,
}

impl GameConfig {
    pub fn from_toml_str(name: &str, src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| Error::Config(format!("{name}: {e}")))?;
        let f = raw.f.into_vec();
        if f.len() != raw.dim {
            return Err(Error::Config(format!(
                "{name}: dim = {} but f has {} components",
                raw.dim,
                f.len()
            )));
        }
        for (label, law) in [("x_law", &raw.x_law), ("z_law", &raw.z_law)] {
            if law.dim() != raw.dim {
                return Err(Error::Config(format!(
                    "{name}: {label} has dimension {}, expected {}",
                    law.dim(),
                    raw.dim
                )));
            }
        }
        let resolution = raw.control_resolution.into_vec();
        let (u_resolution, v_resolution) = match resolution.as_slice() {
            [r] => (*r, *r),
            [a, b] => (*a, *b),
            _ => {
                return Err(Error::Config(format!(
                    "{name}: control_resolution needs one or two entries"
                )))
            }
        };
        if raw.particles == 0 || raw.time_steps == 0 {
            return Err(Error::Config(format!(
                "{name}: particles and time_steps must be positive"
            )));
        }
        let f_refs: Vec<&str> = f.iter().map(String::as_str).collect();
        let mut spec = GameSpec::from_sources(
            raw.horizon,
            ControlBox::new(raw.u)?,
            ControlBox::new(raw.v)?,
            &f_refs,
            &raw.l,
            &raw.m,
        )?;
        if let Some(k) = raw.lipschitz {
            if !(k > 0.0) {
                return Err(Error::Config(format!("{name}: lipschitz must be positive")));
            }
            spec = spec.with_lipschitz(k);
        }
        if let Some(g) = &raw.grid {
            if g.lo.len() != g.hi.len() || g.lo.len() != g.points.len() {
                return Err(Error::Config(format!(
                    "{name}: grid lo, hi and points differ in length"
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            spec,
            x_law: raw.x_law,
            z_law: raw.z_law,
            particles: raw.particles,
            u_resolution,
            v_resolution,
            time_steps: raw.time_steps,
            grid: raw.grid,
            dpp: raw.dpp,
        })
    }

    pub fn shipped(name: &str) -> Option<Self> {
        SHIPPED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, src)| Self::from_toml_str(n, src).expect("shipped configurations parse"))
    }

    /// A shipped name or a path to a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some(cfg) = Self::shipped(name_or_path) {
            return Ok(cfg);
        }
        let path = Path::new(name_or_path);
        let src = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{name_or_path}: {e}")))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name_or_path);
        Self::from_toml_str(name, &src)
    }

    pub fn ensemble(&self) -> Result<TargetedEnsemble> {
        self.ensemble_with(self.particles)
    }

    pub fn ensemble_with(&self, particles: usize) -> Result<TargetedEnsemble> {
        TargetedEnsemble::new(self.x_law.measure(particles)?, self.z_law.measure(particles)?)
    }

    /// HJI grid for `particles` atoms. A grid given per state coordinate is
    /// repeated for every particle.
    pub fn hji_grid(&self, particles: usize) -> Result<SpatialGrid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{}: no grid section", self.name)))?;
        let n = self.spec.dim;
        let axes: Vec<Axis> =
            g.lo.iter()
                .zip(&g.hi)
                .zip(&g.points)
                .map(|((lo, hi), p)| Axis::new(*lo, *hi, *p))
                .collect::<Result<_>>()?;
        let axes = if axes.len() == n {
            axes.iter().cycle().take(n * particles).copied().collect()
        } else if axes.len() == n * particles {
            axes
        } else {
            return Err(Error::Config(format!(
                "{}: grid has {} axes; expected {n} or {}",
                self.name,
                axes.len(),
                n * particles
            )));
        };
        SpatialGrid::new(axes)
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            u_resolution: self.u_resolution,
            v_resolution: self.v_resolution,
            ..SchemeConfig::default()
        }
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig::rk4(self.dpp.substeps)
    }

    /// Adaptive-grid DPP settings.
    pub fn dpp_config(&self) -> DppConfig {
        DppConfig {
            mode: DppMode::Adaptive {
                points: self.dpp.points,
            },
            ..DppConfig::exact(self.time_steps, self.u_resolution, self.v_resolution)
        }
        .with_integrator(self.integrator())
    }
}
