//! TOML job configuration.
//!
//! ```toml
//! [model]
//! dimension = 4
//! nu = 0.5            # or mass_sq = -2.0
//! kind = "global_ads" # or "half_strip"
//!
//! [symbol]
//! type = "robin"
//! theta = 1.0
//! ```
//!
//! `grid`, `truncation`, `job`, `bounce`, `sweep` and `deform` are optional
//! and fall back to the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary_symbol::BoundarySymbol;
use crate::error::{Error, Result};
use crate::evolution::DeformationProfile;
use crate::geometry::{build_model, build_model_nu, ModelKind, RadialChart, SpacetimeModel};
use crate::mode_spectrum::SpectrumSettings;
use crate::propagators::TimeGrid;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub dimension: usize,
    pub nu: Option<f64>,
    pub mass_sq: Option<f64>,
    #[serde(default = "default_kind")]
    pub kind: ModelKindName,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindName {
    GlobalAds,
    HalfStrip,
}

fn default_kind() -> ModelKindName {
    ModelKindName::GlobalAds
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub intervals: usize,
    pub match_radius: f64,
    pub boundary_layer: f64,
    pub dt: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// finite-difference intervals for the 1+1 evolution
    pub fd_intervals: usize,
    /// dτ / h for the evolution
    pub courant: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        let c = RadialChart::default();
        let t = TimeGrid::default();
        GridBlock {
            intervals: c.intervals,
            match_radius: c.match_radius,
            boundary_layer: c.boundary_layer,
            dt: t.dt,
            t_min: t.t0,
            t_max: t.t_end(),
            fd_intervals: 400,
            courant: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruncationBlock {
    pub l_max: usize,
    pub k_max: usize,
    pub omega_max: Option<f64>,
    pub epsilon: f64,
    pub tail_tolerance: f64,
}

impl Default for TruncationBlock {
    fn default() -> Self {
        TruncationBlock { l_max: 20, k_max: 60, omega_max: None, epsilon: 0.0, tail_tolerance: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobBlock {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub tolerance_scale: f64,
    /// size of the randomized pair battery
    pub battery: usize,
}

impl Default for JobBlock {
    fn default() -> Self {
        JobBlock { seed: 0, out: None, tolerance_scale: 1.0, battery: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BounceBlock {
    pub rho0: f64,
    pub width: f64,
}

impl Default for BounceBlock {
    fn default() -> Self {
        BounceBlock { rho0: std::f64::consts::FRAC_PI_4, width: 0.08 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub ell: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub count: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock { ell: 0, theta_min: -5.0, theta_max: 5.0, count: 41 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformBlock {
    pub amplitude: f64,
    pub tau_center: f64,
    pub tau_half_width: f64,
    pub rho_center: f64,
    pub rho_half_width: f64,
    pub early_window: [f64; 2],
    /// start of the late window; the battery is placed after it
    pub late_start: f64,
}

impl Default for DeformBlock {
    fn default() -> Self {
        DeformBlock {
            amplitude: 0.4,
            tau_center: 2.2,
            tau_half_width: 0.6,
            rho_center: 0.8,
            rho_half_width: 0.4,
            early_window: [0.5, 1.2],
            late_start: 3.3,
        }
    }
}

impl DeformBlock {
    pub fn profile(&self) -> DeformationProfile {
        DeformationProfile {
            amplitude: self.amplitude,
            tau_center: self.tau_center,
            tau_half_width: self.tau_half_width,
            rho_center: self.rho_center,
            rho_half_width: self.rho_half_width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub model: ModelBlock,
    pub symbol: BoundarySymbol,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub truncation: TruncationBlock,
    #[serde(default)]
    pub job: JobBlock,
    #[serde(default)]
    pub bounce: BounceBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub deform: DeformBlock,
}

const REQUIRED: [&str; 2] = ["model", "symbol"];

impl JobConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for key in REQUIRED {
            if !value.contains_key(key) {
                return Err(Error::Config(format!("missing key `{key}`")));
            }
        }
        let model = value["model"].as_table().ok_or_else(|| Error::Config("`model` must be a table".into()))?;
        if !model.contains_key("dimension") {
            return Err(Error::Config("missing key `model.dimension`".into()));
        }
        if !model.contains_key("nu") && !model.contains_key("mass_sq") {
            return Err(Error::Config("missing key `model.nu` (or `model.mass_sq`)".into()));
        }
        let symbol = value["symbol"].as_table().ok_or_else(|| Error::Config("`symbol` must be a table".into()))?;
        if !symbol.contains_key("type") {
            return Err(Error::Config("missing key `symbol.type`".into()));
        }
        let cfg: JobConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.nu.is_some() && self.model.mass_sq.is_some() {
            return Err(Error::Config("give only one of `model.nu` and `model.mass_sq`".into()));
        }
        let checks: [(&str, bool); 7] = [
            ("grid.dt", self.grid.dt > 0.0),
            ("grid.t_max", self.grid.t_max > self.grid.t_min),
            ("grid.fd_intervals", self.grid.fd_intervals >= 16),
            ("grid.courant", self.grid.courant > 0.0),
            ("truncation.k_max", self.truncation.k_max > 0),
            ("truncation.tail_tolerance", self.truncation.tail_tolerance > 0.0),
            ("job.tolerance_scale", self.job.tolerance_scale > 0.0),
        ];
        for (key, ok) in checks {
            if !ok {
                return Err(Error::Config(format!("`{key}` out of range")));
            }
        }
        self.chart()?;
        self.spacetime()?;
        Ok(())
    }

    pub fn spacetime(&self) -> Result<SpacetimeModel> {
        let kind = match self.model.kind {
            ModelKindName::GlobalAds => ModelKind::GlobalAds,
            ModelKindName::HalfStrip => ModelKind::HalfStrip1p1,
        };
        match (self.model.nu, self.model.mass_sq) {
            (Some(nu), _) => build_model_nu(self.model.dimension, nu, kind),
            (None, Some(m2)) => build_model(self.model.dimension, m2, kind),
            (None, None) => Err(Error::Config("missing key `model.nu` (or `model.mass_sq`)".into())),
        }
    }

    /// The 1+1 model with the same ν, used by the evolution jobs.
    pub fn strip(&self) -> Result<SpacetimeModel> {
        let m = self.spacetime()?;
        build_model_nu(2, m.nu, ModelKind::HalfStrip1p1)
    }

    pub fn chart(&self) -> Result<RadialChart> {
        RadialChart::new(self.grid.match_radius, self.grid.boundary_layer, self.grid.intervals)
    }

    pub fn spectrum_settings(&self) -> Result<SpectrumSettings> {
        Ok(SpectrumSettings {
            chart: self.chart()?,
            l_max: self.truncation.l_max,
            k_max: self.truncation.k_max,
            omega_max: self.truncation.omega_max,
            ..Default::default()
        })
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::covering(self.grid.t_min, self.grid.t_max, self.grid.dt)
    }
}
