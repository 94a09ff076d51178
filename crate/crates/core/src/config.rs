//! Run configuration: one JSON document, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EnergyModel, GateParams};
use crate::motion::MotionParams;
use crate::plan::costmap::ActivityScale;
use crate::plan::PlannerParams;
use crate::sim::{derive_seed, Scenario};
use crate::tfilter::BandParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub single: EnergyModel,
    pub network: EnergyModel,
    pub events_per_camera: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            single: EnergyModel {
                activity_power_w: 50.0,
                detector_power_w: 153.0,
                detector_fps: 14.79,
                cameras: 1,
                workday_h: 10.0,
            },
            network: EnergyModel {
                activity_power_w: 80.0,
                detector_power_w: 153.0,
                detector_fps: 14.79,
                cameras: 32,
                workday_h: 10.0,
            },
            events_per_camera: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Root of all randomness; subcommands derive their own sub-seeds.
    pub seed: u64,
    pub camera_id: String,
    pub motion: MotionParams,
    pub bands: BandParams,
    pub events: GateParams,
    pub energy: EnergyConfig,
    pub planner: PlannerParams,
    pub costmap: ActivityScale,
    /// Scenario JSON file; relative paths resolve against the config file.
    pub scenario: Option<PathBuf>,
    /// Built-in scenario used when `scenario` is unset.
    pub preset: String,
    /// Simulated days produced by `simulate`.
    pub days: u64,
    /// Where `learn` writes and `events`/`plan` read isochronal stores.
    pub store_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            camera_id: "cam0".into(),
            motion: MotionParams::default(),
            bands: BandParams::default(),
            events: GateParams::default(),
            energy: EnergyConfig::default(),
            planner: PlannerParams::default(),
            costmap: ActivityScale::default(),
            scenario: None,
            preset: "walkers".into(),
            days: 1,
            store_dir: None,
        }
    }
}

fn field(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Config {
        field: name.to_string(),
        reason: match e {
            Error::InvalidParameter(m) | Error::InvalidInput(m) => m,
            other => other.to_string(),
        },
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                field: if path == "." { "<root>".into() } else { path },
                reason: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file; relative scenario and store
    /// paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            field: "<file>".into(),
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.scenario, &mut cfg.store_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.camera_id.is_empty() {
            return Err(field("camera_id")(Error::param("must not be empty")));
        }
        self.motion.validate().map_err(field("motion"))?;
        self.bands.validate().map_err(field("bands"))?;
        self.events.validate().map_err(field("events"))?;
        self.energy.single.validate().map_err(field("energy.single"))?;
        self.energy.network.validate().map_err(field("energy.network"))?;
        if !(self.energy.events_per_camera >= 0.0) {
            return Err(field("energy.events_per_camera")(Error::param("must be >= 0")));
        }
        self.planner.validate().map_err(field("planner"))?;
        if !(self.costmap.cost_per_density > 0.0) {
            return Err(field("costmap.cost_per_density")(Error::param("must be positive")));
        }
        if self.scenario.is_none() && !Scenario::PRESETS.contains(&self.preset.as_str()) {
            return Err(field("preset")(Error::param(format!("unknown preset {:?}", self.preset))));
        }
        if self.days == 0 {
            return Err(field("days")(Error::param("must be >= 1")));
        }
        Ok(())
    }

    /// Scenario for this run with its seed derived from the root seed.
    pub fn load_scenario(&self) -> Result<Scenario> {
        let mut s = match &self.scenario {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::Config {
                    field: "scenario".into(),
                    reason: format!("cannot read {}: {e}", p.display()),
                })?;
                Scenario::from_json(&text).map_err(field("scenario"))?
            }
            None => Scenario::preset(&self.preset).map_err(field("preset"))?,
        };
        s.seed = derive_seed(self.seed, "simulate");
        Ok(s)
    }
}
