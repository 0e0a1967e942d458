//! One TOML configuration file covering every pipeline stage.
//!
//! Unknown keys are rejected so typos fail loudly; every field has a
//! default, and the shipped `data/default_config.toml` is the serialized
//! default configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationConfig, ParamEntry, ParameterSpace, WatchdogConfig};
use crate::error::{Error, Result};
use crate::plane_fit::MsacConfig;
use crate::pointcloud::{OpeningSpec, SyntheticRoomSpec};
use crate::room_extract::ExtractParams;
use crate::thermal::{BuildDefaults, HvacSpec, MaterialSet};

/// Defaults for `simulate` runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    /// Integration step, seconds.
    pub dt_s: f64,
    /// Initial zone temperature, °C.
    pub t_init_c: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            dt_s: 60.0,
            t_init_c: 26.0,
        }
    }
}

/// Synthetic weather and HVAC schedule used by `pipeline run` to exercise a
/// freshly built model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub days: f64,
    pub sample_interval_s: f64,
    pub weather_mean_c: f64,
    pub weather_amplitude_c: f64,
    pub weather_peak_hour: f64,
    pub hvac_on_hour: f64,
    pub hvac_off_hour: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            days: 2.0,
            sample_interval_s: 300.0,
            weather_mean_c: 32.0,
            weather_amplitude_c: 6.0,
            weather_peak_hour: 15.0,
            hvac_on_hour: 10.0,
            hvac_off_hour: 18.0,
        }
    }
}

/// One free parameter in the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub path: String,
    pub lower: f64,
    pub upper: f64,
}

/// Calibration section: the solver settings, the free-parameter set, and how
/// far `pipeline run` perturbs the true parameters before recovering them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    pub solver: CalibrationConfig,
    /// Factor applied to every free parameter to form the initial guess in
    /// `pipeline run`.
    pub initial_scale: f64,
    pub free: Vec<FreeParam>,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        let free = ParameterSpace::default_free()
            .entries
            .iter()
            .map(|e| FreeParam {
                path: e.path.to_string(),
                lower: e.lower,
                upper: e.upper,
            })
            .collect();
        CalibrationSettings {
            solver: CalibrationConfig::default(),
            initial_scale: 1.5,
            free,
        }
    }
}

impl CalibrationSettings {
    pub fn parameter_space(&self) -> Result<ParameterSpace> {
        let entries = self
            .free
            .iter()
            .map(|f| {
                Ok(ParamEntry {
                    path: f.path.parse()?,
                    lower: f.lower,
                    upper: f.upper,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParameterSpace::new(entries))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Synthetic room recipe for `gen-cloud` and `pipeline run`.
    pub room: SyntheticRoomSpec,
    pub msac: MsacConfig,
    pub extract: ExtractParams,
    pub materials: MaterialSet,
    pub hvac: HvacSpec,
    pub build: BuildDefaults,
    pub sim: SimSettings,
    pub scenario: ScenarioConfig,
    pub calibration: CalibrationSettings,
    pub watchdog: WatchdogConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        // The default room carries one window and one door so the built
        // model exposes every default free parameter.
        let room = SyntheticRoomSpec {
            openings: vec![
                OpeningSpec { wall: 0, u: 2.0, v: 1.0, width: 1.2, height: 1.5 },
                OpeningSpec { wall: 1, u: 1.5, v: 0.0, width: 0.9, height: 2.0 },
            ],
            ..SyntheticRoomSpec::default()
        };
        PipelineConfig {
            room,
            msac: MsacConfig::default(),
            extract: ExtractParams::default(),
            materials: MaterialSet::default(),
            hvac: HvacSpec::default(),
            build: BuildDefaults::default(),
            sim: SimSettings::default(),
            scenario: ScenarioConfig::default(),
            calibration: CalibrationSettings::default(),
            watchdog: WatchdogConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| line_of(&text, s.start)).unwrap_or(0);
            Error::parse(path, line, e.message().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serialize config")
    }
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}
