//! Scenario files: one JSON document describing the cell, ladder, controller,
//! channel and stream. Unknown keys are rejected; relative paths resolve
//! against the file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::channel::{load_trace, ChannelScenario, ChannelSource, MobilityTrace, PathLossModel, SnrToMcsMap, TraceFile};
use crate::controller::{validate_ladder, ControllerState, Mode, QualityLadder, RateController};
use crate::error::{Error, Result};
use crate::metrics::FreezeParams;
use crate::nr_rate::{CarrierConfig, CellConfig};
use crate::streaming::StreamParams;

/// `cell` accepts either `{"carriers": [...]}` or one carrier's fields inline.
fn de_cell<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CellConfig, D::Error> {
    let value = Value::deserialize(d)?;
    let cell = if value.get("carriers").is_some() {
        serde_json::from_value::<CellConfig>(value)
    } else {
        serde_json::from_value::<CarrierConfig>(value).map(CellConfig::single)
    };
    cell.map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default = "default_mode")]
    pub mode: ModeKind,
    #[serde(default = "default_sampling")]
    pub sampling_period_s: f64,
    #[serde(default = "default_throttle")]
    pub min_switch_interval_s: f64,
    /// Profile used in fixed mode; the ladder's top profile when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_profile: Option<String>,
    /// Starting profile in adaptive mode; the top profile when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_profile: Option<String>,
}

fn default_mode() -> ModeKind {
    ModeKind::Adaptive
}
fn default_sampling() -> f64 {
    1.0
}
fn default_throttle() -> f64 {
    3.0
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            mode: default_mode(),
            sampling_period_s: default_sampling(),
            min_switch_interval_s: default_throttle(),
            fixed_profile: None,
            initial_profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<MobilityTrace>,
    /// `t_s,distance_m` file; alternative to inline waypoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints_file: Option<PathBuf>,
    #[serde(default)]
    pub path_loss: PathLossModel,
    #[serde(default)]
    pub snr_map: SnrToMcsMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSection {
    /// Path to a `t_s,mcs` file.
    Trace(PathBuf),
    Mobility(MobilitySection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    #[serde(default = "default_tick")]
    pub tick_ms: u32,
    #[serde(default = "default_stall")]
    pub switch_stall_ms: f64,
    #[serde(default = "default_cap")]
    pub cap_ms: f64,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default = "default_freeze_threshold")]
    pub freeze_excess_threshold_ms: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
}

fn default_tick() -> u32 {
    10
}
fn default_stall() -> f64 {
    277.0
}
fn default_cap() -> f64 {
    1000.0
}
fn default_efficiency() -> f64 {
    0.93
}
fn default_freeze_threshold() -> f64 {
    100.0
}
fn default_duration() -> f64 {
    140.0
}

impl Default for StreamSection {
    fn default() -> Self {
        StreamSection {
            tick_ms: default_tick(),
            switch_stall_ms: default_stall(),
            cap_ms: default_cap(),
            efficiency: default_efficiency(),
            freeze_excess_threshold_ms: default_freeze_threshold(),
            duration_s: default_duration(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(deserialize_with = "de_cell")]
    pub cell: CellConfig,
    #[serde(default)]
    pub ladder: QualityLadder,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSection>,
    #[serde(default)]
    pub stream: StreamSection,
    /// Unused; kept so configs can pin one for stochastic extensions.
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut config: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        ScenarioConfig::from_json(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        validate_ladder(&self.ladder)?;
        for name in [&self.controller.fixed_profile, &self.controller.initial_profile]
            .into_iter()
            .flatten()
        {
            self.ladder.get(name)?;
        }
        self.stream_params().validate()?;
        if !(self.stream.efficiency > 0.0 && self.stream.efficiency <= 1.0) {
            return Err(Error::Config(format!("efficiency {} not in (0, 1]", self.stream.efficiency)));
        }
        if !(self.stream.freeze_excess_threshold_ms >= 0.0) {
            return Err(Error::Config("freeze_excess_threshold_ms must be >= 0".into()));
        }
        if let Some(ChannelSection::Mobility(m)) = &self.channel {
            if m.waypoints.is_some() == m.waypoints_file.is_some() {
                return Err(Error::Config(
                    "mobility needs exactly one of `waypoints` or `waypoints_file`".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn stream_params(&self) -> StreamParams {
        StreamParams {
            tick_ms: self.stream.tick_ms,
            switch_stall_ms: self.stream.switch_stall_ms,
            cap_ms: self.stream.cap_ms,
            duration_s: self.stream.duration_s,
        }
    }

    pub fn freeze_params(&self) -> FreezeParams {
        FreezeParams {
            nominal_fps: self.ladder.top().fps as f64,
            freeze_excess_threshold_ms: self.stream.freeze_excess_threshold_ms,
        }
    }

    /// Build the channel, reading any referenced files.
    pub fn channel_scenario(&self) -> Result<Arc<ChannelScenario>> {
        let section = self
            .channel
            .as_ref()
            .ok_or_else(|| Error::Config("no `channel` section".into()))?;
        let source = match section {
            ChannelSection::Trace(path) => match load_trace(&self.resolve(path))? {
                TraceFile::Mcs(trace) => ChannelSource::Trace(trace),
                TraceFile::Distance(_) => {
                    return Err(Error::Config(format!(
                        "{}: expected a `t_s,mcs` trace",
                        self.resolve(path).display()
                    )))
                }
            },
            ChannelSection::Mobility(m) => {
                let trace = match (&m.waypoints, &m.waypoints_file) {
                    (Some(w), _) => w.clone(),
                    (None, Some(path)) => match load_trace(&self.resolve(path))? {
                        TraceFile::Distance(trace) => trace,
                        TraceFile::Mcs(_) => {
                            return Err(Error::Config(format!(
                                "{}: expected a `t_s,distance_m` trace",
                                self.resolve(path).display()
                            )))
                        }
                    },
                    (None, None) => unreachable!("validated"),
                };
                ChannelSource::Mobility {
                    trace,
                    path_loss: m.path_loss.clone(),
                    snr_map: m.snr_map.clone(),
                }
            }
        };
        Ok(Arc::new(ChannelScenario::new(
            source,
            self.cell.clone(),
            self.stream.efficiency,
            self.stream.duration_s,
        )?))
    }

    /// Controller for `mode`, or the configured mode when `None`.
    pub fn controller(&self, mode: Option<ModeKind>, fixed_profile: Option<&str>) -> Result<RateController> {
        let top = self.ladder.top().name.clone();
        let mode = match mode.unwrap_or(self.controller.mode) {
            ModeKind::Adaptive => Mode::Adaptive,
            ModeKind::Fixed => Mode::Fixed(
                fixed_profile
                    .map(str::to_string)
                    .or_else(|| self.controller.fixed_profile.clone())
                    .unwrap_or(top),
            ),
        };
        let state = ControllerState::new(&self.ladder, mode, self.controller.initial_profile.as_deref())?
            .with_intervals(self.controller.min_switch_interval_s, self.controller.sampling_period_s)?;
        RateController::new(self.ladder.clone(), state)
    }
}
