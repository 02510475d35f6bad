//! MCS-over-time and true link capacity for a scenario.
//!
//! Two sources: replay of an MCS trace (a step function) or a mobility walk
//! mapped through log-distance path loss to SNR and then linearly onto the
//! MCS range.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nr_rate::{CellConfig, RateEstimate, RateTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct MobilityTrace {
    waypoints: Vec<(f64, f64)>,
}

impl MobilityTrace {
    pub fn new(waypoints: Vec<(f64, f64)>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::invalid("mobility trace needs at least 2 waypoints"));
        }
        if waypoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("waypoint times must be strictly increasing"));
        }
        if waypoints.iter().any(|&(t, d)| !t.is_finite() || !(d >= 0.0)) {
            return Err(Error::invalid("waypoint distances must be >= 0"));
        }
        Ok(MobilityTrace { waypoints })
    }

    /// Out to `max_distance_m` and back, linear in time.
    pub fn triangular(duration_s: f64, max_distance_m: f64) -> Result<Self> {
        MobilityTrace::new(vec![
            (0.0, 0.0),
            (duration_s / 2.0, max_distance_m),
            (duration_s, 0.0),
        ])
    }

    pub fn waypoints(&self) -> &[(f64, f64)] {
        &self.waypoints
    }

    pub fn start_s(&self) -> f64 {
        self.waypoints[0].0
    }

    pub fn end_s(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].0
    }

    /// Piecewise-linear distance at `t_s`.
    pub fn distance_at(&self, t_s: f64) -> Result<f64> {
        if !(t_s >= self.start_s() && t_s <= self.end_s()) {
            return Err(Error::OutOfRange {
                what: "time",
                value: t_s,
                min: self.start_s(),
                max: self.end_s(),
            });
        }
        let i = self
            .waypoints
            .partition_point(|&(t, _)| t <= t_s)
            .clamp(1, self.waypoints.len() - 1);
        let (t0, d0) = self.waypoints[i - 1];
        let (t1, d1) = self.waypoints[i];
        Ok(d0 + (d1 - d0) * (t_s - t0) / (t1 - t0))
    }
}

impl TryFrom<Vec<(f64, f64)>> for MobilityTrace {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        MobilityTrace::new(v)
    }
}

impl From<MobilityTrace> for Vec<(f64, f64)> {
    fn from(m: MobilityTrace) -> Self {
        m.waypoints
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossModel {
    /// SNR at the 1 m reference distance.
    pub snr0_db: f64,
    pub pathloss_exponent: f64,
    pub min_distance_m: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel {
            snr0_db: 25.0,
            pathloss_exponent: 2.4,
            min_distance_m: 1.0,
        }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.pathloss_exponent > 0.0) || !(self.min_distance_m > 0.0) {
            return Err(Error::invalid("path loss exponent and min distance must be > 0"));
        }
        Ok(())
    }

    pub fn snr_at(&self, distance_m: f64) -> f64 {
        self.snr0_db - 10.0 * self.pathloss_exponent * distance_m.max(self.min_distance_m).log10()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrToMcsMap {
    #[serde(default)]
    pub snr_min_db: f64,
    #[serde(default = "default_snr_max")]
    pub snr_max_db: f64,
    /// Defaults to the highest index of the cell's MCS table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_index: Option<u32>,
}

fn default_snr_max() -> f64 {
    25.0
}

impl Default for SnrToMcsMap {
    fn default() -> Self {
        SnrToMcsMap {
            snr_min_db: 0.0,
            snr_max_db: default_snr_max(),
            max_index: None,
        }
    }
}

impl SnrToMcsMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_min_db < self.snr_max_db) {
            return Err(Error::invalid("snr_min_db must be below snr_max_db"));
        }
        Ok(())
    }

    /// `clamp(floor(max_index * (snr - min) / (max - min)), 0, max_index)`.
    pub fn mcs_from_snr(&self, snr_db: f64, max_index: u32) -> u32 {
        let max_index = self.max_index.unwrap_or(max_index);
        let frac = (snr_db - self.snr_min_db) / (self.snr_max_db - self.snr_min_db);
        let raw = (max_index as f64 * frac).floor();
        if raw.is_nan() || raw <= 0.0 {
            0
        } else {
            (raw as u32).min(max_index)
        }
    }
}

/// Rows of `(t_s, mcs_index)`; each value holds until the next row.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTrace {
    rows: Vec<(f64, u32)>,
}

impl McsTrace {
    pub fn new(rows: Vec<(f64, u32)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("MCS trace is empty"));
        }
        if rows.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("trace times must be strictly increasing"));
        }
        Ok(McsTrace { rows })
    }

    pub fn rows(&self) -> &[(f64, u32)] {
        &self.rows
    }

    pub fn value_at(&self, t_s: f64) -> Result<u32> {
        let i = self.rows.partition_point(|&(t, _)| t <= t_s);
        if i == 0 {
            return Err(Error::OutOfRange {
                what: "time",
                value: t_s,
                min: self.rows[0].0,
                max: f64::INFINITY,
            });
        }
        Ok(self.rows[i - 1].1)
    }
}

/// Contents of a trace file, distinguished by its header line.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceFile {
    Mcs(McsTrace),
    Distance(MobilityTrace),
}

/// Parse trace text: `#` comments, then a `t_s,mcs` or `t_s,distance_m` header.
pub fn parse_trace(path: &Path, text: &str) -> Result<TraceFile> {
    let fail = |line: usize, reason: String| Error::Trace {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_line, header) = lines.next().ok_or_else(|| fail(0, "no header line".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let is_mcs = match columns[..] {
        ["t_s", "mcs"] => true,
        ["t_s", "distance_m"] => false,
        _ => {
            return Err(fail(
                header_line,
                format!("header must be `t_s,mcs` or `t_s,distance_m`, got {header:?}"),
            ))
        }
    };
    let mut rows = Vec::new();
    for (line, text) in lines {
        let (t, v) = text
            .split_once(',')
            .ok_or_else(|| fail(line, "expected two columns".into()))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| fail(line, format!("bad time {t:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| fail(line, format!("bad value {v:?}")))?;
        if is_mcs && (v.fract() != 0.0 || v < 0.0) {
            return Err(fail(line, format!("MCS index must be a non-negative integer, got {v}")));
        }
        rows.push((line, t, v));
    }
    if let Some(w) = rows.windows(2).find(|w| !(w[1].1 > w[0].1)) {
        return Err(fail(w[1].0, "times must be strictly increasing".into()));
    }
    let pairs = rows.into_iter().map(|(_, t, v)| (t, v));
    if is_mcs {
        McsTrace::new(pairs.map(|(t, v)| (t, v as u32)).collect())
            .map(TraceFile::Mcs)
            .map_err(|e| fail(header_line, e.to_string()))
    } else {
        MobilityTrace::new(pairs.collect())
            .map(TraceFile::Distance)
            .map_err(|e| fail(header_line, e.to_string()))
    }
}

pub fn load_trace(path: &Path) -> Result<TraceFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(path, &text)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    Trace(McsTrace),
    Mobility {
        trace: MobilityTrace,
        path_loss: PathLossModel,
        snr_map: SnrToMcsMap,
    },
}

/// An immutable channel: MCS source, cell and the fraction of the estimate
/// actually delivered.
#[derive(Debug, Clone)]
pub struct ChannelScenario {
    source: ChannelSource,
    cell: CellConfig,
    efficiency: f64,
    duration_s: f64,
    rates: RateTable,
}

impl ChannelScenario {
    pub fn new(source: ChannelSource, cell: CellConfig, efficiency: f64, duration_s: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::invalid(format!("efficiency {efficiency} not in (0, 1]")));
        }
        if !(duration_s > 0.0) || !duration_s.is_finite() {
            return Err(Error::invalid("duration must be > 0"));
        }
        let rates = cell.rate_table()?;
        match &source {
            ChannelSource::Trace(trace) => {
                if let Some(&(_, bad)) = trace.rows().iter().find(|(_, m)| *m > rates.max_index()) {
                    return Err(Error::ReservedIndex {
                        table: cell.mcs_table().name().to_string(),
                        index: bad,
                    });
                }
                if trace.rows()[0].0 > 0.0 {
                    return Err(Error::invalid("MCS trace must start at or before t = 0"));
                }
            }
            ChannelSource::Mobility {
                trace,
                path_loss,
                snr_map,
            } => {
                path_loss.validate()?;
                snr_map.validate()?;
                if snr_map.max_index.is_some_and(|m| m > rates.max_index()) {
                    return Err(Error::invalid("snr map max_index exceeds the MCS table"));
                }
                if trace.start_s() > 0.0 || trace.end_s() < duration_s {
                    return Err(Error::invalid(format!(
                        "mobility trace [{}, {}] s does not cover the {duration_s} s scenario",
                        trace.start_s(),
                        trace.end_s()
                    )));
                }
            }
        }
        Ok(ChannelScenario {
            source,
            cell,
            efficiency,
            duration_s,
            rates,
        })
    }

    pub fn cell(&self) -> &CellConfig {
        &self.cell
    }

    pub fn source(&self) -> &ChannelSource {
        &self.source
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    fn check_time(&self, t_s: f64) -> Result<()> {
        if !(t_s >= 0.0 && t_s <= self.duration_s) {
            return Err(Error::OutOfRange {
                what: "time",
                value: t_s,
                min: 0.0,
                max: self.duration_s,
            });
        }
        Ok(())
    }

    pub fn sample_mcs(&self, t_s: f64) -> Result<u32> {
        self.check_time(t_s)?;
        match &self.source {
            ChannelSource::Trace(trace) => trace.value_at(t_s),
            ChannelSource::Mobility {
                trace,
                path_loss,
                snr_map,
            } => {
                let d = trace.distance_at(t_s)?;
                Ok(snr_map.mcs_from_snr(path_loss.snr_at(d), self.rates.max_index()))
            }
        }
    }

    /// The unscaled estimate a controller would compute at `t_s`.
    pub fn estimate(&self, t_s: f64) -> Result<RateEstimate> {
        let mcs = self.sample_mcs(t_s)?;
        Ok(self
            .rates
            .get(mcs)
            .expect("sampled MCS is within the table")
            .clone()
            .at(t_s))
    }

    /// Ground-truth capacity in Mbps: `efficiency * estimate`.
    pub fn true_capacity(&self, t_s: f64) -> Result<f64> {
        let mcs = self.sample_mcs(t_s)?;
        Ok(self.efficiency * self.rates.mbps(mcs))
    }
}
