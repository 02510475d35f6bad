//! Quality-ladder rate controller with a minimum interval between switches.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityProfile {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub bitrate_mbps: f64,
    /// Lowest estimate (inclusive) at which this profile is selected.
    pub min_datarate_mbps: f64,
}

impl QualityProfile {
    pub fn frame_interval_s(&self) -> f64 {
        1.0 / self.fps as f64
    }

    pub fn frame_bits(&self) -> f64 {
        self.bitrate_mbps * 1e6 / self.fps as f64
    }
}

/// Profiles in ascending bitrate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityLadder {
    pub profiles: Vec<QualityProfile>,
}

impl Default for QualityLadder {
    fn default() -> Self {
        let profile = |name: &str, width, height, bitrate_mbps, min_datarate_mbps| QualityProfile {
            name: name.to_string(),
            width,
            height,
            fps: 60,
            bitrate_mbps,
            min_datarate_mbps,
        };
        QualityLadder {
            profiles: vec![
                profile("Q1", 1280, 720, 5.0, 0.0),
                profile("Q2", 1920, 1080, 8.0, 8.0),
                profile("Q3", 3840, 2160, 35.0, 35.0),
            ],
        }
    }
}

impl QualityLadder {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.profiles.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&QualityProfile> {
        self.profiles
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidLadder(format!("no profile named {name:?}")))
    }

    pub fn top(&self) -> &QualityProfile {
        self.profiles.last().expect("validated ladder is non-empty")
    }

    /// Index of the highest profile whose threshold is at or below `datarate_mbps`.
    pub fn select_index(&self, datarate_mbps: f64) -> usize {
        self.profiles
            .iter()
            .rposition(|p| p.min_datarate_mbps <= datarate_mbps)
            .unwrap_or(0)
    }

    pub fn select_profile(&self, datarate_mbps: f64) -> &QualityProfile {
        &self.profiles[self.select_index(datarate_mbps)]
    }
}

/// Check every ladder invariant; the error names the first one violated.
pub fn validate_ladder(ladder: &QualityLadder) -> Result<()> {
    let fail = |msg: String| Err(Error::InvalidLadder(msg));
    if ladder.profiles.is_empty() {
        return fail("ladder has no profiles".into());
    }
    let mut names = HashSet::new();
    for p in &ladder.profiles {
        if !names.insert(p.name.as_str()) {
            return fail(format!("duplicate profile name {:?}", p.name));
        }
        if !(p.bitrate_mbps > 0.0) {
            return fail(format!("profile {} has non-positive bitrate", p.name));
        }
        if p.fps == 0 {
            return fail(format!("profile {} has zero fps", p.name));
        }
        if !p.min_datarate_mbps.is_finite() {
            return fail(format!("profile {} has a non-finite threshold", p.name));
        }
    }
    for pair in ladder.profiles.windows(2) {
        if pair[1].min_datarate_mbps <= pair[0].min_datarate_mbps {
            return fail("thresholds not strictly increasing".into());
        }
        if pair[1].bitrate_mbps <= pair[0].bitrate_mbps {
            return fail("bitrates not ascending".into());
        }
    }
    if ladder.profiles[0].min_datarate_mbps != 0.0 {
        return fail("lowest profile threshold must be 0".into());
    }
    if let Some(p) = ladder.profiles[1..]
        .iter()
        .find(|p| p.min_datarate_mbps < p.bitrate_mbps)
    {
        return fail(format!("profile {} threshold below its bitrate", p.name));
    }
    Ok(())
}

pub fn select_profile(ladder: &QualityLadder, datarate_mbps: f64) -> &QualityProfile {
    ladder.select_profile(datarate_mbps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Adaptive,
    Fixed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Decision {
    Keep,
    Switch { target: String, effective_time_s: f64 },
}

impl Decision {
    pub fn is_switch(&self) -> bool {
        matches!(self, Decision::Switch { .. })
    }

    /// Short form used in log rows.
    pub fn label(&self) -> String {
        match self {
            Decision::Keep => "keep".to_string(),
            Decision::Switch { target, .. } => format!("switch:{target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerState {
    pub current_profile: String,
    pub last_switch_time_s: Option<f64>,
    pub min_switch_interval_s: f64,
    pub sampling_period_s: f64,
    pub mode: Mode,
    last_step_s: Option<f64>,
}

impl ControllerState {
    pub fn new(ladder: &QualityLadder, mode: Mode, initial_profile: Option<&str>) -> Result<Self> {
        validate_ladder(ladder)?;
        let current_profile = match (&mode, initial_profile) {
            (Mode::Fixed(name), _) => ladder.get(name)?.name.clone(),
            (Mode::Adaptive, Some(name)) => ladder.get(name)?.name.clone(),
            (Mode::Adaptive, None) => ladder.top().name.clone(),
        };
        Ok(ControllerState {
            current_profile,
            last_switch_time_s: None,
            min_switch_interval_s: 3.0,
            sampling_period_s: 1.0,
            mode,
            last_step_s: None,
        })
    }

    pub fn with_intervals(mut self, min_switch_interval_s: f64, sampling_period_s: f64) -> Result<Self> {
        if !(min_switch_interval_s > 0.0) || !(sampling_period_s > 0.0) {
            return Err(Error::invalid("switch interval and sampling period must be > 0"));
        }
        self.min_switch_interval_s = min_switch_interval_s;
        self.sampling_period_s = sampling_period_s;
        Ok(self)
    }

    /// Advance one sample. A wanted switch that falls inside the throttle
    /// window is dropped, not queued.
    pub fn step(&self, ladder: &QualityLadder, estimate_mbps: f64, now_s: f64) -> Result<(ControllerState, Decision)> {
        if let Some(last) = self.last_step_s {
            if now_s < last {
                return Err(Error::invalid(format!("time went backwards: {now_s} < {last}")));
            }
        }
        let mut next = self.clone();
        next.last_step_s = Some(now_s);
        if let Mode::Fixed(_) = self.mode {
            return Ok((next, Decision::Keep));
        }
        let target = ladder.select_profile(estimate_mbps.max(0.0));
        if target.name == self.current_profile {
            return Ok((next, Decision::Keep));
        }
        let open = self
            .last_switch_time_s
            .is_none_or(|last| now_s - last >= self.min_switch_interval_s);
        if !open {
            return Ok((next, Decision::Keep));
        }
        next.current_profile = target.name.clone();
        next.last_switch_time_s = Some(now_s);
        Ok((
            next,
            Decision::Switch {
                target: target.name.clone(),
                effective_time_s: now_s,
            },
        ))
    }
}

/// A ladder plus the state stepping over it.
#[derive(Debug, Clone)]
pub struct RateController {
    ladder: QualityLadder,
    state: ControllerState,
}

impl RateController {
    pub fn new(ladder: QualityLadder, state: ControllerState) -> Result<Self> {
        validate_ladder(&ladder)?;
        ladder.get(&state.current_profile)?;
        Ok(RateController { ladder, state })
    }

    pub fn adaptive(ladder: QualityLadder) -> Result<Self> {
        let state = ControllerState::new(&ladder, Mode::Adaptive, None)?;
        RateController::new(ladder, state)
    }

    pub fn ladder(&self) -> &QualityLadder {
        &self.ladder
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn current(&self) -> &QualityProfile {
        self.ladder
            .get(&self.state.current_profile)
            .expect("current profile is always on the ladder")
    }

    pub fn step(&mut self, estimate_mbps: f64, now_s: f64) -> Result<Decision> {
        let (state, decision) = self.state.step(&self.ladder, estimate_mbps, now_s)?;
        self.state = state;
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state_at(profile: &str, last_switch: Option<f64>) -> ControllerState {
        let ladder = QualityLadder::default();
        let mut s = ControllerState::new(&ladder, Mode::Adaptive, Some(profile)).unwrap();
        s.last_switch_time_s = last_switch;
        s
    }

    #[test]
    fn default_ladder_is_valid() {
        validate_ladder(&QualityLadder::default()).unwrap();
    }

    #[test]
    fn ladder_violations() {
        let mut dup_threshold = QualityLadder::default();
        dup_threshold.profiles[2].min_datarate_mbps = 8.0;
        let err = validate_ladder(&dup_threshold).unwrap_err();
        assert!(err.to_string().contains("thresholds not strictly increasing"), "{err}");

        let mut dup_name = QualityLadder::default();
        dup_name.profiles[1].name = "Q1".into();
        assert!(validate_ladder(&dup_name).unwrap_err().to_string().contains("duplicate"));

        let mut zero_rate = QualityLadder::default();
        zero_rate.profiles[0].bitrate_mbps = 0.0;
        assert!(validate_ladder(&zero_rate).unwrap_err().to_string().contains("non-positive bitrate"));

        let mut low_threshold = QualityLadder::default();
        low_threshold.profiles[2].min_datarate_mbps = 30.0;
        assert!(validate_ladder(&low_threshold).is_err());

        let single = QualityLadder {
            profiles: vec![QualityLadder::default().profiles[0].clone()],
        };
        validate_ladder(&single).unwrap();
    }

    #[test]
    fn selection() {
        let ladder = QualityLadder::default();
        assert_eq!(select_profile(&ladder, 40.0).name, "Q3");
        assert_eq!(select_profile(&ladder, 5.0).name, "Q1");
        assert_eq!(select_profile(&ladder, 8.0).name, "Q2");
        assert_eq!(select_profile(&ladder, 35.0).name, "Q3");
        assert_eq!(select_profile(&ladder, 34.999).name, "Q2");
        assert_eq!(select_profile(&ladder, 0.0).name, "Q1");
    }

    #[test]
    fn step_examples() {
        let ladder = QualityLadder::default();
        let (_, d) = state_at("Q3", Some(0.0)).step(&ladder, 20.0, 10.0).unwrap();
        assert_eq!(
            d,
            Decision::Switch {
                target: "Q2".into(),
                effective_time_s: 10.0
            }
        );
        let (_, d) = state_at("Q3", Some(8.0)).step(&ladder, 20.0, 10.0).unwrap();
        assert_eq!(d, Decision::Keep);
        let (_, d) = state_at("Q2", None).step(&ladder, 20.0, 10.0).unwrap();
        assert_eq!(d, Decision::Keep);
        // closed boundary
        let (_, d) = state_at("Q3", Some(7.0)).step(&ladder, 20.0, 10.0).unwrap();
        assert!(d.is_switch());
    }

    #[test]
    fn time_regression_is_rejected() {
        let ladder = QualityLadder::default();
        let (s, _) = state_at("Q3", None).step(&ladder, 100.0, 5.0).unwrap();
        assert!(s.step(&ladder, 100.0, 4.0).is_err());
    }

    #[test]
    fn desire_is_not_queued() {
        let mut c = RateController::adaptive(QualityLadder::default()).unwrap();
        assert!(c.step(20.0, 0.0).unwrap().is_switch());
        assert_eq!(c.step(5.0, 1.0).unwrap(), Decision::Keep);
        assert_eq!(c.step(20.0, 2.0).unwrap(), Decision::Keep);
        // Q1 was wanted at t=1 but the estimate recovered; nothing fires at t=3.
        assert_eq!(c.step(20.0, 3.0).unwrap(), Decision::Keep);
        assert_eq!(c.current().name, "Q2");
    }

    proptest! {
        #[test]
        fn switches_respect_throttle(rates in proptest::collection::vec(0.0f64..200.0, 1..200)) {
            let mut c = RateController::adaptive(QualityLadder::default()).unwrap();
            let mut last: Option<f64> = None;
            for (i, r) in rates.iter().enumerate() {
                let now = i as f64;
                if c.step(*r, now).unwrap().is_switch() {
                    if let Some(prev) = last {
                        prop_assert!(now - prev >= 3.0);
                    }
                    last = Some(now);
                }
            }
        }

        #[test]
        fn constant_stream_switches_at_most_once(rate in 0.0f64..200.0, n in 1usize..100) {
            let mut c = RateController::adaptive(QualityLadder::default()).unwrap();
            let switches = (0..n).filter(|i| c.step(rate, *i as f64).unwrap().is_switch()).count();
            prop_assert!(switches <= 1);
        }

        #[test]
        fn selection_is_monotone(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let ladder = QualityLadder::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(ladder.select_index(lo) <= ladder.select_index(hi));
        }

        #[test]
        fn fixed_mode_never_switches(rates in proptest::collection::vec(0.0f64..200.0, 1..100)) {
            let ladder = QualityLadder::default();
            let state = ControllerState::new(&ladder, Mode::Fixed("Q3".into()), None).unwrap();
            let mut c = RateController::new(ladder, state).unwrap();
            for (i, r) in rates.iter().enumerate() {
                prop_assert_eq!(c.step(*r, i as f64).unwrap(), Decision::Keep);
            }
        }
    }
}
