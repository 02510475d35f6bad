//! Session QoS metrics: switches, freezes, average framerate, residency, and
//! the comparison between two runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t_s: f64,
    pub from_profile: String,
    pub to_profile: String,
}

/// Everything the client side observed during a session.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionTimeline {
    /// Time the session starts; the gap before the first display is measured from here.
    #[serde(default)]
    pub start_s: f64,
    pub duration_s: f64,
    /// `(frame_id, display_t_s)`, display times strictly increasing.
    pub frame_displays: Vec<(u64, f64)>,
    pub switches: Vec<SwitchEvent>,
    pub dropped_frames: Vec<u64>,
    /// Seconds spent in each profile, in order of first use.
    pub profile_residency: Vec<(String, f64)>,
    #[serde(default)]
    pub frames_emitted: u64,
    #[serde(default)]
    pub frames_queued_at_end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeEvent {
    pub start_s: f64,
    pub duration_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreezeParams {
    pub nominal_fps: f64,
    pub freeze_excess_threshold_ms: f64,
}

impl Default for FreezeParams {
    fn default() -> Self {
        FreezeParams {
            nominal_fps: 60.0,
            freeze_excess_threshold_ms: 100.0,
        }
    }
}

impl FreezeParams {
    pub fn nominal_interval_ms(&self) -> f64 {
        1000.0 / self.nominal_fps
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FreezeScan {
    pub events: Vec<FreezeEvent>,
    /// Set when the timeline had nothing to scan.
    pub warning: Option<String>,
}

/// A freeze is a display gap exceeding the nominal frame interval by more than
/// the threshold; its duration is the excess. The gap before the first display
/// counts from the session start; the tail after the last display does not.
pub fn detect_freezes(timeline: &SessionTimeline, params: &FreezeParams) -> FreezeScan {
    if timeline.frame_displays.is_empty() {
        return FreezeScan {
            events: Vec::new(),
            warning: Some("timeline has no displayed frames".to_string()),
        };
    }
    let interval_ms = params.nominal_interval_ms();
    let mut events = Vec::new();
    let mut previous = timeline.start_s;
    for &(_, shown) in &timeline.frame_displays {
        let excess_ms = (shown - previous) * 1000.0 - interval_ms;
        if excess_ms > params.freeze_excess_threshold_ms {
            events.push(FreezeEvent {
                start_s: previous + interval_ms / 1000.0,
                duration_ms: excess_ms,
            });
        }
        previous = shown;
    }
    FreezeScan {
        events,
        warning: None,
    }
}

fn round_to<S: Serializer>(value: f64, digits: i32, s: S) -> std::result::Result<S::Ok, S::Error> {
    let scale = 10f64.powi(digits);
    s.serialize_f64((value * scale).round() / scale)
}

fn ser_ms3<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    round_to(*v, 3, s)
}
fn ser_ms1<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    round_to(*v, 1, s)
}
fn ser_2<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    round_to(*v, 2, s)
}
fn ser_residency<S: Serializer>(v: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(v.len()))?;
    for (k, f) in v {
        map.serialize_entry(k, &((f * 1e4).round() / 1e4))?;
    }
    map.end()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub s_nb: usize,
    pub f_nb: usize,
    #[serde(serialize_with = "ser_ms3")]
    pub f_tot_ms: f64,
    /// `f_tot_ms / f_nb`, 0 when there are no freezes.
    #[serde(serialize_with = "ser_ms1")]
    pub f_avg_ms: f64,
    #[serde(serialize_with = "ser_2")]
    pub fps_avg: f64,
    /// Fraction of the session spent in each profile.
    #[serde(serialize_with = "ser_residency")]
    pub residency: BTreeMap<String, f64>,
    pub duration_s: f64,
    #[serde(default)]
    pub freezes: Vec<FreezeEvent>,
}

impl MetricsReport {
    /// A report carrying only freeze totals, for comparing externally measured totals.
    pub fn from_totals(f_nb: usize, f_tot_ms: f64, duration_s: f64) -> Self {
        MetricsReport {
            s_nb: 0,
            f_nb,
            f_tot_ms,
            f_avg_ms: if f_nb == 0 { 0.0 } else { f_tot_ms / f_nb as f64 },
            fps_avg: 0.0,
            residency: BTreeMap::new(),
            duration_s,
            freezes: Vec::new(),
        }
    }
}

pub fn compute_report(timeline: &SessionTimeline, params: &FreezeParams) -> MetricsReport {
    let freezes = detect_freezes(timeline, params).events;
    let f_tot_ms = freezes.iter().fold(0.0, |acc, f| acc + f.duration_ms);
    let f_nb = freezes.len();
    let total = timeline.profile_residency.iter().fold(0.0, |acc, (_, s)| acc + s);
    let mut residency = BTreeMap::new();
    for (name, seconds) in &timeline.profile_residency {
        let share = if total > 0.0 { seconds / total } else { 0.0 };
        *residency.entry(name.clone()).or_insert(0.0) += share;
    }
    MetricsReport {
        s_nb: timeline.switches.len(),
        f_nb,
        f_tot_ms,
        f_avg_ms: if f_nb == 0 { 0.0 } else { f_tot_ms / f_nb as f64 },
        fps_avg: if timeline.duration_s > 0.0 {
            timeline.frame_displays.len() as f64 / timeline.duration_s
        } else {
            0.0
        },
        residency,
        duration_s: timeline.duration_s,
        freezes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub baseline_f_tot_ms: f64,
    pub candidate_f_tot_ms: f64,
    /// `1 - candidate/baseline` in percent; absent when the baseline has no freezes.
    pub freeze_time_reduction_pct: Option<f64>,
    pub stall_ms: f64,
    pub stall_count: u32,
    /// Candidate total with every switch stall removed.
    pub stall_free_f_tot_ms: f64,
    pub stall_free_reduction_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn compare_reports(
    baseline: &MetricsReport,
    candidate: &MetricsReport,
    stall_ms: f64,
    stall_count: u32,
) -> Result<ComparisonSummary> {
    if (baseline.duration_s - candidate.duration_s).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "reports cover different durations ({} s vs {} s)",
            baseline.duration_s, candidate.duration_s
        )));
    }
    let stall_free = candidate.f_tot_ms - stall_count as f64 * stall_ms;
    let (reduction, stall_free_reduction, note) = if baseline.f_tot_ms > 0.0 {
        (
            Some(100.0 * (1.0 - candidate.f_tot_ms / baseline.f_tot_ms)),
            Some(100.0 * (1.0 - stall_free / baseline.f_tot_ms)),
            None,
        )
    } else {
        (None, None, Some("baseline has no freeze time; reductions undefined".to_string()))
    };
    Ok(ComparisonSummary {
        baseline_f_tot_ms: baseline.f_tot_ms,
        candidate_f_tot_ms: candidate.f_tot_ms,
        freeze_time_reduction_pct: reduction,
        stall_ms,
        stall_count,
        stall_free_f_tot_ms: stall_free,
        stall_free_reduction_pct: stall_free_reduction,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn periodic(n: u64, fps: f64) -> SessionTimeline {
        SessionTimeline {
            duration_s: n as f64 / fps,
            frame_displays: (0..n).map(|i| (i, (i + 1) as f64 / fps)).collect(),
            ..Default::default()
        }
    }

    /// Displays every `interval_ms`, with extra `gaps` (index, extra ms) inserted.
    fn with_gaps(n: u64, interval_ms: f64, gaps: &[(u64, f64)]) -> SessionTimeline {
        let mut t = 0.0;
        let mut displays = Vec::new();
        for i in 0..n {
            t += interval_ms / 1000.0;
            if let Some((_, extra)) = gaps.iter().find(|(at, _)| *at == i) {
                t += extra / 1000.0;
            }
            displays.push((i, t));
        }
        SessionTimeline {
            duration_s: t,
            frame_displays: displays,
            ..Default::default()
        }
    }

    #[test]
    fn stall_gap_is_one_freeze() {
        let i = 1000.0 / 60.0;
        let tl = with_gaps(100, i, &[(50, 277.0)]);
        let scan = detect_freezes(&tl, &FreezeParams::default());
        assert_eq!(scan.events.len(), 1);
        assert!((scan.events[0].duration_ms - 277.0).abs() < 1e-9);
    }

    #[test]
    fn periodic_has_no_freezes() {
        let scan = detect_freezes(&periodic(600, 60.0), &FreezeParams::default());
        assert!(scan.events.is_empty());
        assert!(scan.warning.is_none());
    }

    #[test]
    fn small_gaps_are_not_freezes() {
        let tl = with_gaps(100, 50.0, &[]);
        assert!(detect_freezes(&tl, &FreezeParams::default()).events.is_empty());
    }

    #[test]
    fn first_frame_gap_counts() {
        let tl = SessionTimeline {
            duration_s: 2.0,
            frame_displays: vec![(0, 0.5), (1, 0.5 + 1.0 / 60.0)],
            ..Default::default()
        };
        let scan = detect_freezes(&tl, &FreezeParams::default());
        assert_eq!(scan.events.len(), 1);
        assert!((scan.events[0].duration_ms - (500.0 - 1000.0 / 60.0)).abs() < 1e-9);
    }

    #[test]
    fn empty_timeline_warns() {
        let scan = detect_freezes(&SessionTimeline::default(), &FreezeParams::default());
        assert!(scan.events.is_empty());
        assert!(scan.warning.is_some());
    }

    #[test]
    fn report_from_planted_freezes() {
        let i = 1000.0 / 60.0;
        let tl = with_gaps(200, i, &[(10, 1000.0), (50, 1200.0), (100, 1300.0), (150, 1260.0)]);
        let r = compute_report(&tl, &FreezeParams::default());
        assert_eq!(r.f_nb, 4);
        assert!((r.f_tot_ms - 4760.0).abs() < 1e-6);
        assert!((r.f_avg_ms - 1190.0).abs() < 1e-6);
        assert_eq!(r.s_nb, 0);
    }

    #[test]
    fn residency_fraction() {
        let tl = SessionTimeline {
            duration_s: 140.0,
            profile_residency: vec![("Q3".into(), 107.0), ("Q2".into(), 20.0), ("Q1".into(), 13.0)],
            ..Default::default()
        };
        let r = compute_report(&tl, &FreezeParams::default());
        assert!((r.residency["Q3"] - 0.7643).abs() < 5e-5);
        let sum: f64 = r.residency.values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn comparison_examples() {
        let base = MetricsReport::from_totals(4, 4760.0, 140.0);
        let cand = MetricsReport::from_totals(6, 3930.0, 140.0);
        let c = compare_reports(&base, &cand, 277.0, 3).unwrap();
        assert!((c.freeze_time_reduction_pct.unwrap() - 17.4).abs() < 0.05);
        assert!((c.stall_free_f_tot_ms - 3099.0).abs() < 1e-9);
        assert!((c.stall_free_reduction_pct.unwrap() - 34.9).abs() < 0.05);

        let same = compare_reports(&cand, &cand, 0.0, 0).unwrap();
        assert_eq!(same.freeze_time_reduction_pct, Some(0.0));

        let zero = MetricsReport::from_totals(0, 0.0, 140.0);
        let undefined = compare_reports(&zero, &cand, 0.0, 0).unwrap();
        assert!(undefined.freeze_time_reduction_pct.is_none());
        assert!(undefined.note.is_some());

        let other = MetricsReport::from_totals(0, 0.0, 60.0);
        assert!(compare_reports(&other, &cand, 0.0, 0).is_err());
    }

    fn dyadic_timeline() -> impl Strategy<Value = SessionTimeline> {
        // gaps in units of 1/1024 s keep every sum exact
        proptest::collection::vec(1u32..600, 1..80).prop_map(|gaps| {
            let mut t = 0u32;
            let displays = gaps
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    t += g;
                    (i as u64, t as f64 / 1024.0)
                })
                .collect();
            SessionTimeline {
                duration_s: t as f64 / 1024.0,
                frame_displays: displays,
                ..Default::default()
            }
        })
    }

    proptest! {
        #[test]
        fn translation_invariant(tl in dyadic_timeline(), shift in 0u32..100_000) {
            let shift = shift as f64 / 1024.0;
            let mut moved = tl.clone();
            moved.start_s += shift;
            for d in &mut moved.frame_displays {
                d.1 += shift;
            }
            let params = FreezeParams { nominal_fps: 64.0, freeze_excess_threshold_ms: 100.0 };
            let a = detect_freezes(&tl, &params).events;
            let b = detect_freezes(&moved, &params).events;
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.duration_ms, y.duration_ms);
                prop_assert_eq!(x.start_s + shift, y.start_s);
            }
        }

        #[test]
        fn threshold_monotone(tl in dyadic_timeline(), lo in 0.0f64..400.0, delta in 0.0f64..400.0) {
            let scan = |th| {
                let r = compute_report(&tl, &FreezeParams { nominal_fps: 60.0, freeze_excess_threshold_ms: th });
                (r.f_nb, r.f_tot_ms)
            };
            let (n_lo, t_lo) = scan(lo);
            let (n_hi, t_hi) = scan(lo + delta);
            prop_assert!(n_hi <= n_lo);
            prop_assert!(t_hi <= t_lo);
        }

        #[test]
        fn totals_are_consistent(tl in dyadic_timeline()) {
            let r = compute_report(&tl, &FreezeParams::default());
            let sum: f64 = r.freezes.iter().map(|f| f.duration_ms).sum();
            prop_assert_eq!(sum, r.f_tot_ms);
            if r.f_nb > 0 {
                prop_assert!((r.f_avg_ms * r.f_nb as f64 - r.f_tot_ms).abs() <= 1e-9 * r.f_tot_ms);
            }
        }
    }
}
