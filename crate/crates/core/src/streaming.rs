//! Fluid-flow model of renderer → link → client, stepped on a fixed tick.
//!
//! Each tick: pending profile commands are applied, the embedded monitor
//! samples on its period, the renderer emits the frames that fall due, and
//! the link drains its FIFO at the tick's true capacity. Display time is the
//! instant a frame's last bit leaves the link.

use std::collections::VecDeque;
use std::sync::mpsc;
use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelScenario;
use crate::controller::{QualityProfile, RateController};
use crate::error::{Error, Result};
use crate::gnb::{ClockMode, GnbService, ScenarioClock};
use crate::metrics::{SessionTimeline, SwitchEvent};
use crate::monitor::{LocalTelemetry, Monitor, MonitorRow, ProfileCommand};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamParams {
    pub tick_ms: u32,
    pub switch_stall_ms: f64,
    /// Queue capacity in milliseconds of the active profile's bitrate.
    pub cap_ms: f64,
    pub duration_s: f64,
}

impl Default for StreamParams {
    fn default() -> Self {
        StreamParams {
            tick_ms: 10,
            switch_stall_ms: 277.0,
            cap_ms: 1000.0,
            duration_s: 140.0,
        }
    }
}

impl StreamParams {
    pub fn validate(&self) -> Result<()> {
        if self.tick_ms == 0 {
            return Err(Error::invalid("tick_ms must be >= 1"));
        }
        if !(self.switch_stall_ms >= 0.0) || !self.switch_stall_ms.is_finite() {
            return Err(Error::invalid("switch_stall_ms must be >= 0"));
        }
        if !(self.cap_ms > 0.0) || !self.cap_ms.is_finite() {
            return Err(Error::invalid("cap_ms must be > 0"));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::invalid("duration_s must be > 0"));
        }
        Ok(())
    }

    pub fn tick_s(&self) -> f64 {
        self.tick_ms as f64 / 1000.0
    }
}

/// Frame source. Emission instants are `origin + k / fps`; a switch moves the
/// origin so the stall is inserted ahead of the next due frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RendererModel {
    active: QualityProfile,
    switch_stall_ms: f64,
    pending_stall_until_s: Option<f64>,
    origin_s: f64,
    next_index: u64,
}

impl RendererModel {
    pub fn new(profile: QualityProfile, switch_stall_ms: f64, start_s: f64) -> Result<Self> {
        if !(switch_stall_ms >= 0.0) {
            return Err(Error::invalid("switch_stall_ms must be >= 0"));
        }
        Ok(RendererModel {
            active: profile,
            switch_stall_ms,
            pending_stall_until_s: None,
            origin_s: start_s,
            next_index: 0,
        })
    }

    pub fn active_profile(&self) -> &QualityProfile {
        &self.active
    }

    pub fn pending_stall_until_s(&self) -> Option<f64> {
        self.pending_stall_until_s
    }

    pub fn next_emit_s(&self) -> f64 {
        self.origin_s + self.next_index as f64 * self.active.frame_interval_s()
    }

    /// Returns false, changing nothing, when `target` is already active.
    pub fn apply_profile_switch(&mut self, target: &QualityProfile, now_s: f64) -> bool {
        if target.name == self.active.name {
            debug!("switch to active profile {} ignored", target.name);
            return false;
        }
        let stall_s = self.switch_stall_ms / 1000.0;
        let next = self.next_emit_s();
        let mut residual = match self.pending_stall_until_s {
            Some(until) if until > now_s => next - until,
            _ => next - now_s,
        };
        if stall_s > 0.0 && residual <= 0.0 {
            residual = self.active.frame_interval_s();
        }
        self.active = target.clone();
        self.origin_s = now_s + stall_s + residual.max(0.0);
        self.next_index = 0;
        self.pending_stall_until_s = (stall_s > 0.0).then_some(now_s + stall_s);
        true
    }

    /// Emission instants in `[.., before_s)` not yet produced.
    fn due_before(&mut self, before_s: f64) -> Vec<f64> {
        let mut out = Vec::new();
        loop {
            let t = self.next_emit_s();
            if t >= before_s {
                return out;
            }
            out.push(t);
            self.next_index += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueuedFrame {
    pub id: u64,
    pub size_bits: f64,
    pub remaining_bits: f64,
    pub enqueue_t: f64,
}

impl QueuedFrame {
    pub fn new(id: u64, size_bits: f64, enqueue_t: f64) -> Self {
        QueuedFrame {
            id,
            size_bits,
            remaining_bits: size_bits,
            enqueue_t,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrainOutcome {
    pub displays: Vec<(u64, f64)>,
    pub dropped: Vec<u64>,
    pub drained_bits: f64,
}

/// FIFO link with head-drop. The head frame is in service and is never
/// dropped; overflow evicts the oldest waiting frames first and, failing
/// that, the arriving frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkQueue {
    frames: VecDeque<QueuedFrame>,
    cap_bits: f64,
}

impl LinkQueue {
    pub fn new(cap_bits: f64) -> Self {
        LinkQueue {
            frames: VecDeque::new(),
            cap_bits,
        }
    }

    pub fn cap_bits(&self) -> f64 {
        self.cap_bits
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn queued_bits(&self) -> f64 {
        // fold from +0.0: an empty f64 sum is -0.0
        self.frames.iter().fold(0.0, |acc, f| acc + f.remaining_bits)
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames.iter().map(|f| f.id)
    }

    fn evict_waiting(&mut self, incoming_bits: f64, dropped: &mut Vec<u64>) {
        while self.frames.len() > 1 && self.queued_bits() + incoming_bits > self.cap_bits {
            let f = self.frames.remove(1).expect("len > 1");
            dropped.push(f.id);
        }
    }

    pub fn set_cap(&mut self, cap_bits: f64) -> Vec<u64> {
        self.cap_bits = cap_bits;
        let mut dropped = Vec::new();
        self.evict_waiting(0.0, &mut dropped);
        dropped
    }

    pub fn enqueue(&mut self, frame: QueuedFrame, dropped: &mut Vec<u64>) {
        self.evict_waiting(frame.size_bits, dropped);
        if self.queued_bits() + frame.size_bits > self.cap_bits {
            dropped.push(frame.id);
        } else {
            self.frames.push_back(frame);
        }
    }

    /// Serve `[t0, t1)` at a constant `capacity_bps`, interleaving `arrivals`
    /// (sorted by enqueue time, all inside the interval).
    pub fn serve(&mut self, t0: f64, t1: f64, capacity_bps: f64, arrivals: Vec<QueuedFrame>) -> DrainOutcome {
        let mut out = DrainOutcome::default();
        let mut tau = t0;
        let mut arrivals = arrivals.into_iter().peekable();
        loop {
            let next_arrival = arrivals.peek().map(|f| f.enqueue_t);
            match self.frames.front_mut() {
                Some(head) if capacity_bps > 0.0 => {
                    let finish = tau + head.remaining_bits / capacity_bps;
                    if let Some(a) = next_arrival.filter(|&a| a < finish) {
                        let served = (capacity_bps * (a - tau)).clamp(0.0, head.remaining_bits);
                        head.remaining_bits -= served;
                        out.drained_bits += served;
                        tau = tau.max(a);
                        if head.remaining_bits <= 0.0 {
                            let done = self.frames.pop_front().expect("head exists");
                            out.displays.push((done.id, tau));
                        }
                        let f = arrivals.next().expect("peeked");
                        self.enqueue(f, &mut out.dropped);
                    } else if finish <= t1 {
                        out.drained_bits += head.remaining_bits;
                        let done = self.frames.pop_front().expect("head exists");
                        out.displays.push((done.id, finish));
                        tau = finish;
                    } else {
                        let served = (capacity_bps * (t1 - tau)).clamp(0.0, head.remaining_bits);
                        head.remaining_bits -= served;
                        out.drained_bits += served;
                        break;
                    }
                }
                _ => match arrivals.next() {
                    Some(f) => {
                        tau = tau.max(f.enqueue_t);
                        self.enqueue(f, &mut out.dropped);
                    }
                    None => break,
                },
            }
        }
        out
    }
}

/// One row of the per-tick series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t_s: f64,
    pub mcs: u32,
    pub estimate_mbps: String,
    pub capacity_mbps: f64,
    pub profile: String,
    pub queue_bits: f64,
    pub displayed_fps_1s: u32,
}

impl SeriesRow {
    pub const HEADER: &'static str = "t_s,mcs,estimate_mbps,capacity_mbps,profile,queue_bits,displayed_fps_1s";

    pub fn to_csv(&self) -> String {
        format!(
            "{:.3},{},{},{:.6},{},{:.0},{}",
            self.t_s, self.mcs, self.estimate_mbps, self.capacity_mbps, self.profile, self.queue_bits, self.displayed_fps_1s
        )
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub timeline: SessionTimeline,
    pub series: Vec<SeriesRow>,
    pub monitor_log: Vec<MonitorRow>,
}

impl SessionOutput {
    pub fn series_csv(&self) -> String {
        let mut s = String::with_capacity(self.series.len() * 48);
        s.push_str(SeriesRow::HEADER);
        s.push('\n');
        for row in &self.series {
            s.push_str(&row.to_csv());
            s.push('\n');
        }
        s
    }
}

fn ticks_in(span_s: f64, tick_s: f64, what: &str) -> Result<u64> {
    let n = (span_s / tick_s).round();
    if n < 1.0 || (n * tick_s - span_s).abs() > 1e-9 * span_s.max(1.0) {
        return Err(Error::invalid(format!(
            "{what} {span_s} s is not a whole number of {tick_s} s ticks"
        )));
    }
    Ok(n as u64)
}

/// Run one session. The controller decides the initial profile and whether
/// adaptation is on.
pub fn run_session(scenario: Arc<ChannelScenario>, controller: RateController, params: &StreamParams) -> Result<SessionOutput> {
    params.validate()?;
    if params.duration_s > scenario.duration_s() + 1e-9 {
        return Err(Error::invalid(format!(
            "session of {} s exceeds the {} s channel scenario",
            params.duration_s,
            scenario.duration_s()
        )));
    }
    let tick_s = params.tick_s();
    let tick_us = params.tick_ms as u64 * 1000;
    let n_ticks = ticks_in(params.duration_s, tick_s, "duration")?;
    let sample_every = ticks_in(controller.state().sampling_period_s, tick_s, "sampling period")?;
    let duration_s = n_ticks as f64 * tick_s;

    let service = Arc::new(GnbService::new(scenario.clone(), ScenarioClock::new(ClockMode::Virtual)));
    let clock = service.virtual_clock().expect("virtual clock").clone();
    let ladder = controller.ladder().clone();
    let initial = controller.current().clone();
    let (tx, rx) = mpsc::channel::<ProfileCommand>();
    let mut monitor = Monitor::new(LocalTelemetry::new(service), scenario.cell().clone(), controller, tx);

    let mut renderer = RendererModel::new(initial.clone(), params.switch_stall_ms, 0.0)?;
    let cap_bits = |p: &QualityProfile| params.cap_ms / 1000.0 * p.bitrate_mbps * 1e6;
    let mut queue = LinkQueue::new(cap_bits(&initial));

    let mut timeline = SessionTimeline {
        start_s: 0.0,
        duration_s,
        ..SessionTimeline::default()
    };
    let mut series = Vec::with_capacity(n_ticks as usize);
    let mut monitor_log = Vec::new();
    let mut spans: Vec<(String, f64)> = vec![(initial.name.clone(), 0.0)];
    let mut recent: VecDeque<f64> = VecDeque::new();
    let mut next_id = 0u64;

    for k in 0..n_ticks {
        let t0 = k as f64 * tick_s;
        let t1 = (k + 1) as f64 * tick_s;

        for cmd in rx.try_iter() {
            let target = ladder.get(&cmd.target)?.clone();
            let from = renderer.active_profile().name.clone();
            if renderer.apply_profile_switch(&target, t0) {
                timeline.switches.push(SwitchEvent {
                    t_s: t0,
                    from_profile: from,
                    to_profile: target.name.clone(),
                });
                spans.push((target.name.clone(), t0));
                timeline.dropped_frames.extend(queue.set_cap(cap_bits(&target)));
            }
        }

        if k % sample_every == 0 {
            clock.set_micros(k * tick_us);
            match monitor.sample()? {
                Some(row) => monitor_log.push(row),
                None => warn!("no sample at t = {t0}"),
            }
        }

        let profile = renderer.active_profile().clone();
        let arrivals: Vec<QueuedFrame> = renderer
            .due_before(t1.min(duration_s))
            .into_iter()
            .map(|t| {
                next_id += 1;
                QueuedFrame::new(next_id - 1, profile.frame_bits(), t)
            })
            .collect();
        timeline.frames_emitted += arrivals.len() as u64;

        let mcs = scenario.sample_mcs(t0)?;
        let capacity_mbps = scenario.true_capacity(t0)?;
        let outcome = queue.serve(t0, t1, capacity_mbps * 1e6, arrivals);
        timeline.dropped_frames.extend(outcome.dropped);
        for &(_, t) in &outcome.displays {
            recent.push_back(t);
        }
        timeline.frame_displays.extend(outcome.displays);
        while recent.front().is_some_and(|&t| t <= t1 - 1.0) {
            recent.pop_front();
        }

        series.push(SeriesRow {
            t_s: t0,
            mcs,
            estimate_mbps: scenario.rates().get(mcs).expect("mcs in table").render(),
            capacity_mbps,
            profile: profile.name.clone(),
            queue_bits: queue.queued_bits(),
            displayed_fps_1s: recent.len() as u32,
        });
    }

    timeline.frames_queued_at_end = queue.len() as u64;
    timeline.profile_residency = residency(&spans, duration_s);
    Ok(SessionOutput {
        timeline,
        series,
        monitor_log,
    })
}

fn residency(spans: &[(String, f64)], end_s: f64) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for (i, (name, start)) in spans.iter().enumerate() {
        let stop = spans.get(i + 1).map_or(end_s, |s| s.1);
        match out.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 += stop - start,
            None => out.push((name.clone(), stop - start)),
        }
    }
    out
}
