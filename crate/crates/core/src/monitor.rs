//! Sensing half of the rate controller: poll the gNB for the MCS, recompute
//! the estimate locally, step the controller and forward profile changes to
//! the renderer.

use std::net::TcpStream;
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::Serialize;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use crate::controller::{Decision, RateController};
use crate::error::{Error, Result};
use crate::gnb::protocol::{ErrorReply, InfoReply, REASON_COMPLETE};
use crate::gnb::{ClockMode, GnbService, Reply, Request, Session, StatsReply};
use crate::nr_rate::{CellConfig, RateEstimate};

pub const DEFAULT_POLL_TIMEOUT: Duration = Duration::from_secs(2);
pub const DEFAULT_MAX_FAILURES: u32 = 3;

/// Relative tolerance between the service's estimate and the local one.
pub const SKEW_TOLERANCE: f64 = 1e-6;

/// Where stats come from and how time moves between samples.
pub trait TelemetrySource {
    fn poll(&mut self) -> Result<StatsReply>;
    /// Move on to the next sampling instant: tick a virtual clock or wait in real time.
    fn advance(&mut self, period_s: f64) -> Result<()>;
}

fn reply_to_stats(reply: Reply) -> Result<StatsReply> {
    match reply {
        Reply::Stats(stats) => Ok(stats),
        Reply::Error(e) if e.reason == REASON_COMPLETE => Err(Error::ScenarioComplete),
        Reply::Error(e) => Err(Error::Protocol(e.reason)),
        other => Err(Error::Protocol(format!("unexpected reply {}", other.to_text()))),
    }
}

/// In-process source talking straight to a [`GnbService`].
#[derive(Debug)]
pub struct LocalTelemetry {
    service: Arc<GnbService>,
    session: Session,
    next_id: u64,
}

impl LocalTelemetry {
    pub fn new(service: Arc<GnbService>) -> Self {
        LocalTelemetry {
            service,
            session: Session::default(),
            next_id: 1,
        }
    }

    fn request(&mut self, make: impl FnOnce(u64) -> Request) -> Reply {
        let id = self.next_id;
        self.next_id += 1;
        self.service.handle_request(&mut self.session, make(id))
    }
}

impl TelemetrySource for LocalTelemetry {
    fn poll(&mut self) -> Result<StatsReply> {
        reply_to_stats(self.request(|msg_id| Request::Stats { msg_id }))
    }

    fn advance(&mut self, period_s: f64) -> Result<()> {
        match self.service.virtual_clock() {
            Some(clock) => {
                clock.advance_s(period_s);
            }
            None => std::thread::sleep(Duration::from_secs_f64(period_s)),
        }
        Ok(())
    }
}

/// WebSocket client for the `/stats` endpoint.
pub struct WsTelemetry {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: u64,
    timeout: Duration,
    info: InfoReply,
    next_deadline: Option<Instant>,
}

impl WsTelemetry {
    pub fn connect(url: &str, timeout: Duration) -> Result<Self> {
        let (ws, _) = tungstenite::connect(url).map_err(|e| Error::Connection(format!("{url}: {e}")))?;
        if let MaybeTlsStream::Plain(stream) = ws.get_ref() {
            stream
                .set_read_timeout(Some(timeout))
                .map_err(|e| Error::Connection(e.to_string()))?;
        }
        let mut client = WsTelemetry {
            ws,
            next_id: 1,
            timeout,
            info: InfoReply {
                msg_id: 0,
                clock: ClockMode::Real,
                time_s: 0.0,
                duration_s: 0.0,
                mcs_table: crate::nr_rate::McsTableId::Qam256,
            },
            next_deadline: None,
        };
        match client.request(|msg_id| Request::Info { msg_id })? {
            Reply::Info(info) => client.info = info,
            other => return Err(Error::Protocol(format!("unexpected reply {}", other.to_text()))),
        }
        Ok(client)
    }

    pub fn info(&self) -> &InfoReply {
        &self.info
    }

    /// Send a raw text frame and return the next reply, whatever it is.
    pub fn send_raw(&mut self, text: &str) -> Result<Reply> {
        self.ws
            .send(Message::text(text.to_string()))
            .map_err(|e| Error::Connection(e.to_string()))?;
        self.read_reply(Instant::now() + self.timeout)
    }

    fn read_reply(&mut self, deadline: Instant) -> Result<Reply> {
        loop {
            if Instant::now() >= deadline {
                return Err(Error::PollTimeout(self.timeout.as_secs_f64()));
            }
            match self.ws.read() {
                Ok(Message::Text(text)) => {
                    return serde_json::from_str(text.as_str())
                        .map_err(|e| Error::Protocol(format!("unparseable reply: {e}")))
                }
                Ok(Message::Close(_)) => return Err(Error::Connection("service closed the connection".into())),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
                {
                    return Err(Error::PollTimeout(self.timeout.as_secs_f64()))
                }
                Err(e) => return Err(Error::Connection(e.to_string())),
            }
        }
    }

    /// Send a request and wait for the reply carrying the same `msg_id`.
    pub fn request(&mut self, make: impl FnOnce(u64) -> Request) -> Result<Reply> {
        let id = self.next_id;
        self.next_id += 1;
        let text = serde_json::to_string(&make(id))?;
        self.ws
            .send(Message::text(text))
            .map_err(|e| Error::Connection(e.to_string()))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let reply = self.read_reply(deadline)?;
            if reply.msg_id() == Some(id) {
                return Ok(reply);
            }
            if let Reply::Error(ErrorReply { msg_id: None, reason }) = reply {
                return Err(Error::Protocol(reason));
            }
            debug!("skipping reply for msg_id {:?}", reply.msg_id());
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
        // drain until the close handshake completes
        for _ in 0..10 {
            if self.ws.read().is_err() {
                break;
            }
        }
    }
}

impl TelemetrySource for WsTelemetry {
    fn poll(&mut self) -> Result<StatsReply> {
        reply_to_stats(self.request(|msg_id| Request::Stats { msg_id })?)
    }

    fn advance(&mut self, period_s: f64) -> Result<()> {
        match self.info.clock {
            ClockMode::Virtual => match self.request(|msg_id| Request::Tick {
                msg_id,
                advance_s: period_s,
            })? {
                Reply::Tick(_) => Ok(()),
                other => Err(Error::Protocol(format!("tick rejected: {}", other.to_text()))),
            },
            ClockMode::Real => {
                let deadline = self.next_deadline.unwrap_or_else(Instant::now) + Duration::from_secs_f64(period_s);
                self.next_deadline = Some(deadline);
                std::thread::sleep(deadline.saturating_duration_since(Instant::now()));
                Ok(())
            }
        }
    }
}

/// One polled sample with the locally recomputed estimate.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t_s: f64,
    pub mcs: u32,
    pub estimate: RateEstimate,
}

/// Poll once and recompute the estimate from `cell`. Fails with
/// [`Error::ConfigSkew`] when the service's figure disagrees by more than
/// [`SKEW_TOLERANCE`] relative.
pub fn poll_once(source: &mut dyn TelemetrySource, cell: &CellConfig) -> Result<Sample> {
    let reply = source.poll()?;
    let mcs = reply
        .dl_mcs()
        .ok_or_else(|| Error::Protocol("stats reply carries no UE".into()))?;
    let remote: f64 = reply.cells.iter().flat_map(|c| &c.ue).map(|u| u.dl_est_mbps).sum();
    let local = cell.estimate(mcs)?.at(reply.time_s);
    let reference = local.mbps().abs().max(f64::MIN_POSITIVE);
    if (local.mbps() - remote).abs() > SKEW_TOLERANCE * reference {
        return Err(Error::ConfigSkew {
            local: local.render(),
            remote: format!("{remote}"),
        });
    }
    Ok(Sample {
        t_s: reply.time_s,
        mcs,
        estimate: local,
    })
}

/// Profile-change command for the renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCommand {
    pub target: String,
    pub issued_at_s: f64,
}

/// One log row: `t_s,mcs,estimate_mbps,profile,decision`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorRow {
    pub t_s: f64,
    pub mcs: u32,
    pub estimate_mbps: String,
    pub profile: String,
    pub decision: String,
}

impl MonitorRow {
    pub const HEADER: &'static str = "t_s,mcs,estimate_mbps,profile,decision";

    pub fn to_csv(&self) -> String {
        format!(
            "{:.3},{},{},{},{}",
            self.t_s, self.mcs, self.estimate_mbps, self.profile, self.decision
        )
    }
}

pub struct Monitor<S> {
    source: S,
    cell: CellConfig,
    controller: RateController,
    renderer: Sender<ProfileCommand>,
    max_failures: u32,
    failures: u32,
}

impl<S: TelemetrySource> Monitor<S> {
    pub fn new(source: S, cell: CellConfig, controller: RateController, renderer: Sender<ProfileCommand>) -> Self {
        Monitor {
            source,
            cell,
            controller,
            renderer,
            max_failures: DEFAULT_MAX_FAILURES,
            failures: 0,
        }
    }

    pub fn with_max_failures(mut self, max_failures: u32) -> Self {
        self.max_failures = max_failures.max(1);
        self
    }

    pub fn controller(&self) -> &RateController {
        &self.controller
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    /// Poll, step the controller and forward any switch. `Ok(None)` means the
    /// poll failed but the failure budget is not yet spent.
    pub fn sample(&mut self) -> Result<Option<MonitorRow>> {
        let sample = match poll_once(&mut self.source, &self.cell) {
            Ok(sample) => {
                self.failures = 0;
                sample
            }
            Err(e @ (Error::PollTimeout(_) | Error::Protocol(_))) => {
                self.failures += 1;
                warn!("poll failed ({}/{}): {e}", self.failures, self.max_failures);
                if self.failures >= self.max_failures {
                    return Err(Error::SensingLost {
                        count: self.failures,
                        last: Box::new(e),
                    });
                }
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let decision = self.controller.step(sample.estimate.mbps(), sample.t_s)?;
        if let Decision::Switch { target, .. } = &decision {
            self.renderer
                .send(ProfileCommand {
                    target: target.clone(),
                    issued_at_s: sample.t_s,
                })
                .map_err(|_| Error::Connection("renderer control channel closed".into()))?;
        }
        Ok(Some(MonitorRow {
            t_s: sample.t_s,
            mcs: sample.mcs,
            estimate_mbps: sample.estimate.render(),
            profile: self.controller.current().name.clone(),
            decision: decision.label(),
        }))
    }

    pub fn into_source(self) -> S {
        self.source
    }
}

/// Run `floor(duration / period)` samples, advancing the source between them.
/// Stops early, without error, if the service reports the scenario complete.
pub fn run_monitor_loop<S: TelemetrySource>(
    monitor: &mut Monitor<S>,
    sampling_period_s: f64,
    duration_s: f64,
    on_row: &mut dyn FnMut(&MonitorRow),
) -> Result<Vec<MonitorRow>> {
    if !(sampling_period_s > 0.0) {
        return Err(Error::invalid("sampling period must be > 0"));
    }
    let samples = (duration_s / sampling_period_s + 1e-9).floor() as u64;
    let mut rows = Vec::with_capacity(samples as usize);
    for _ in 0..samples {
        match monitor.sample() {
            Ok(Some(row)) => {
                on_row(&row);
                rows.push(row);
            }
            Ok(None) => {}
            Err(Error::ScenarioComplete) => break,
            Err(e) => return Err(e),
        }
        monitor.source.advance(sampling_period_s)?;
    }
    Ok(rows)
}
