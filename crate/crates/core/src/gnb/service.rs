//! Simulated gNB telemetry endpoint.

use std::collections::HashSet;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use tungstenite::handshake::server::{ErrorResponse, Request as HttpRequest, Response as HttpResponse};
use tungstenite::http::StatusCode;
use tungstenite::{Message, WebSocket};

use super::clock::{ScenarioClock, VirtualClock};
use super::protocol::{
    parse_request, CellStats, InfoReply, Reply, Request, StatsReply, TickReply, UeStats, REASON_COMPLETE,
};
use crate::channel::ChannelScenario;
use crate::error::{Error, Result};

pub const STATS_PATH: &str = "/stats";

/// Scenario plus the clock every session reads.
#[derive(Debug)]
pub struct GnbService {
    scenario: Arc<ChannelScenario>,
    clock: ScenarioClock,
}

/// Per-connection state.
#[derive(Debug, Default)]
pub struct Session {
    seen: HashSet<u64>,
}

impl GnbService {
    pub fn new(scenario: Arc<ChannelScenario>, clock: ScenarioClock) -> Self {
        GnbService { scenario, clock }
    }

    pub fn scenario(&self) -> &ChannelScenario {
        &self.scenario
    }

    pub fn clock(&self) -> &ScenarioClock {
        &self.clock
    }

    pub fn virtual_clock(&self) -> Option<&VirtualClock> {
        match &self.clock {
            ScenarioClock::Virtual(c) => Some(c),
            ScenarioClock::Real(_) => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.clock.now_s() >= self.scenario.duration_s()
    }

    /// Stats for the scenario at `now_s`: one cell entry per carrier, one UE.
    pub fn handle_stats_request(&self, msg_id: u64, now_s: f64) -> Result<StatsReply> {
        if now_s >= self.scenario.duration_s() {
            return Err(Error::ScenarioComplete);
        }
        let mcs = self.scenario.sample_mcs(now_s)?;
        let estimate = self
            .scenario
            .rates()
            .get(mcs)
            .expect("sampled MCS is within the table");
        let cells = estimate
            .exact_per_carrier()
            .iter()
            .enumerate()
            .map(|(j, rate)| CellStats {
                cell_id: j as u32 + 1,
                ue: vec![UeStats {
                    ue_id: 1,
                    dl_mcs: mcs,
                    dl_est_mbps: crate::nr_rate::decimal::render(rate, crate::nr_rate::MBPS_DIGITS)
                        .parse()
                        .expect("rendered decimal parses"),
                }],
            })
            .collect();
        Ok(StatsReply {
            msg_id,
            time_s: now_s,
            cells,
        })
    }

    pub fn handle_request(&self, session: &mut Session, request: Request) -> Reply {
        let msg_id = request.msg_id();
        if !session.seen.insert(msg_id) {
            return Reply::error(Some(msg_id), "duplicate msg_id");
        }
        match request {
            Request::Stats { msg_id } => match self.handle_stats_request(msg_id, self.clock.now_s()) {
                Ok(reply) => Reply::Stats(reply),
                Err(Error::ScenarioComplete) => Reply::error(Some(msg_id), REASON_COMPLETE),
                Err(e) => Reply::error(Some(msg_id), e.to_string()),
            },
            Request::Info { msg_id } => Reply::Info(InfoReply {
                msg_id,
                clock: self.clock.mode(),
                time_s: self.clock.now_s(),
                duration_s: self.scenario.duration_s(),
                mcs_table: self.scenario.cell().mcs_table(),
            }),
            Request::Tick { msg_id, advance_s } => match &self.clock {
                ScenarioClock::Virtual(clock) if advance_s >= 0.0 && advance_s.is_finite() => {
                    Reply::Tick(TickReply {
                        msg_id,
                        time_s: clock.advance_s(advance_s),
                    })
                }
                ScenarioClock::Virtual(_) => Reply::error(Some(msg_id), "advance_s must be >= 0"),
                ScenarioClock::Real(_) => Reply::error(Some(msg_id), "clock is real-time; tick not allowed"),
            },
        }
    }

    /// One text frame in, one text frame out.
    pub fn handle_text(&self, session: &mut Session, text: &str) -> String {
        match parse_request(text) {
            Ok(request) => self.handle_request(session, request),
            Err(reply) => reply,
        }
        .to_text()
    }
}

/// A running service. Dropping the handle does not stop it; call [`ServiceHandle::shutdown`].
#[derive(Debug)]
pub struct ServiceHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    active: Arc<AtomicUsize>,
    served: Arc<AtomicUsize>,
    service: Arc<GnbService>,
    accept: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("ws://{}{}", self.addr, STATS_PATH)
    }

    pub fn service(&self) -> &Arc<GnbService> {
        &self.service
    }

    pub fn active_connections(&self) -> usize {
        self.active.load(Ordering::Acquire)
    }

    /// Connections accepted so far.
    pub fn connections_served(&self) -> usize {
        self.served.load(Ordering::Acquire)
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(join) = self.accept.take() {
            let _ = join.join();
        }
    }

    /// Block until the scenario has ended and the last client has gone.
    pub fn wait_until_finished(self) {
        loop {
            let idle = self.active_connections() == 0 && self.connections_served() > 0;
            if self.service.is_complete() && (idle || self.service.virtual_clock().is_none()) {
                break;
            }
            thread::sleep(Duration::from_millis(20));
        }
        self.shutdown();
    }
}

/// Bind `bind_addr` and serve `/stats` until shut down. Each connection gets
/// its own thread; all share the service's clock.
pub fn run_service(service: Arc<GnbService>, bind_addr: &str) -> Result<ServiceHandle> {
    let listener = TcpListener::bind(bind_addr).map_err(|source| Error::Bind {
        addr: bind_addr.to_string(),
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| Error::Bind {
        addr: bind_addr.to_string(),
        source,
    })?;
    listener.set_nonblocking(true).map_err(|source| Error::Bind {
        addr: bind_addr.to_string(),
        source,
    })?;
    let stop = Arc::new(AtomicBool::new(false));
    let active = Arc::new(AtomicUsize::new(0));
    let served = Arc::new(AtomicUsize::new(0));
    info!("gNB telemetry listening on ws://{addr}{STATS_PATH}");

    let accept = {
        let (service, stop, active, served) = (service.clone(), stop.clone(), active.clone(), served.clone());
        thread::spawn(move || {
            let mut sessions = Vec::new();
            while !stop.load(Ordering::Acquire) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        debug!("connection from {peer}");
                        served.fetch_add(1, Ordering::AcqRel);
                        active.fetch_add(1, Ordering::AcqRel);
                        let (service, stop, active) = (service.clone(), stop.clone(), active.clone());
                        sessions.push(thread::spawn(move || {
                            if let Err(e) = serve_connection(&service, stream, &stop) {
                                debug!("session {peer} ended: {e}");
                            }
                            active.fetch_sub(1, Ordering::AcqRel);
                        }));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
                    Err(e) => {
                        warn!("accept failed: {e}");
                        thread::sleep(Duration::from_millis(20));
                    }
                }
            }
            for session in sessions {
                let _ = session.join();
            }
        })
    };

    Ok(ServiceHandle {
        addr,
        stop,
        active,
        served,
        service,
        accept: Some(accept),
    })
}

#[allow(clippy::result_large_err)]
fn check_path(req: &HttpRequest, resp: HttpResponse) -> std::result::Result<HttpResponse, ErrorResponse> {
    if req.uri().path() == STATS_PATH {
        Ok(resp)
    } else {
        let mut err = ErrorResponse::new(Some(format!("no endpoint at {}", req.uri().path())));
        *err.status_mut() = StatusCode::NOT_FOUND;
        Err(err)
    }
}

fn serve_connection(service: &GnbService, stream: TcpStream, stop: &AtomicBool) -> Result<()> {
    let conn = |e: &dyn std::fmt::Display| Error::Connection(e.to_string());
    stream.set_nonblocking(false).map_err(|e| conn(&e))?;
    stream
        .set_read_timeout(Some(Duration::from_secs(2)))
        .map_err(|e| conn(&e))?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept_hdr(stream, check_path).map_err(|e| conn(&e))?;
    ws.get_ref()
        .set_read_timeout(Some(Duration::from_millis(50)))
        .map_err(|e| conn(&e))?;
    let mut session = Session::default();
    loop {
        if stop.load(Ordering::Acquire) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = service.handle_text(&mut session, text.as_str());
                ws.send(Message::text(reply)).map_err(|e| conn(&e))?;
            }
            Ok(Message::Binary(_)) => {
                let reply = Reply::error(None, "malformed message: binary frames not supported").to_text();
                ws.send(Message::text(reply)).map_err(|e| conn(&e))?;
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return Ok(());
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(conn(&e)),
        }
    }
}
