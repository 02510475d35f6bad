//! gNB-style telemetry: a WebSocket endpoint reporting the scenario's
//! current downlink MCS and the matching rate estimate.

pub mod clock;
pub mod protocol;
pub mod service;

pub use clock::{ClockMode, ScenarioClock, VirtualClock};
pub use protocol::{parse_request, Reply, Request, StatsReply};
pub use service::{run_service, GnbService, ServiceHandle, Session, STATS_PATH};
