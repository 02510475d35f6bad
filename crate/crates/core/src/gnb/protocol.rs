//! Telemetry wire messages. One JSON document per WebSocket text frame,
//! discriminated by the `message` field.
//!
//! ```text
//! -> {"message":"stats","msg_id":1}
//! <- {"message":"stats","msg_id":1,"time_s":3.0,"cells":[{"cell_id":1,"ue":[{"ue_id":1,"dl_mcs":27,"dl_est_mbps":158.796162}]}]}
//! -> {"message":"info","msg_id":2}
//! <- {"message":"info","msg_id":2,"clock":"virtual","time_s":3.0,"duration_s":140.0,"mcs_table":"QAM256"}
//! -> {"message":"tick","msg_id":3,"advance_s":1.0}     (virtual clock only)
//! <- {"message":"tick","msg_id":3,"time_s":4.0}
//! <- {"message":"error","msg_id":4,"reason":"unknown message"}
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::clock::ClockMode;
use crate::nr_rate::McsTableId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "message", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Stats { msg_id: u64 },
    Info { msg_id: u64 },
    Tick { msg_id: u64, advance_s: f64 },
}

impl Request {
    pub fn msg_id(&self) -> u64 {
        match self {
            Request::Stats { msg_id } | Request::Info { msg_id } | Request::Tick { msg_id, .. } => *msg_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeStats {
    pub ue_id: u32,
    pub dl_mcs: u32,
    pub dl_est_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub cell_id: u32,
    pub ue: Vec<UeStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReply {
    pub msg_id: u64,
    pub time_s: f64,
    pub cells: Vec<CellStats>,
}

impl StatsReply {
    /// MCS of the first UE; every carrier reports the same index.
    pub fn dl_mcs(&self) -> Option<u32> {
        self.cells.first()?.ue.first().map(|u| u.dl_mcs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReply {
    pub msg_id: u64,
    pub clock: ClockMode,
    pub time_s: f64,
    pub duration_s: f64,
    pub mcs_table: McsTableId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickReply {
    pub msg_id: u64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg_id: Option<u64>,
    pub reason: String,
}

pub const REASON_UNKNOWN: &str = "unknown message";
pub const REASON_COMPLETE: &str = "scenario_complete";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "message", rename_all = "snake_case")]
pub enum Reply {
    Stats(StatsReply),
    Info(InfoReply),
    Tick(TickReply),
    Error(ErrorReply),
}

impl Reply {
    pub fn msg_id(&self) -> Option<u64> {
        match self {
            Reply::Stats(r) => Some(r.msg_id),
            Reply::Info(r) => Some(r.msg_id),
            Reply::Tick(r) => Some(r.msg_id),
            Reply::Error(r) => r.msg_id,
        }
    }

    pub fn error(msg_id: Option<u64>, reason: impl Into<String>) -> Reply {
        Reply::Error(ErrorReply {
            msg_id,
            reason: reason.into(),
        })
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("replies always serialize")
    }
}

/// Parse a request, or produce the error reply it deserves.
pub fn parse_request(text: &str) -> Result<Request, Reply> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Reply::error(None, format!("malformed message: {e}")))?;
    let msg_id = value.get("msg_id").and_then(Value::as_u64);
    let kind = value
        .get("message")
        .and_then(Value::as_str)
        .ok_or_else(|| Reply::error(msg_id, "malformed message: missing message field"))?;
    if !matches!(kind, "stats" | "info" | "tick") {
        return Err(Reply::error(msg_id, REASON_UNKNOWN));
    }
    serde_json::from_value(value).map_err(|e| Reply::error(msg_id, format!("malformed message: {e}")))
}
