use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported configuration: {bandwidth_mhz} MHz with {scs_khz} kHz subcarrier spacing")]
    UnsupportedConfiguration { bandwidth_mhz: u32, scs_khz: u32 },

    #[error("MCS index {index} is reserved or out of range for table {table}")]
    ReservedIndex { table: String, index: u32 },

    #[error("{what} {value} outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("table data {name}: {reason}")]
    TableData { name: String, reason: String },

    #[error("invalid ladder: {0}")]
    InvalidLadder(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("trace {path}: line {line}: {reason}")]
    Trace {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("connection: {0}")]
    Connection(String),

    #[error("bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("poll timed out after {0:.1} s")]
    PollTimeout(f64),

    #[error("config skew: service reports {remote} Mbps but local cell config gives {local} Mbps")]
    ConfigSkew { local: String, remote: String },

    #[error("scenario complete")]
    ScenarioComplete,

    #[error("aborting after {count} consecutive poll failures, last: {last}")]
    SensingLost { count: u32, last: Box<Error> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's configuration or usage rather than
    /// something failing at runtime. The CLI maps these to exit code 1.
    pub fn is_usage(&self) -> bool {
        !matches!(
            self,
            Error::Protocol(_) | Error::ScenarioComplete | Error::PollTimeout(_) | Error::SensingLost { .. }
        )
    }
}
