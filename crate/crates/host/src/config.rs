//! Service configuration, file loading helpers, and the exit-code mapping
//! shared by every subcommand.

use loco_core::map::CityMap;
use loco_core::mapping::ParamSet;
use loco_core::runtime::DEFAULT_SNAPSHOT_HZ;
use loco_core::session::Condition;
use loco_core::sim::TICK_RATE_HZ;
use loco_core::wire::DEFAULT_TELEMETRY_PORT;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Default port for the WebSocket client endpoint.
pub const DEFAULT_WS_PORT: u16 = 47802;

/// Environment variable overriding the UDP telemetry port.
pub const ENV_UDP_PORT: &str = "LOCO_UDP_PORT";
/// Environment variable overriding the WebSocket port.
pub const ENV_WS_PORT: &str = "LOCO_WS_PORT";

/// Fatal errors, each mapped to a distinct process exit code so scripts can
/// tell a bad file from a missing one from a busy port.
#[derive(Debug, Error)]
pub enum HostError {
    /// Malformed file contents or inconsistent options (exit 65).
    #[error("{0}")]
    Data(String),
    /// A required input file is missing or unreadable (exit 66).
    #[error("{0}")]
    MissingInput(String),
    /// A socket could not be opened (exit 69).
    #[error("{0}")]
    Unavailable(String),
    /// Unexpected internal failure (exit 70).
    #[error("{0}")]
    Internal(String),
}

impl HostError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HostError::Data(_) => 65,
            HostError::MissingInput(_) => 66,
            HostError::Unavailable(_) => 69,
            HostError::Internal(_) => 70,
        }
    }

    /// Classifies an I/O failure on `what` (a path or socket description).
    pub fn from_io(what: &str, err: &std::io::Error) -> HostError {
        match err.kind() {
            std::io::ErrorKind::NotFound => HostError::MissingInput(format!("{what}: {err}")),
            std::io::ErrorKind::AddrInUse | std::io::ErrorKind::PermissionDenied => {
                HostError::Unavailable(format!("{what}: {err}"))
            }
            _ => HostError::Internal(format!("{what}: {err}")),
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, HostError> {
    std::fs::read_to_string(path).map_err(|e| HostError::from_io(&path.display().to_string(), &e))
}

/// Loads a city map from JSON, or the built-in map when no path is given.
pub fn load_map(path: Option<&Path>) -> Result<CityMap, HostError> {
    match path {
        None => Ok(loco_core::map::default_map()),
        Some(p) => {
            let text = read_file(p)?;
            CityMap::from_json(&text).map_err(|e| HostError::Data(format!("{}: {e}", p.display())))
        }
    }
}

/// Loads a `key = value` parameter file, or the defaults when no path is
/// given.
pub fn load_params(path: Option<&Path>) -> Result<ParamSet, HostError> {
    match path {
        None => Ok(ParamSet::default()),
        Some(p) => {
            let text = read_file(p)?;
            ParamSet::parse(&text).map_err(|e| HostError::Data(format!("{}: {e}", p.display())))
        }
    }
}

/// Where live input comes from. Exactly one source per session.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSourceConfig {
    /// Device telemetry datagrams on a UDP port.
    Udp {
        #[serde(default = "default_udp_port")]
        port: u16,
    },
    /// A recorded command trace, paced at real time.
    Trace { path: PathBuf },
    /// `inject_input` commands from WebSocket clients.
    Client,
}

fn default_udp_port() -> u16 {
    DEFAULT_TELEMETRY_PORT
}

fn default_snapshot_hz() -> u64 {
    DEFAULT_SNAPSHOT_HZ
}

fn default_ws_port() -> u16 {
    DEFAULT_WS_PORT
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("serve-out")
}

/// Configuration for `serve`, read from a JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub participant: String,
    pub condition: Condition,
    /// Map JSON path; the built-in map when absent.
    #[serde(default)]
    pub map: Option<PathBuf>,
    /// Parameter file path; defaults when absent.
    #[serde(default)]
    pub params: Option<PathBuf>,
    /// Seed for the trial order shuffle.
    #[serde(default)]
    pub seed: u64,
    pub input: InputSourceConfig,
    #[serde(default = "default_snapshot_hz")]
    pub snapshot_hz: u64,
    #[serde(default = "default_ws_port")]
    pub ws_port: u16,
    /// Directory for trial logs and the summary CSV.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ServeConfig {
    pub fn load(path: &Path) -> Result<ServeConfig, HostError> {
        let text = read_file(path)?;
        let mut config: ServeConfig = serde_json::from_str(&text)
            .map_err(|e| HostError::Data(format!("{}: {e}", path.display())))?;
        config.apply_env()?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `LOCO_UDP_PORT` and `LOCO_WS_PORT` on top of the file.
    fn apply_env(&mut self) -> Result<(), HostError> {
        if let Some(port) = env_port(ENV_UDP_PORT)? {
            if let InputSourceConfig::Udp { port: p } = &mut self.input {
                *p = port;
            }
        }
        if let Some(port) = env_port(ENV_WS_PORT)? {
            self.ws_port = port;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HostError> {
        if self.snapshot_hz == 0 || self.snapshot_hz > TICK_RATE_HZ as u64 {
            return Err(HostError::Data(format!(
                "snapshot_hz {} must be between 1 and {}",
                self.snapshot_hz, TICK_RATE_HZ as u64
            )));
        }
        if self.participant.is_empty() {
            return Err(HostError::Data("participant must not be empty".to_string()));
        }
        Ok(())
    }
}

fn env_port(var: &str) -> Result<Option<u16>, HostError> {
    match std::env::var(var) {
        Ok(text) => text
            .parse::<u16>()
            .map(Some)
            .map_err(|_| HostError::Data(format!("{var}={text} is not a port number"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(HostError::Data(format!("{var}: {e}"))),
    }
}
