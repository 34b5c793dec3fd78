//! Network and demand ingestion, scenario assembly, result files.

mod demand;
mod inp;
mod results;

use std::fs::File;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use demand::read_demand_csv;
pub use inp::{parse_network, Headloss, InpOptions, ParsedNetwork};
pub use results::{
    emit_results, format_value, read_table, Table, ITERATIONS, LINK_FLOWS, PUMP_SPEEDS, RESIDUALS, SCHEMA, TANK_HEADS,
    TRAJECTORY,
};

use crate::mpc::ScaConfig;
use crate::network::{build_network, Network, NetworkError};
use crate::units::FlowUnit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("line {line}, column {column}: expected {expected}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
    },
    #[error("section [{0}] is not supported")]
    Unsupported(String),
    #[error("junction `{junction}` uses undefined pattern `{pattern}`")]
    UnknownPattern { junction: String, pattern: String },
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Everything needed for one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub network: PathBuf,
    /// Demand CSV; when absent the INP demands and patterns are used.
    pub demands: Option<PathBuf>,
    pub sca: ScaConfig,
    /// Number of applied steps.
    pub t_final: usize,
    /// Flow unit of the demand CSV and the result files.
    pub io_unit: FlowUnit,
    pub out: PathBuf,
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Read and validate a network file, with optional CSV demands replacing
/// the file's own.
pub fn load_network(path: &Path, demands: Option<(&Path, FlowUnit)>) -> Result<(Network, Vec<String>), IoError> {
    let parsed = parse_network(&read_to_string(path)?)?;
    let mut net = build_network(parsed.nodes, parsed.links, &parsed.patterns)?;
    if let Some((csv_path, unit)) = demands {
        let file = File::open(csv_path).map_err(|e| IoError::Io {
            path: csv_path.to_path_buf(),
            message: e.to_string(),
        })?;
        net = net.with_demands(&read_demand_csv(file, unit)?)?;
    }
    Ok((net, parsed.warnings))
}

impl ScenarioConfig {
    pub fn load_network(&self) -> Result<(Network, Vec<String>), IoError> {
        load_network(&self.network, self.demands.as_deref().map(|p| (p, self.io_unit)))
    }
}
