//! Scenario runner, trace recording, figure reproduction and the live server.

pub mod assembly;
pub mod figures;
pub mod live;
pub mod scenario;
pub mod telemetry;
pub mod world;

use thiserror::Error;

use crate::bus::BusError;
use crate::ctrl::CtrlError;
use crate::model::ModelError;
use crate::stack::StackError;

pub use assembly::{assembly_scenario, AssemblyOptions, AssemblyReport};
pub use figures::{fig13_suite, fig14_task, Fig13Row, Fig13Suite, Fig14Report, Fig14Script};
pub use scenario::{CrashSpec, DescriptionSource, LinkSpec, PlantSetup, Scenario};
pub use telemetry::{telemetry_aggregate, telemetry_csv, TelemetryRow};
pub use world::{run_scenario, run_with, RunRecord, Violation, World, WorldOptions};

#[derive(Debug, Error)]
pub enum OpsError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("scenario syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Ctrl(#[from] CtrlError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("grasp failed: {0}")]
    GraspMiss(String),
}
