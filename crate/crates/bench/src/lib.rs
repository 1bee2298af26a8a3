//! Workload generation, execution and reporting for comparing column-group
//! layouts on the laser engine.

pub mod designs;
pub mod error;
pub mod generator;
pub mod report;
pub mod runner;
pub mod spec;

pub use error::{BenchError, Result};
pub use generator::{key_of, Generator, Op, Phase, QueryClass, Step};
pub use report::{compare, RunReport};
pub use runner::{load, run, RunConfig, RunOutput};
pub use spec::{ParamsFile, WorkloadSpec};
