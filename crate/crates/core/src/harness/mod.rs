//! Scenario files, seeded Monte Carlo trials and report tables.

mod experiment;
mod output;
mod scenario;

use thiserror::Error;

pub use experiment::{
    aggregate, run_experiment, run_experiment_with_fields, run_trial, run_trial_detailed,
    FieldDump, ModeMetrics, Paired, Report, Stat, Table1Row, Table2Row, TrialRecord,
};
pub use output::{
    emit_outputs, print_report, write_matrix, Format, TABLE1_COLUMNS, TABLE2_COLUMNS,
    TRIAL_COLUMNS,
};
pub use scenario::{
    load_scenario, AttackBounds, ConsensusSpec, GridSpec, KernelSpec, ModeSelection,
    OutputSpec, ResilienceSpec, Scenario,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Infeasible(_) => 4,
        }
    }
}
