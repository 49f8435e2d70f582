use std::fmt;

use gridshare_core::codes::CodesError;
use gridshare_core::nbs::NbsError;
use gridshare_core::oracle::OracleError;
use gridshare_core::scenario::ScenarioError;
use gridshare_core::selfish::SelfishError;

/// Process exit codes. Usage errors from argument parsing also exit with 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Io = 1,
    Validation = 2,
    Infeasible = 3,
    NotConverged = 4,
    Bargaining = 5,
    Tolerance = 6,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self { exit, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        Self::new(Exit::Validation, e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        Self::new(Exit::Infeasible, e.to_string())
    }
}

impl From<SelfishError> for CliError {
    fn from(e: SelfishError) -> Self {
        Self::new(Exit::Infeasible, e.to_string())
    }
}

impl From<NbsError> for CliError {
    fn from(e: NbsError) -> Self {
        let exit = match e {
            NbsError::FailedBargaining { .. } => Exit::Bargaining,
            NbsError::Consensus(_) => Exit::NotConverged,
            NbsError::NoAgents | NbsError::Dimension { .. } => Exit::Validation,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<CodesError> for CliError {
    fn from(e: CodesError) -> Self {
        let exit = match e {
            CodesError::Config(_) => Exit::Validation,
            CodesError::NotConverged(_) => Exit::NotConverged,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Exit::Io, e.to_string())
    }
}
