use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum Error {
    #[error("unknown vertex id {0}")]
    UnknownVertex(usize),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mission infeasible: minimum fuel {phi_star} does not fit tank {tank}")]
    MissionInfeasible { phi_star: f64, tank: f64 },
    #[error("infeasible auction target: {0}")]
    InfeasibleAuction(String),
    #[error("protocol iteration bound {0} exceeded")]
    IterationBound(usize),
    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),
}

pub type Result<T> = std::result::Result<T, Error>;
