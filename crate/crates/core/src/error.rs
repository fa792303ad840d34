use crate::C64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("spec error: {0}")]
    Spec(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("singular resolvent at lambda = {0}")]
    SingularResolvent(C64),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("oracle incomplete: {0}")]
    OracleIncomplete(String),
    #[error("approach failure: {0}")]
    Approach(String),
    #[error("selection exhausted after {found} of {target} positions")]
    SelectionExhausted { found: usize, target: usize },
    #[error("construction error: {0}")]
    Construction(String),
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("range not closed: singular value {sigma:e} inside ({tol:e}, {gap:e})")]
    RangeNotClosed { sigma: f64, tol: f64, gap: f64 },
}

impl Error {
    /// Coarse class used by the CLI exit-code contract.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Spec(_) | Error::Config(_) | Error::Precondition(_) => ErrorClass::Config,
            Error::SingularResolvent(_) | Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Invariant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Invariant,
}

/// Non-fatal findings attached to results.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    IllConditioned { lambda: C64, kappa: f64 },
    WeakGrowth { factor: f64 },
    SelectionShort { found: usize, target: usize },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::IllConditioned { lambda, kappa } => {
                write!(f, "ill-conditioned resolvent at {lambda} (kappa {kappa:e})")
            }
            Warning::WeakGrowth { factor } => write!(f, "weak resolvent growth (factor {factor:e})"),
            Warning::SelectionShort { found, target } => {
                write!(f, "almost-orthogonal selection stopped at {found} of {target}")
            }
        }
    }
}
