use thiserror::Error;

/// Errors raised by the fixsim library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid population: N = {n}, i = {i} (need N >= 2 and 0 <= i <= N)")]
    InvalidPopulation { n: usize, i: usize },

    #[error("dominance of A violated: {condition} does not hold")]
    DominanceViolated { condition: &'static str },

    #[error("population size N = {n} is below N0 = {n0}")]
    BelowN0 { n: usize, n0: usize },

    #[error("linear system is singular (malformed kernel)")]
    SingularSystem,

    #[error("linear solve residual {residual:e} exceeds tolerance")]
    IllConditioned { residual: f64 },

    #[error("N = {n} exceeds the dense solver cap of {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("branching process is not supercritical: lambda = {lambda}")]
    Subcritical { lambda: f64 },

    #[error("perturbing {param} by {step} leaves the differentiability domain")]
    DomainExit { param: &'static str, step: f64 },

    #[error("payoffs are not in prisoner's-dilemma order b > d > a > c")]
    NotPrisonersDilemma,

    #[error("degenerate fit input: {0}")]
    DegenerateInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
