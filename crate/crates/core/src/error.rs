use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A material function was evaluated outside its domain of definition.
    /// During Newton iteration this signals step rejection rather than a
    /// programming error.
    #[error("domain error in {context}: {value} outside {domain}")]
    Domain {
        context: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// Invalid configuration (parameter out of range, inconsistent geometry).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Requested a coefficient that does not exist in the given region.
    #[error("coefficient {name} is not defined in the {region} region")]
    NoSuchCoefficient {
        name: &'static str,
        region: &'static str,
    },

    /// Mesh construction rejected the requested resolution.
    #[error("invalid mesh: {0}")]
    Mesh(String),

    /// Newton iteration failed to converge within the iteration budget.
    #[error(
        "Newton did not converge at tau={tau}: {iterations} iterations, \
         last update {last_update:.3e}, last residual {last_residual:.3e}"
    )]
    NewtonFailure {
        tau: f64,
        iterations: usize,
        last_update: f64,
        last_residual: f64,
    },

    /// Time stepping aborted; the trajectory computed so far is attached.
    #[error("simulation aborted at step {step} (tau={tau}): {source}")]
    StepFailed {
        step: usize,
        tau: f64,
        #[source]
        source: Box<Error>,
        partial: Box<crate::state::Trajectory>,
    },

    /// The banded linear solve hit a zero pivot.
    #[error("singular linear system at pivot {pivot}")]
    SingularSystem { pivot: usize },

    /// Snapshot or basis dimensions do not match.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Empty snapshot input where at least one column is required.
    #[error("empty snapshot set: {0}")]
    EmptySnapshots(&'static str),

    /// The greedy point selection hit a singular interpolation system.
    #[error("singular interpolation system at mode {mode} of component {component}")]
    SingularInterpolation { component: usize, mode: usize },

    /// The reduced Newton iteration diverged.
    #[error(
        "reduced Newton did not converge at tau={tau}: {iterations} iterations, \
         last update {last_update:.3e}"
    )]
    RomNewtonFailure {
        tau: f64,
        iterations: usize,
        last_update: f64,
    },

    /// Artifact file is malformed or does not match the current setup.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
