use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an argument outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `e^{xi(t)}` (or `e^{beta xi(t)}`) is not representable in f64.
    ///
    /// Callers hitting this on the momentum form should switch to the
    /// velocity-form stepper, whose decay factors stay in (0, 1].
    #[error("exponential overflow: {0}; use the velocity-form stepper")]
    ExponentialOverflow(String),

    /// Certificate parameters violate an admissibility bound.
    #[error("inadmissible certificate: {0}")]
    InadmissibleCertificate(String),

    /// The root scan for the threshold polynomial ran out of range.
    #[error("root scan exhausted: {0}")]
    RootScanExhausted(String),

    /// A trajectory does not cover the range a monitor needs.
    #[error("trajectory too short: {0}")]
    TrajectoryTooShort(String),

    /// I/O failure while writing reports.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
