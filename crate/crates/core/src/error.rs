use thiserror::Error;

use crate::mask::MaskError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("level {level}: mask does not reproduce constants (a(-1) = {at_minus_one:e}, a(1) = {at_one})")]
    NotConstantReproducing {
        level: u32,
        at_minus_one: f64,
        at_one: f64,
    },
    #[error("level {level}: mask support {support:?} exceeds the locality bound [-{locality}, {locality}]")]
    SupportExceedsLocality {
        level: u32,
        support: (i64, i64),
        locality: i64,
    },
    #[error("level {level} is outside the scheme's domain [{first}, {}]", last.map_or("inf".to_string(), |l| l.to_string()))]
    LevelOutOfRange {
        level: u32,
        first: u32,
        last: Option<u32>,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input window [{lo}, {hi}] is too short for any fully supported output value")]
    EmptyOutput { lo: i64, hi: i64 },
    #[error("x = {x} lies outside the sampled domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("no (K, n) with K <= {k_max}, n <= {n_max} gives a product norm below 1")]
    NotFound { n_max: u32, k_max: u32 },
    #[error("schemes are not aligned: locality bounds {left} and {right} differ")]
    AlignmentMismatch { left: i64, right: i64 },
    #[error("asymptotic similarity not established in the scanned window (verdict: {verdict})")]
    SimilarityNotEstablished { verdict: String },
    #[error("product-norm differences never stay below epsilon = {epsilon:e} in the scanned window")]
    TailNotReached { epsilon: f64 },
    #[error("comparator scheme must be stationary")]
    ComparatorNotStationary,
    #[error("eta = {eta} is outside ({lower}, 1)")]
    EtaOutOfRange { eta: f64, lower: f64 },
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

impl Error {
    /// Stable machine-readable name of the failure.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::NotConstantReproducing { .. } => "NotConstantReproducing",
            Error::SupportExceedsLocality { .. } => "SupportExceedsLocality",
            Error::LevelOutOfRange { .. } => "LevelOutOfRange",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::EmptyOutput { .. } => "EmptyOutput",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::NotFound { .. } => "NotFound",
            Error::AlignmentMismatch { .. } => "AlignmentMismatch",
            Error::SimilarityNotEstablished { .. } => "SimilarityNotEstablished",
            Error::TailNotReached { .. } => "TailNotReached",
            Error::ComparatorNotStationary => "ComparatorNotStationary",
            Error::EtaOutOfRange { .. } => "EtaOutOfRange",
            Error::Inconsistent(_) => "Inconsistent",
            Error::Mask(MaskError::NotConstantReproducing { .. }) => "NotConstantReproducing",
            Error::Mask(MaskError::NotFactorable { .. }) => "NotFactorable",
            Error::Mask(_) => "Inconsistent",
        }
    }

    /// True for outcomes that mean "could not decide within the scanned
    /// window" rather than "a precondition failed".
    pub fn is_inconclusive(&self) -> bool {
        matches!(
            self,
            Error::NotFound { .. }
                | Error::SimilarityNotEstablished { .. }
                | Error::TailNotReached { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
