//! Non-stationary binary subdivision: masks, operators, difference schemes,
//! contraction search, asymptotic similarity and convergence certificates.

pub mod catalog;
pub mod cli;
pub mod error;
pub mod mask;
pub mod operator;
pub mod refine;
pub mod scheme;

pub use error::{Error, Result};
pub use mask::{Mask, MaskError};
pub use operator::{ProductOperator, SearchParams, Window};
pub use scheme::{ConvergenceCertificate, SchemeSpec};
