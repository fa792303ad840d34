//! Almost invariant half-space decompositions for finite sections of
//! symbolically specified operators on `l^2`.
//!
//! The pipeline builds near-eigenvectors of `T = T' - beta`, selects an
//! almost-orthogonal system, conjugates by the resulting similarity and reads
//! off 2x2 and 3x3 block forms whose corner blocks have rank at most one.

pub mod error;
pub mod halfspace;
pub mod ideals;
pub mod opcore;
pub mod refine;
pub mod spectra;

pub use num_complex::Complex64 as C64;

pub use error::{Error, ErrorClass, Result, Warning};
pub use ideals::{IdealKind, IdealSpec, MembershipCertificate};
pub use opcore::{CVec, Mat, OperatorSpec, StructuredOp, TruncatedOperator};
pub use spectra::{CaseTag, CaseVariant, SpectralInfo};
