//! Linear algebra substrate: truncations, structured solves, SVD-based
//! rank and norm certificates.

pub mod banded;
pub mod csv;
pub mod dd;
pub mod dense;
pub mod spec;
pub mod structured;
pub mod truncation;

pub use banded::{BandLu, Banded};
pub use dd::Dd;
pub use dense::{numerical_rank, operator_norm, singular_values, CVec, Mat, RankInfo};
pub use spec::{BandCoefficient, CNum, Family, OperatorSpec, RankOne, SeqRule};
pub use structured::{ShiftedLu, StructuredOp};
pub use truncation::{build_truncation, resolvent_solve, ResolventSolution, TruncatedOperator};

/// Default relative threshold for rank certificates.
pub const RANK_TOL: f64 = 1e-8;
/// Singular values below this multiple of the operator norm are rounding noise.
pub const RANK_FLOOR: f64 = 1e-13;
