//! Near-eigenvectors, almost-orthogonal selection, the similarity `S` and the
//! 2x2 block forms built from them.

pub mod core;
pub mod decompose;
pub mod equivalence;
pub mod frame;
pub mod near;
pub mod oblique;
pub mod system;

pub use self::core::{assemble_core, choose_halfspace, CoreMatrix, Halfspace};
pub use decompose::{
    decompose, decompose_2x2, decompose_case1, decompose_case2, decompose_case3, decompose_nilpotent, default_target, run_case1,
    ApproachPlan, Blocks2x2, Case1Run, Certificates2x2, EngineSettings, HalfSpaceDecomposition2x2, Outcome,
};
pub use equivalence::{equivalence_replace, rank_under_equivalence, Equivalence, EquivalenceMode};
pub use frame::{build_similarity, orthonormalize, Frame, Orthonormal, SimilarityMap};
pub use near::{near_eigenvectors, ApproachSequence};
pub use oblique::{oblique_form, ObliqueDecomposition};
pub use system::{riesz_certificate, select_almost_orthogonal, select_up_to, AlmostOrthogonalSystem, RieszCertificate};
