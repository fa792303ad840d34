//! Fixtures shared by the pipeline benchmarks.

use halfspace_core::halfspace::{decompose, EngineSettings, HalfSpaceDecomposition2x2, Outcome};
use halfspace_core::{IdealSpec, OperatorSpec};

pub fn settings(epsilon: f64) -> EngineSettings {
    EngineSettings::new(IdealSpec::trace(), epsilon)
}

/// Decomposition of a spec that is known not to defer.
pub fn decomposed(spec: &OperatorSpec, dim: usize, epsilon: f64) -> HalfSpaceDecomposition2x2 {
    match decompose(spec, dim, &settings(epsilon)).expect("benchmark fixture decomposes") {
        Outcome::Decomposed(d) => *d,
        Outcome::Deferred(t) => panic!("fixture deferred: {}", t.variant.name()),
    }
}
