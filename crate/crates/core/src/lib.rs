//! Rank-one cutting-and-stacking constructions, computed exactly.
//!
//! * [`construction`] builds finite-stage towers with `BigUint` heights and
//!   exact rational level widths.
//! * [`ensemble`] samples Ornstein spacer draws from a SplitMix64 stream.
//! * [`spectral`] intersects arc families `{a : ||n_k a|| < eps}` to list the
//!   frequencies that can still be eigenvalues.
//! * [`diagnostics`] measures correlations and rigidity inside a tower with
//!   rigorous error bounds.

pub mod construction;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod rational;
pub mod spectral;

pub use construction::{
    height_sequence, ornstein_spacers, ConstructionSpec, LevelPosition, MassReport, SpacerMode, SpacerStage, Tower,
    TowerStage,
};
pub use diagnostics::{
    cesaro_score, correlation, lift_level_set, rigidity_scan, CesaroScore, CorrelationReport, LevelIndicator, LevelSet,
    RigidityEntry,
};
pub use ensemble::{
    chacon_pattern_scan, frequency_sequence, prng_next, sample_omega, sample_uniform, trial_seeds, FrequencySequence,
    OmegaDraw,
};
pub use error::{Error, Result};
pub use spectral::{
    cardinality_bound_check, chacon_gate, chain_intersect, circle_norm, defect_sequence, eigenvalue_screen, Arc,
    BoundReport, CandidateChain, CircleFrequency, GateOutcome, IntervalFamily, ScreenResult, ScreenSequence,
};
