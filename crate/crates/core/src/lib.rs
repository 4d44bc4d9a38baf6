pub mod bases;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod generators;
pub mod geometry;
pub mod greedy;
pub mod rng;
pub mod sampling;
pub mod selftest;
pub mod theory;

pub use bases::{compute_suitable_bases, decompose, BasisTolerances, Decomposition, SuitableBases};
pub use error::{Error, Result};
pub use estimate::{point_estimate, point_estimate_prior, reduce_from_estimates, EstimateManifold};
pub use geometry::*;
pub use greedy::{greedy, GreedyResult, SnapshotSet, StoppingRule};
pub use sampling::*;
pub use theory::{
    empirical_width, empirical_width_curve, proof_subspace, bound_sequences, width_degenerate_ellipsoid, witness_subspace,
    BoundCurve, BoundRow, ExtReal,
};
