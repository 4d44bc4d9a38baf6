//! Worst-case-optimal point estimates and the subspace reduced from them.

use rayon::prelude::*;

use crate::bases::SuitableBases;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{DegenerateEllipsoid, HVector, PriorManifold, Subspace};
use crate::greedy::{greedy, GreedyResult, SnapshotSet, StoppingRule};
use crate::sampling::{observe, rotate_observation, slice_center, Observation};

/// The center of the observation slice of a single prior ellipsoid: the
/// minimum-norm Chebyshev center.
pub fn point_estimate(
    obs: &Observation,
    prior: &DegenerateEllipsoid,
    bases: &SuitableBases,
) -> Result<HVector> {
    check_dim(bases.n(), prior.subspace.dim())?;
    let alpha = rotate_observation(obs, bases)?;
    Ok(slice_center(&alpha, bases))
}

/// As [`point_estimate`], rejecting priors with more than one ellipsoid.
pub fn point_estimate_prior(
    obs: &Observation,
    prior: &PriorManifold,
    bases: &SuitableBases,
) -> Result<HVector> {
    if prior.len() != 1 {
        return Err(Error::UnsupportedPrior(format!(
            "point estimates need a single ellipsoid, got {}",
            prior.len()
        )));
    }
    point_estimate(obs, &prior.ellipsoids()[0], bases)
}

/// One estimate per observed manifold point.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateManifold {
    pub estimates: Vec<HVector>,
}

impl EstimateManifold {
    pub fn from_manifold(
        manifold: &[HVector],
        w: &Subspace,
        prior: &PriorManifold,
        bases: &SuitableBases,
    ) -> Result<Self> {
        let estimates = manifold
            .par_iter()
            .map(|h| point_estimate_prior(&observe(h, w)?, prior, bases))
            .collect::<Result<Vec<_>>>()?;
        Ok(EstimateManifold { estimates })
    }
}

pub fn reduce_from_estimates(estimates: &EstimateManifold, stop: StoppingRule) -> Result<GreedyResult> {
    greedy(&SnapshotSet::new(&estimates.estimates)?, stop)
}
