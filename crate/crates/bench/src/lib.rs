//! Fixtures shared by the benchmarks.

use obsred::generators::{build_setup2, Setup2Params, Setup2World};
use obsred::rng::stream_rng;
use obsred::{orthonormalize, HVector, Subspace};
use rand_distr::{Distribution, StandardNormal};

pub fn random_subspace(ambient: usize, dim: usize, seed: u64) -> Subspace {
    let mut rng = stream_rng(seed, 0);
    let vs: Vec<HVector> = (0..dim)
        .map(|_| HVector::from_fn(ambient, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    orthonormalize(&vs, ambient)
}

/// Synthetic world with `points` manifold samples in `R^ambient`.
pub fn synthetic_world(ambient: usize, points: usize) -> Setup2World {
    let params = Setup2Params {
        ambient,
        n_points: points,
        ..Default::default()
    };
    build_setup2(&params, 1).expect("valid parameters")
}
