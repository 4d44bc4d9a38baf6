//! Synthetic manifold whose dominant directions are nearly invisible to the
//! observation space: the direct sum of a "main" ball and a thin weighted
//! ellipsoid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::{orthonormalize, DegenerateEllipsoid, HVector, PriorManifold, Subspace};
use crate::greedy::SnapshotSet;
use crate::rng::stream_rng;

const NESTING_TOL: f64 = 1e-8;
/// Smallest admissible `√(1-δ²)`.
const MIN_COMPLEMENT: f64 = 1e-12;
/// Decay rate of the perturbation weights.
const GAMMA_BASE: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Setup2Params {
    pub ambient: usize,
    pub n_max: usize,
    pub k_hat: usize,
    pub delta: f64,
    pub eps_main: f64,
    pub eps_perturb: f64,
    pub n_points: usize,
}

impl Default for Setup2Params {
    fn default() -> Self {
        Setup2Params {
            ambient: 200,
            n_max: 50,
            k_hat: 5,
            delta: 1e-4,
            eps_main: 1.0,
            eps_perturb: 1e-3,
            n_points: 150,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Setup2World {
    pub params: Setup2Params,
    /// `γ_j`, `j = 1..n_max`.
    pub gamma: Vec<f64>,
    /// Columns `ṽ_1..ṽ_{n_max}`.
    pub v_tilde: DMatrix<f64>,
    /// Columns `w̃_1..w̃_{n_max}`.
    pub w_tilde: DMatrix<f64>,
    /// Columns `t_1..t_k̂`, the main directions.
    pub t: DMatrix<f64>,
    pub manifold: SnapshotSet,
}

impl Setup2World {
    /// `W = span{w̃_1..w̃_m}`.
    pub fn observation_space(&self, m: usize) -> Result<Subspace> {
        contract(m <= self.params.n_max, || {
            format!("m = {m} exceeds n_max = {}", self.params.n_max)
        })?;
        Subspace::from_orthonormal(self.w_tilde.columns(0, m).into_owned())
    }

    /// `span{ṽ_1..ṽ_j}`.
    pub fn prior_space(&self, j: usize) -> Result<Subspace> {
        contract(j <= self.params.n_max, || {
            format!("dimension {j} exceeds n_max = {}", self.params.n_max)
        })?;
        Subspace::from_orthonormal(self.v_tilde.columns(0, j).into_owned())
    }

    /// `V_j = span{ṽ_1..j}` for `j < L`, `V_L = span{ṽ_1..n}`, widths equal to
    /// the worst distance from the manifold cloud.
    pub fn prior(&self, n: usize, levels: usize) -> Result<PriorManifold> {
        contract(levels >= 1 && levels <= n, || {
            format!("need 1 <= L <= n, got L = {levels}, n = {n}")
        })?;
        let dims: Vec<usize> = (1..levels).chain(std::iter::once(n)).collect();
        let mut ells = Vec::with_capacity(dims.len());
        for d in dims {
            let s = self.prior_space(d)?;
            let width = self.manifold.max_dist(&s)?;
            ells.push(DegenerateEllipsoid::new(s, width)?);
        }
        PriorManifold::nested(ells, NESTING_TOL)
    }

    /// `Σ α_j t_j + δ Σ_{j≤k̂} β_j w̃_j + Σ_{j>k̂} β_j w̃_j`.
    pub fn point(&self, alpha: &DVector<f64>, beta: &DVector<f64>) -> HVector {
        let k = self.params.k_hat;
        let mut scaled = beta.clone();
        for j in 0..k {
            scaled[j] *= self.params.delta;
        }
        &self.t * alpha + &self.w_tilde * scaled
    }
}

/// Uniform draw from the `k`-ball of radius `r`.
pub fn uniform_ball<R: Rng + ?Sized>(k: usize, r: f64, rng: &mut R) -> DVector<f64> {
    if k == 0 {
        return DVector::zeros(0);
    }
    let dir = loop {
        let g: DVector<f64> = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let n = g.norm();
        if n > 0.0 {
            break g / n;
        }
    };
    let u: f64 = Uniform::new(0.0, 1.0).expect("valid range").sample(rng);
    dir * (r * u.powf(1.0 / k as f64))
}

/// `γ_j = 0.85^{-n_max}` for `j ≤ k̂` and `0.85^{-(j-k̂)}` after.
pub fn gamma_weights(n_max: usize, k_hat: usize) -> Vec<f64> {
    (1..=n_max)
        .map(|j| {
            if j <= k_hat {
                GAMMA_BASE.powi(-(n_max as i32))
            } else {
                GAMMA_BASE.powi(-((j - k_hat) as i32))
            }
        })
        .collect()
}

/// Constructs the two bases, the main directions and a cloud of
/// `n_points` manifold samples. Random stream 0 of `seed` draws the bases and
/// stream 1 the cloud.
pub fn build_setup2(params: &Setup2Params, seed: u64) -> Result<Setup2World> {
    let p = *params;
    contract(p.n_max >= 1 && p.k_hat <= p.n_max, || {
        format!("need 1 <= n_max and k_hat <= n_max, got {} and {}", p.n_max, p.k_hat)
    })?;
    contract(2 * p.n_max <= p.ambient, || {
        format!("2 n_max = {} exceeds the ambient dimension {}", 2 * p.n_max, p.ambient)
    })?;
    contract(p.delta > 0.0 && p.delta < 1.0, || {
        format!("delta must lie in (0, 1), got {}", p.delta)
    })?;
    let comp = (1.0 - p.delta * p.delta).sqrt();
    contract(comp > MIN_COMPLEMENT, || {
        format!("delta = {} too close to 1 for the main directions", p.delta)
    })?;
    contract(p.eps_main >= 0.0 && p.eps_perturb >= 0.0 && p.n_points >= 1, || {
        "widths must be nonnegative and n_points positive".into()
    })?;

    let mut rng = stream_rng(seed, 0);
    let raw: Vec<HVector> = (0..2 * p.n_max)
        .map(|_| HVector::from_fn(p.ambient, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    let e = orthonormalize(&raw, p.ambient).into_basis();
    contract(e.ncols() == 2 * p.n_max, || "random vectors were rank deficient".into())?;

    let v_tilde = e.columns(0, p.n_max).into_owned();
    let mut w_tilde = v_tilde.clone();
    for j in 0..p.k_hat {
        let col = e.column(j) * p.delta + e.column(p.n_max + j) * comp;
        w_tilde.set_column(j, &col);
    }
    let mut t = DMatrix::zeros(p.ambient, p.k_hat);
    for j in 0..p.k_hat {
        let col = (v_tilde.column(j) - w_tilde.column(j) * p.delta) / comp;
        t.set_column(j, &col);
    }
    let gamma = gamma_weights(p.n_max, p.k_hat);

    let mut world = Setup2World {
        params: p,
        gamma,
        v_tilde,
        w_tilde,
        t,
        manifold: SnapshotSet::from_matrix(DMatrix::zeros(p.ambient, 1))?,
    };
    let mut rng = stream_rng(seed, 1);
    let cloud: Vec<HVector> = (0..p.n_points)
        .map(|_| {
            let alpha = uniform_ball(p.k_hat, p.eps_main, &mut rng);
            let u = uniform_ball(p.n_max, p.eps_perturb, &mut rng);
            let beta = DVector::from_fn(p.n_max, |j, _| u[j] / world.gamma[j]);
            world.point(&alpha, &beta)
        })
        .collect();
    world.manifold = SnapshotSet::new(&cloud)?;
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::geometry::orthonormality_defect;

    fn small() -> Setup2Params {
        Setup2Params {
            ambient: 60,
            n_max: 12,
            k_hat: 3,
            delta: 1e-2,
            n_points: 40,
            ..Default::default()
        }
    }

    #[test]
    fn gram_invariants_hold() {
        let w = build_setup2(&Setup2Params::default(), 7).unwrap();
        let p = w.params;
        let g = w.w_tilde.tr_mul(&w.v_tilde);
        for i in 0..p.n_max {
            for j in 0..p.n_max {
                let expected = match (i == j, j < p.k_hat) {
                    (false, _) => 0.0,
                    (true, true) => p.delta,
                    (true, false) => 1.0,
                };
                assert!((g[(i, j)] - expected).abs() <= 1e-10, "({i},{j}) = {}", g[(i, j)]);
            }
        }
        assert!(orthonormality_defect(&w.v_tilde) <= 1e-10);
        assert!(orthonormality_defect(&w.w_tilde) <= 1e-10);
        assert!(orthonormality_defect(&w.t) <= 1e-10);
    }

    #[test]
    fn main_directions_barely_observed() {
        let w = build_setup2(&Setup2Params::default(), 3).unwrap();
        let p = w.params;
        let c = w.t.tr_mul(&w.w_tilde);
        for i in 0..p.k_hat {
            for j in 0..p.n_max {
                if j < p.k_hat {
                    assert!(c[(i, j)].abs() <= p.delta + 1e-10);
                } else {
                    assert!(c[(i, j)].abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn cloud_lies_in_the_two_ellipsoids() {
        let w = build_setup2(&small(), 11).unwrap();
        let p = w.params;
        assert_eq!(w.manifold.len(), p.n_points);
        for h in w.manifold.iter() {
            let alpha = w.t.tr_mul(&h);
            assert!(alpha.norm() <= p.eps_main + 1e-12);
            let rest = &h - &w.t * &alpha;
            let c = w.w_tilde.tr_mul(&rest);
            let weighted: f64 = (0..p.n_max)
                .map(|j| {
                    let beta = if j < p.k_hat { c[j] / p.delta } else { c[j] };
                    (w.gamma[j] * beta).powi(2)
                })
                .sum();
            assert!(weighted.sqrt() <= p.eps_perturb * (1.0 + 1e-8));
            assert!((&rest - &w.w_tilde * &c).norm() <= 1e-12);
        }
    }

    #[test]
    fn prior_contains_cloud() {
        let w = build_setup2(&small(), 2).unwrap();
        let prior = w.prior(8, 4).unwrap();
        assert_eq!(prior.len(), 4);
        assert_eq!(prior.last().subspace.dim(), 8);
        for h in w.manifold.iter() {
            assert!(prior.contains(&h, 1e-12).unwrap());
        }
    }

    #[test]
    fn gamma_matches_definition() {
        let g = gamma_weights(50, 5);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * b;
        assert!(close(g[0], 0.85f64.powf(-50.0)));
        assert!(close(g[4], 0.85f64.powf(-50.0)));
        assert!(close(g[5], 1.0 / 0.85));
        assert!(close(g[49], 0.85f64.powf(-45.0)));
    }

    #[test]
    fn guards() {
        let mut p = small();
        p.n_max = 31;
        assert!(matches!(build_setup2(&p, 0), Err(Error::ContractViolation(_))));
        let mut p = small();
        p.delta = 1.0;
        assert!(matches!(build_setup2(&p, 0), Err(Error::ContractViolation(_))));
        p.delta = 1.0 - 1e-17;
        assert!(build_setup2(&p, 0).is_err());
        p.delta = 0.0;
        assert!(build_setup2(&p, 0).is_err());
    }

    #[test]
    fn same_seed_same_world() {
        let a = build_setup2(&small(), 5).unwrap();
        let b = build_setup2(&small(), 5).unwrap();
        assert_eq!(a.manifold, b.manifold);
        let c = build_setup2(&small(), 6).unwrap();
        assert_ne!(a.manifold, c.manifold);
    }
}
