//! Observation slices of the prior and random sampling of the posterior.
//!
//! For a single degenerate ellipsoid `{h : dist(h, V) <= ε′}` and an
//! observation `Wᵀh`, the set of compatible states is an ellipsoid
//! `c_h + E_h` with principal axes along `w̃_j` (semi-axis scaled by `σ_j⁻¹`),
//! unbounded along `v*_{q+1..n}`, and a ball in `W⊥ ∩ V⊥`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{BasisTolerances, SuitableBases};
use crate::error::{check_dim, contract, Error, Result};
use crate::geometry::{
    check_finite, orthonormalize, DegenerateEllipsoid, HVector, PriorManifold, Subspace,
};
use crate::rng::stream_rng;

/// Slack used when testing sampled states against the ellipsoid widths.
pub const ACCEPT_TOL: f64 = 1e-10;

/// Relative size of a negative budget that is treated as zero.
pub const BUDGET_ROUNDING: f64 = 1e-10;

/// Raw measurements `⟨w_j, h⟩` in the observation subspace's own basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: DVector<f64>,
}

pub fn observe(h: &HVector, w: &Subspace) -> Result<Observation> {
    check_finite(h)?;
    Ok(Observation {
        values: w.coords(h)?,
    })
}

/// `c_h + E_h`: the part of one prior ellipsoid consistent with an observation.
#[derive(Debug, Clone)]
pub struct EllipsoidSlice<'a> {
    pub center: HVector,
    /// `ε′² - Σ_{j>q} ⟨w*_j, h⟩²`; negative means the slice is empty.
    pub radius_sq_budget: f64,
    /// `⟨w*_j, h⟩` for `j = 1..m`.
    pub rotated: DVector<f64>,
    pub bases: &'a SuitableBases,
}

impl EllipsoidSlice<'_> {
    pub fn is_empty(&self) -> bool {
        self.radius_sq_budget < 0.0
    }
}

/// `Σ_{j≤q} α_j σ_j⁻¹ v*_j + Σ_{j>q} α_j w*_j` for rotated coefficients `α`.
pub(crate) fn slice_center(alpha: &DVector<f64>, bases: &SuitableBases) -> HVector {
    let mut c = HVector::zeros(bases.ambient());
    for j in 0..bases.m() {
        if alpha[j] == 0.0 {
            continue;
        }
        if j < bases.q {
            c.axpy(alpha[j] / bases.sigma[j], &bases.v_star.column(j), 1.0);
        } else {
            c.axpy(alpha[j], &bases.w_star.column(j), 1.0);
        }
    }
    c
}

/// `⟨w*_j, h⟩ = Σ_i obs_i x_ij`.
pub(crate) fn rotate_observation(obs: &Observation, bases: &SuitableBases) -> Result<DVector<f64>> {
    check_dim(bases.m(), obs.values.len())?;
    contract(obs.values.iter().all(|x| x.is_finite()), || {
        "observation has non-finite entries".into()
    })?;
    Ok(bases.x.tr_mul(&obs.values))
}

pub fn build_slice<'a>(
    obs: &Observation,
    prior: &DegenerateEllipsoid,
    bases: &'a SuitableBases,
) -> Result<EllipsoidSlice<'a>> {
    check_dim(bases.n(), prior.subspace.dim())?;
    check_dim(bases.ambient(), prior.subspace.ambient())?;
    let alpha = rotate_observation(obs, bases)?;
    let tail: f64 = alpha.iter().skip(bases.q).map(|a| a * a).sum();
    let width_sq = prior.width * prior.width;
    let mut budget = width_sq - tail;
    // A point on the ellipsoid boundary can land a rounding error outside.
    if budget < 0.0 && -budget <= BUDGET_ROUNDING * width_sq.max(tail) {
        budget = 0.0;
    }
    Ok(EllipsoidSlice {
        center: slice_center(&alpha, bases),
        radius_sq_budget: budget,
        rotated: alpha,
        bases,
    })
}

/// Law of the fraction `π` of the squared radius spent on the `w̃` axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PiDistribution {
    /// `χ²(q-p) / (χ²(q-p) + χ²(r))`: uniform direction over the bounded axes.
    UniformBeta,
    /// Uniform-beta with probability `1 - weight`, otherwise the `w̃` share is
    /// multiplied by `scale` before normalizing.
    Mixture { weight: f64, scale: f64 },
}

impl Default for PiDistribution {
    fn default() -> Self {
        PiDistribution::mixture()
    }
}

impl PiDistribution {
    pub fn mixture() -> Self {
        PiDistribution::Mixture {
            weight: 0.9,
            scale: 1e4,
        }
    }

    /// Draws `π ∈ [0, 1]` given `k = q - p` bounded axes and `r = dim(W⊥ ∩ V⊥)`.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, r: usize, rng: &mut R) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if r == 0 {
            return 1.0;
        }
        let x = ChiSquared::new(k as f64).expect("positive dof").sample(rng);
        let y = ChiSquared::new(r as f64).expect("positive dof").sample(rng);
        let scale = match *self {
            PiDistribution::UniformBeta => 1.0,
            PiDistribution::Mixture { weight, scale } => {
                if rng.random::<f64>() < weight {
                    scale
                } else {
                    1.0
                }
            }
        };
        let num = scale * x;
        let pi = num / (num + y);
        if pi.is_finite() {
            pi.clamp(0.0, 1.0)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub pi: PiDistribution,
    /// Half-width of the box replacing the unbounded `v*_{q+1..n}` directions.
    pub d_box: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            pi: PiDistribution::default(),
            d_box: 10.0,
        }
    }
}

/// One draw together with the budget split used to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceSample {
    pub point: HVector,
    pub gamma: f64,
    pub pi: f64,
    /// `Σ b_j²`.
    pub b_sq: f64,
    /// `‖z‖²`.
    pub z_sq: f64,
}

/// Per-bases precomputation shared by all draws.
struct SliceSampler<'a> {
    bases: &'a SuitableBases,
    /// ONB of `V + W`, used to project Gaussians onto `W⊥ ∩ V⊥`.
    sum_basis: DMatrix<f64>,
    r: usize,
}

impl<'a> SliceSampler<'a> {
    fn new(bases: &'a SuitableBases) -> Self {
        SliceSampler {
            bases,
            sum_basis: bases.sum_basis(),
            r: bases.r(),
        }
    }

    fn draw<R: Rng + ?Sized>(
        &self,
        slice: &EllipsoidSlice<'_>,
        cfg: &SamplerConfig,
        rng: &mut R,
    ) -> SliceSample {
        let b = self.bases;
        let (p, q, n) = (b.p, b.q, b.n());
        let k = q - p;
        let budget = slice.radius_sq_budget.max(0.0);
        let gamma = budget * rng.random::<f64>();
        let pi = cfg.pi.sample(k, self.r, rng);
        let mut point = slice.center.clone();

        let mut b_sq = 0.0;
        if k > 0 {
            let dir = unit_gaussian(k, rng);
            let radius = (gamma * pi).sqrt();
            for (i, j) in (p..q).enumerate() {
                let bj = radius * dir[i];
                b_sq += bj * bj;
                point.axpy(-bj / b.sigma[j], &b.w_tilde.column(i), 1.0);
            }
        }
        for j in q..n {
            let d = cfg.d_box * (2.0 * rng.random::<f64>() - 1.0);
            point.axpy(d, &b.v_star.column(j), 1.0);
        }
        let mut z_sq = 0.0;
        if self.r > 0 {
            let mut g = HVector::from_fn(b.ambient(), |_, _| StandardNormal.sample(rng));
            for _pass in 0..2 {
                let c = self.sum_basis.tr_mul(&g);
                g.gemv(-1.0, &self.sum_basis, &c, 1.0);
            }
            let norm = g.norm();
            if norm > 0.0 {
                let radius = (gamma * (1.0 - pi)).sqrt();
                g *= radius / norm;
                z_sq = radius * radius;
                point += g;
            }
        }
        SliceSample {
            point,
            gamma,
            pi,
            b_sq,
            z_sq,
        }
    }
}

fn unit_gaussian<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g: DVector<f64> = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
        let n = g.norm();
        if n > 0.0 {
            return g / n;
        }
    }
}

/// Draws from the slice, keeping the budget split of every draw.
pub fn sample_slice_l1_detailed<R: Rng + ?Sized>(
    slice: &EllipsoidSlice<'_>,
    n_samples: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<SliceSample>> {
    if slice.is_empty() {
        return Err(Error::EmptySlice {
            budget: slice.radius_sq_budget,
        });
    }
    let sampler = SliceSampler::new(slice.bases);
    Ok((0..n_samples).map(|_| sampler.draw(slice, cfg, rng)).collect())
}

pub fn sample_slice_l1<R: Rng + ?Sized>(
    slice: &EllipsoidSlice<'_>,
    n_samples: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<HVector>> {
    Ok(sample_slice_l1_detailed(slice, n_samples, cfg, rng)?
        .into_iter()
        .map(|s| s.point)
        .collect())
}

/// Accepted draws from rejection sampling against every prior ellipsoid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSampleResult {
    pub samples: Vec<HVector>,
    pub draws: usize,
    /// Fewer than the requested samples were accepted within the draw limit.
    pub partial: bool,
}

impl MultiSampleResult {
    pub fn acceptance_ratio(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.samples.len() as f64 / self.draws as f64
        }
    }
}

/// Samples the slice of ellipsoid `j_star` (1-based) and keeps draws lying in
/// every ellipsoid of `prior`. `bases` must be built from `V_{j_star}` and `W`.
#[allow(clippy::too_many_arguments)]
pub fn sample_slice_multi<R: Rng + ?Sized>(
    obs: &Observation,
    prior: &PriorManifold,
    j_star: usize,
    bases: &SuitableBases,
    n_samples: usize,
    max_draws: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<MultiSampleResult> {
    contract(j_star >= 1 && j_star <= prior.len(), || {
        format!("reference index {j_star} outside 1..={}", prior.len())
    })?;
    let reference = &prior.ellipsoids()[j_star - 1];
    let slice = build_slice(obs, reference, bases)?;
    if slice.is_empty() {
        return Err(Error::EmptySlice {
            budget: slice.radius_sq_budget,
        });
    }
    let sampler = SliceSampler::new(bases);
    let mut samples = Vec::with_capacity(n_samples);
    let mut draws = 0;
    while samples.len() < n_samples && draws < max_draws {
        let s = sampler.draw(&slice, cfg, rng).point;
        draws += 1;
        let mut ok = true;
        for (j, e) in prior.ellipsoids().iter().enumerate() {
            if j + 1 == j_star {
                continue;
            }
            if !e.contains(&s, ACCEPT_TOL)? {
                ok = false;
                break;
            }
        }
        if ok {
            samples.push(s);
        }
    }
    let partial = samples.len() < n_samples;
    Ok(MultiSampleResult {
        samples,
        draws,
        partial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorConfig {
    pub sampler: SamplerConfig,
    /// Reference ellipsoid (1-based); the last one when unset.
    pub j_star: Option<usize>,
    /// Draw limit per requested sample for rejection sampling.
    pub max_draws_per_sample: usize,
    pub tolerances: BasisTolerancesConfig,
}

/// Serializable mirror of [`BasisTolerances`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisTolerancesConfig {
    pub tol_one: f64,
    pub tol_zero: f64,
}

impl Default for BasisTolerancesConfig {
    fn default() -> Self {
        let t = BasisTolerances::default();
        BasisTolerancesConfig {
            tol_one: t.one,
            tol_zero: t.zero,
        }
    }
}

impl From<BasisTolerancesConfig> for BasisTolerances {
    fn from(c: BasisTolerancesConfig) -> Self {
        BasisTolerances {
            one: c.tol_one,
            zero: c.tol_zero,
        }
    }
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        PosteriorConfig {
            sampler: SamplerConfig::default(),
            j_star: None,
            max_draws_per_sample: 200,
            tolerances: BasisTolerancesConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    /// Samples grouped by manifold point, in point order.
    pub samples: Vec<HVector>,
    /// Manifold point index of each sample.
    pub origin: Vec<usize>,
    pub draws: usize,
    /// Indices of manifold points that hit the draw limit.
    pub partial_points: Vec<usize>,
}

impl PosteriorSamples {
    pub fn acceptance_ratio(&self) -> f64 {
        if self.draws == 0 {
            0.0
        } else {
            self.samples.len() as f64 / self.draws as f64
        }
    }
}

/// `per_point` samples of the posterior slice for each manifold point. Point
/// `i` uses random stream `i` of `seed`, so the result does not depend on
/// thread scheduling.
pub fn sample_posterior(
    manifold: &[HVector],
    w: &Subspace,
    prior: &PriorManifold,
    per_point: usize,
    cfg: &PosteriorConfig,
    seed: u64,
) -> Result<PosteriorSamples> {
    contract(!manifold.is_empty(), || "manifold sample set is empty".into())?;
    let j_star = cfg.j_star.unwrap_or(prior.len());
    contract(j_star >= 1 && j_star <= prior.len(), || {
        format!("reference index {j_star} outside 1..={}", prior.len())
    })?;
    let reference = &prior.ellipsoids()[j_star - 1];
    let bases =
        SuitableBases::without_complement(&reference.subspace, w, cfg.tolerances.into())?;
    let single = prior.len() == 1;

    let per: Vec<Result<MultiSampleResult>> = manifold
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let mut rng = stream_rng(seed, i as u64);
            let obs = observe(h, w)?;
            if single {
                let slice = build_slice(&obs, reference, &bases)?;
                let samples = sample_slice_l1(&slice, per_point, &cfg.sampler, &mut rng)?;
                Ok(MultiSampleResult {
                    samples,
                    draws: per_point,
                    partial: false,
                })
            } else {
                sample_slice_multi(
                    &obs,
                    prior,
                    j_star,
                    &bases,
                    per_point,
                    per_point.saturating_mul(cfg.max_draws_per_sample).max(1),
                    &cfg.sampler,
                    &mut rng,
                )
            }
        })
        .collect();

    let mut out = PosteriorSamples {
        samples: Vec::with_capacity(manifold.len() * per_point),
        origin: Vec::with_capacity(manifold.len() * per_point),
        draws: 0,
        partial_points: Vec::new(),
    };
    for (i, r) in per.into_iter().enumerate() {
        let r = r?;
        out.draws += r.draws;
        if r.partial {
            out.partial_points.push(i);
        }
        out.origin.extend(std::iter::repeat_n(i, r.samples.len()));
        out.samples.extend(r.samples);
    }
    Ok(out)
}

/// Membership in `∪_{h ∈ T + B_ε} (M_ps ∩ H_h)` for a single prior ellipsoid
/// containing `T`.
///
/// The first constraint is `dist(h′, V) ≤ ε′`; the second asks for some
/// `u ∈ T` whose observation differs from that of `h′` by at most `ε`.
pub fn union_set_contains(
    h_prime: &HVector,
    t: &Subspace,
    eps: f64,
    prior: &DegenerateEllipsoid,
    bases: &SuitableBases,
    tol: f64,
) -> Result<bool> {
    check_dim(bases.ambient(), h_prime.len())?;
    check_dim(bases.ambient(), t.ambient())?;
    let defect = prior.subspace.containment_defect(t)?;
    contract(defect <= 1e-8, || {
        format!("T is not contained in the prior subspace (defect {defect:e})")
    })?;

    // Coordinates on w*, w̃ and the part outside V + W.
    let alpha = bases.w_star.tr_mul(h_prime);
    let beta = bases.w_tilde.tr_mul(h_prime);
    let sum = bases.sum_basis();
    let outside = h_prime - &sum * sum.tr_mul(h_prime);
    let mut prior_sq: f64 = alpha.iter().skip(bases.q).map(|a| a * a).sum();
    for (i, j) in (bases.p..bases.q).enumerate() {
        let s = bases.sigma[j];
        let bj = (1.0 - s * s).sqrt() * alpha[j] - s * beta[i];
        prior_sq += bj * bj;
    }
    prior_sq += outside.norm_squared();
    if prior_sq > prior.width * prior.width + tol {
        return Ok(false);
    }

    // min_{u ∈ T} ‖Wᵀ(h′ - u)‖ via an ONB of the range of (Wᵀ restricted to T).
    let wt = bases.w_star.tr_mul(t.basis());
    let cols: Vec<DVector<f64>> = wt.column_iter().map(|c| c.into_owned()).collect();
    let range = orthonormalize(&cols, bases.m());
    let resid = range.residual(&alpha)?;
    Ok(resid.norm_squared() <= eps * eps + tol)
}
