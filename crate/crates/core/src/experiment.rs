//! Repeated reduction experiments on the two generated worlds, producing
//! error curves for every subspace family.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{BasisTolerances, SuitableBases};
use crate::error::Error;
use crate::estimate::EstimateManifold;
use crate::generators::{
    build_setup1, build_setup2, Setup1Params, Setup1World, Setup2Params, ThermalBlockModel,
};
use crate::geometry::{orthonormalize, HVector, PriorManifold, Subspace};
use crate::greedy::{greedy, SnapshotSet, StoppingRule};
use crate::rng::{derive_seed, stream_rng};
use crate::sampling::{
    sample_posterior, BasisTolerancesConfig, PiDistribution, PosteriorConfig, PosteriorSamples,
    SamplerConfig,
};
use crate::theory::{empirical_width_curve, width_degenerate_ellipsoid, BoundCurve, BoundRow, ExtReal};

/// Seed labels for the independent random parts of one repetition.
const LABEL_OBSERVATION: u64 = 1;
const LABEL_POST_SINGLE: u64 = 2;
const LABEL_POST_MULTI: u64 = 3;
const LABEL_WORLD: u64 = 4;

/// Flat experiment configuration; every field has a default per setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub setup: u8,
    pub seed: u64,
    pub reps: usize,
    pub m: usize,
    pub n: usize,
    pub levels: usize,
    pub per_point: usize,
    /// `mixture` or `uniform-beta`.
    pub pi: String,
    pub pi_weight: f64,
    pub pi_scale: f64,
    pub d_box: f64,
    pub i_max: usize,
    pub max_draws_per_sample: usize,
    pub tol_one: f64,
    pub tol_zero: f64,
    /// Dimension `k` of the subspace `T` used for the bound curves.
    pub bound_k: usize,
    // Thermal-block world.
    pub cells: usize,
    pub flux: f64,
    pub theta_min: f64,
    pub theta_step: f64,
    pub t_steps: usize,
    pub relax_subsample: usize,
    // Synthetic world.
    pub ambient: usize,
    pub n_max: usize,
    pub k_hat: usize,
    pub delta: f64,
    pub eps_main: f64,
    pub eps_perturb: f64,
    pub n_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::for_setup(2)
    }
}

impl RunConfig {
    /// Defaults for setup 1 (thermal block) or 2 (synthetic).
    pub fn for_setup(setup: u8) -> Self {
        let s1 = Setup1Params::default();
        let s2 = Setup2Params::default();
        let tol = BasisTolerancesConfig::default();
        let mut cfg = RunConfig {
            setup,
            seed: 1,
            reps: 5,
            m: 25,
            n: 25,
            levels: 1,
            per_point: 5,
            pi: "mixture".into(),
            pi_weight: 0.9,
            pi_scale: 1e4,
            d_box: 10.0,
            i_max: 50,
            max_draws_per_sample: 200,
            tol_one: tol.tol_one,
            tol_zero: tol.tol_zero,
            bound_k: s2.k_hat,
            cells: 24,
            flux: 1.0,
            theta_min: s1.theta_min,
            theta_step: s1.theta_step,
            t_steps: s1.t_steps,
            relax_subsample: s1.relax_subsample,
            ambient: s2.ambient,
            n_max: s2.n_max,
            k_hat: s2.k_hat,
            delta: s2.delta,
            eps_main: s2.eps_main,
            eps_perturb: s2.eps_perturb,
            n_points: s2.n_points,
        };
        if setup == 1 {
            cfg.reps = 3;
            cfg.m = 10;
            cfg.n = 20;
            cfg.i_max = 40;
            cfg.bound_k = 4;
        }
        cfg
    }

    /// Ambient dimension of the configured world.
    pub fn ambient_dim(&self) -> usize {
        match self.setup {
            1 => self.cells * (self.cells + 1),
            _ => self.ambient,
        }
    }

    pub fn pi_distribution(&self) -> Result<PiDistribution, String> {
        match self.pi.as_str() {
            "mixture" => Ok(PiDistribution::Mixture {
                weight: self.pi_weight,
                scale: self.pi_scale,
            }),
            "uniform-beta" => Ok(PiDistribution::UniformBeta),
            other => Err(format!("unknown pi distribution `{other}`")),
        }
    }

    pub fn posterior_config(&self, j_star: Option<usize>) -> Result<PosteriorConfig, String> {
        Ok(PosteriorConfig {
            sampler: SamplerConfig {
                pi: self.pi_distribution()?,
                d_box: self.d_box,
            },
            j_star,
            max_draws_per_sample: self.max_draws_per_sample,
            tolerances: BasisTolerancesConfig {
                tol_one: self.tol_one,
                tol_zero: self.tol_zero,
            },
        })
    }

    pub fn tolerances(&self) -> BasisTolerances {
        BasisTolerances {
            one: self.tol_one,
            zero: self.tol_zero,
        }
    }

    pub fn setup1_params(&self) -> Setup1Params {
        Setup1Params {
            theta_min: self.theta_min,
            theta_step: self.theta_step,
            t_steps: self.t_steps,
            relax_subsample: self.relax_subsample,
            n_prior: self.n,
            levels: self.levels,
        }
    }

    pub fn setup2_params(&self) -> Setup2Params {
        Setup2Params {
            ambient: self.ambient,
            n_max: self.n_max,
            k_hat: self.k_hat,
            delta: self.delta,
            eps_main: self.eps_main,
            eps_perturb: self.eps_perturb,
            n_points: self.n_points,
        }
    }

    /// Checks every parameter before any computation.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("reps", self.reps),
            ("m", self.m),
            ("n", self.n),
            ("levels", self.levels),
            ("per_point", self.per_point),
            ("i_max", self.i_max),
            ("max_draws_per_sample", self.max_draws_per_sample),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.levels > self.n {
            return Err(format!("levels = {} exceeds n = {}", self.levels, self.n));
        }
        if self.bound_k > self.n {
            return Err(format!("bound_k = {} exceeds n = {}", self.bound_k, self.n));
        }
        if !(self.d_box > 0.0 && self.d_box.is_finite()) {
            return Err("d_box must be positive".into());
        }
        if !(self.tol_one > 0.0 && self.tol_one < 1.0 && self.tol_zero >= 0.0 && self.tol_zero < 1.0)
        {
            return Err("tolerances must lie in [0, 1)".into());
        }
        if self.pi == "mixture"
            && !((0.0..=1.0).contains(&self.pi_weight) && self.pi_scale > 0.0)
        {
            return Err("pi_weight must lie in [0, 1] and pi_scale be positive".into());
        }
        self.pi_distribution()?;
        let big_n = self.ambient_dim();
        if self.m > big_n || self.n > big_n {
            return Err(format!("m and n must not exceed N = {big_n}"));
        }
        match self.setup {
            1 => {
                if self.cells < 2 {
                    return Err("cells must be at least 2".into());
                }
                if !self.flux.is_finite() {
                    return Err("flux must be finite".into());
                }
                if self.t_steps == 0 {
                    return Err("t_steps must be positive".into());
                }
                if !(self.theta_min > 0.0 && self.theta_step >= 0.0) {
                    return Err("theta_min must be positive, theta_step nonnegative".into());
                }
                let tied = (self.t_steps + 1) * (self.t_steps + 1);
                if self.relax_subsample < tied {
                    return Err(format!(
                        "relax_subsample = {} is below the {tied} tied grid points",
                        self.relax_subsample
                    ));
                }
            }
            2 => {
                if 2 * self.n_max > self.ambient {
                    return Err(format!(
                        "2 n_max = {} exceeds ambient = {}",
                        2 * self.n_max,
                        self.ambient
                    ));
                }
                if self.m > self.n_max || self.n > self.n_max {
                    return Err(format!("m and n must not exceed n_max = {}", self.n_max));
                }
                if self.k_hat > self.n_max {
                    return Err("k_hat must not exceed n_max".into());
                }
                if !(self.delta > 0.0 && self.delta < 1.0) {
                    return Err("delta must lie in (0, 1)".into());
                }
                if !(self.eps_main >= 0.0 && self.eps_perturb >= 0.0) {
                    return Err("widths must be nonnegative".into());
                }
                if self.n_points == 0 {
                    return Err("n_points must be positive".into());
                }
            }
            s => return Err(format!("setup must be 1 or 2, got {s}")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Perf,
    PostSingle,
    PostMulti,
    Point,
    PriorSingle,
    PriorMulti,
    BoundDbar,
    BoundDbarbar,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Perf => "perf",
            Method::PostSingle => "post_single",
            Method::PostMulti => "post_multi",
            Method::Point => "point",
            Method::PriorSingle => "prior_single",
            Method::PriorMulti => "prior_multi",
            Method::BoundDbar => "bound_dbar",
            Method::BoundDbarbar => "bound_dbarbar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    M,
    Mpost,
    #[serde(rename = "bound")]
    Bound,
}

impl Target {
    pub fn label(self) -> &'static str {
        match self {
            Target::M => "M",
            Target::Mpost => "Mpost",
            Target::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub method: Method,
    pub rep: usize,
    pub i: usize,
    pub target: Target,
    pub value: ExtReal,
}

/// Per-repetition quantities that explain the curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepDiagnostics {
    pub rep: usize,
    pub seed: u64,
    pub manifold_points: usize,
    pub posterior_points: usize,
    pub multi_points: usize,
    pub multi_acceptance: f64,
    pub multi_partial_points: usize,
    /// Width of `M` around the bound subspace `T`.
    pub eps: f64,
    /// Widths of the prior ellipsoids.
    pub eps_prime: Vec<f64>,
    pub p: usize,
    pub q: usize,
    pub k_star: usize,
    /// First `i` at which `post_single` on `Mpost` falls below `d_box / 2`.
    pub first_finite_post: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub target: Target,
    pub i: usize,
    pub min: ExtReal,
    pub mean: ExtReal,
    pub max: ExtReal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config: RunConfig,
    pub records: Vec<CurveRecord>,
    pub diagnostics: Vec<RepDiagnostics>,
}

/// An error together with the stage of the experiment that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: String,
    #[source]
    pub source: Error,
}

fn stage<T>(name: &str, r: crate::Result<T>) -> Result<T, StageError> {
    r.map_err(|source| StageError {
        stage: name.to_string(),
        source,
    })
}

/// Everything shared by the repetitions.
pub enum Prepared {
    Thermal(Box<Setup1World>),
    Synthetic,
}

/// One repetition's manifold, prior and observation space.
#[derive(Debug, Clone)]
pub struct RepWorld {
    pub rep: usize,
    pub seed: u64,
    pub manifold: SnapshotSet,
    pub prior: PriorManifold,
    pub w: Subspace,
}

/// Builds the parts of the experiment that do not change between repetitions.
pub fn prepare(config: &RunConfig) -> Result<Prepared, StageError> {
    match config.setup {
        1 => {
            let model = stage(
                "thermal assembly",
                ThermalBlockModel::new(config.cells, config.flux),
            )?;
            let world = stage("setup 1 world", build_setup1(&model, &config.setup1_params()))?;
            Ok(Prepared::Thermal(Box::new(world)))
        }
        _ => Ok(Prepared::Synthetic),
    }
}

/// Seeded uniformly random `m`-dimensional subspace of `R^N`.
pub fn random_subspace(ambient: usize, m: usize, seed: u64) -> Subspace {
    let mut rng = stream_rng(seed, 0);
    let vs: Vec<HVector> = (0..m)
        .map(|_| HVector::from_fn(ambient, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    orthonormalize(&vs, ambient)
}

pub fn rep_world(config: &RunConfig, prepared: &Prepared, rep: usize) -> Result<RepWorld, StageError> {
    let seed = derive_seed(config.seed, rep as u64);
    match prepared {
        Prepared::Thermal(world) => {
            let w = random_subspace(
                config.ambient_dim(),
                config.m,
                derive_seed(seed, LABEL_OBSERVATION),
            );
            Ok(RepWorld {
                rep,
                seed,
                manifold: world.manifold.clone(),
                prior: world.prior.clone(),
                w,
            })
        }
        Prepared::Synthetic => {
            let world = stage(
                "setup 2 world",
                build_setup2(&config.setup2_params(), derive_seed(seed, LABEL_WORLD)),
            )?;
            let w = stage("observation space", world.observation_space(config.m))?;
            let prior = stage("prior", world.prior(config.n, config.levels))?;
            Ok(RepWorld {
                rep,
                seed,
                manifold: world.manifold,
                prior,
                w,
            })
        }
    }
}

/// `T = orthonormalized projection onto V of the first `k` greedy directions
/// of `M`, and the worst distance from `M` to it.
fn bound_subspace(
    manifold: &SnapshotSet,
    v: &Subspace,
    perf_basis: &DMatrix<f64>,
    k: usize,
) -> crate::Result<(Subspace, f64)> {
    let k = k.min(perf_basis.ncols());
    let projected: Vec<HVector> = (0..k)
        .map(|j| v.project(&perf_basis.column(j).into_owned()))
        .collect::<crate::Result<_>>()?;
    let t = orthonormalize(&projected, manifold.ambient());
    let eps = manifold.max_dist(&t)?;
    Ok((t, eps))
}

/// Staircase width of a nested prior: at dimension `i`, the smallest width
/// among ellipsoids whose subspace fits in `i` dimensions.
pub fn prior_staircase(prior: &PriorManifold, i: usize) -> ExtReal {
    prior
        .ellipsoids()
        .iter()
        .filter(|e| e.subspace.dim() <= i)
        .map(|e| ExtReal::Finite(e.width))
        .fold(ExtReal::Infinite, ExtReal::min)
}

/// First `i` at which the curve drops below `threshold`.
pub fn first_below(curve: &[f64], threshold: f64) -> Option<usize> {
    curve.iter().position(|v| *v < threshold)
}

fn push_curve(out: &mut Vec<CurveRecord>, method: Method, rep: usize, target: Target, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        out.push(CurveRecord {
            method,
            rep,
            i,
            target,
            value: ExtReal::from_f64(*v),
        });
    }
}

fn run_rep(
    config: &RunConfig,
    prepared: &Prepared,
    rep: usize,
) -> Result<(Vec<CurveRecord>, RepDiagnostics), StageError> {
    let world = rep_world(config, prepared, rep)?;
    let i_max = config.i_max.min(world.manifold.ambient());
    let stop = StoppingRule::max_dim(i_max);
    let single = PriorManifold::single(world.prior.last().clone());
    let v = &world.prior.last().subspace;
    let bases = stage(
        "suitable bases",
        SuitableBases::without_complement(v, &world.w, config.tolerances()),
    )?;
    let pcfg = config
        .posterior_config(None)
        .map_err(|e| StageError {
            stage: "config".into(),
            source: Error::ContractViolation(e),
        })?;
    let points = world.manifold.to_vec();

    let post_single = stage(
        "posterior sampling",
        sample_posterior(
            &points,
            &world.w,
            &single,
            config.per_point,
            &pcfg,
            derive_seed(world.seed, LABEL_POST_SINGLE),
        ),
    )?;
    let post_multi: Option<PosteriorSamples> = if world.prior.len() > 1 {
        Some(stage(
            "multi-ellipsoid sampling",
            sample_posterior(
                &points,
                &world.w,
                &world.prior,
                config.per_point,
                &pcfg,
                derive_seed(world.seed, LABEL_POST_MULTI),
            ),
        )?)
    } else {
        None
    };
    let estimates = stage(
        "point estimates",
        EstimateManifold::from_manifold(&points, &world.w, &single, &bases),
    )?;

    // Each method is judged on the posterior of the prior it was built from:
    // post_multi on the multi-ellipsoid one, everything else on the single one.
    let with_manifold = |samples: &[HVector]| {
        let mut v = points.clone();
        v.extend(samples.iter().cloned());
        stage("posterior cloud", SnapshotSet::new(&v))
    };
    let mpost_single = with_manifold(&post_single.samples)?;
    let mpost_multi = match &post_multi {
        Some(s) => Some(with_manifold(&s.samples)?),
        None => None,
    };

    let perf = stage("greedy on M", greedy(&world.manifold, stop))?;
    let single_cloud = stage("posterior cloud", SnapshotSet::new(&post_single.samples))?;
    let g_single = stage("greedy on posterior", greedy(&single_cloud, stop))?;
    let g_multi = match &post_multi {
        Some(s) if !s.samples.is_empty() => {
            let cloud = stage("multi posterior cloud", SnapshotSet::new(&s.samples))?;
            Some(stage("greedy on multi posterior", greedy(&cloud, stop))?)
        }
        _ => None,
    };
    let est_cloud = stage("estimate cloud", SnapshotSet::new(&estimates.estimates))?;
    let g_point = stage("greedy on estimates", greedy(&est_cloud, stop))?;

    let mut families: Vec<(Method, &DMatrix<f64>)> = vec![
        (Method::Perf, perf.basis.basis()),
        (Method::PostSingle, g_single.basis.basis()),
    ];
    if let Some(g) = &g_multi {
        families.push((Method::PostMulti, g.basis.basis()));
    }
    families.push((Method::Point, g_point.basis.basis()));
    families.push((Method::PriorSingle, v.basis()));

    let mut records = Vec::new();
    let mut first_finite = None;
    for (method, basis) in families {
        let on_m = stage("widths on M", empirical_width_curve(&world.manifold, basis, i_max))?;
        let mpost = match (&mpost_multi, method) {
            (Some(c), Method::PostMulti) => c,
            _ => &mpost_single,
        };
        let on_post = stage("widths on Mpost", empirical_width_curve(mpost, basis, i_max))?;
        if method == Method::PostSingle {
            first_finite = first_below(&on_post, 0.5 * config.d_box);
        }
        push_curve(&mut records, method, rep, Target::M, &on_m);
        push_curve(&mut records, method, rep, Target::Mpost, &on_post);
    }

    let eps_prime: Vec<f64> = world.prior.ellipsoids().iter().map(|e| e.width).collect();
    let (_, eps) = stage(
        "bound subspace",
        bound_subspace(&world.manifold, v, perf.basis.basis(), config.bound_k),
    )?;
    let k = config.bound_k.min(perf.dim());
    let curve = stage(
        "bounds",
        BoundCurve::from_bases(k, eps, world.prior.last().width, &bases),
    )?;
    for i in 0..=i_max {
        let mut push = |method, value| {
            records.push(CurveRecord {
                method,
                rep,
                i,
                target: Target::Bound,
                value,
            })
        };
        push(
            Method::PriorSingle,
            width_degenerate_ellipsoid(v.dim(), world.prior.last().width, i),
        );
        if world.prior.len() > 1 {
            push(Method::PriorMulti, prior_staircase(&world.prior, i));
        }
        push(Method::BoundDbar, curve.d_bar(i));
        push(Method::BoundDbarbar, curve.d_bar_bar(i));
    }

    let diag = RepDiagnostics {
        rep,
        seed: world.seed,
        manifold_points: world.manifold.len(),
        posterior_points: post_single.samples.len(),
        multi_points: post_multi.as_ref().map_or(0, |s| s.samples.len()),
        multi_acceptance: post_multi.as_ref().map_or(0.0, |s| s.acceptance_ratio()),
        multi_partial_points: post_multi.as_ref().map_or(0, |s| s.partial_points.len()),
        eps,
        eps_prime,
        p: bases.p,
        q: bases.q,
        k_star: curve.k_star,
        first_finite_post: first_finite,
    };
    Ok((records, diag))
}

/// Runs every repetition (in parallel) and collects records in repetition order.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutput, StageError> {
    config.validate().map_err(|e| StageError {
        stage: "config".into(),
        source: Error::ContractViolation(e),
    })?;
    let prepared = prepare(config)?;
    let per_rep: Vec<Result<_, StageError>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, &prepared, rep))
        .collect();
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for r in per_rep {
        let (rec, diag) = r?;
        records.extend(rec);
        diagnostics.push(diag);
    }
    Ok(ExperimentOutput {
        config: config.clone(),
        records,
        diagnostics,
    })
}

/// Bound curve of the first repetition's world.
pub fn run_bounds(config: &RunConfig) -> Result<Vec<BoundRow>, StageError> {
    config.validate().map_err(|e| StageError {
        stage: "config".into(),
        source: Error::ContractViolation(e),
    })?;
    let prepared = prepare(config)?;
    let world = rep_world(config, &prepared, 0)?;
    let v = &world.prior.last().subspace;
    let bases = stage(
        "suitable bases",
        SuitableBases::without_complement(v, &world.w, config.tolerances()),
    )?;
    let i_max = config.i_max.min(world.manifold.ambient());
    let perf = stage("greedy on M", greedy(&world.manifold, StoppingRule::max_dim(i_max)))?;
    let (_, eps) = stage(
        "bound subspace",
        bound_subspace(&world.manifold, v, perf.basis.basis(), config.bound_k),
    )?;
    let k = config.bound_k.min(perf.dim());
    let curve = stage(
        "bounds",
        BoundCurve::from_bases(k, eps, world.prior.last().width, &bases),
    )?;
    Ok(curve.rows(i_max))
}

/// Posterior samples of the first repetition's world under the configured
/// prior, drawn exactly as the experiment draws them.
pub fn run_sampling(config: &RunConfig) -> Result<PosteriorSamples, StageError> {
    config.validate().map_err(|e| StageError {
        stage: "config".into(),
        source: Error::ContractViolation(e),
    })?;
    let prepared = prepare(config)?;
    let world = rep_world(config, &prepared, 0)?;
    let pcfg = config.posterior_config(None).map_err(|e| StageError {
        stage: "config".into(),
        source: Error::ContractViolation(e),
    })?;
    let (prior, label) = if world.prior.len() > 1 {
        (world.prior.clone(), LABEL_POST_MULTI)
    } else {
        (PriorManifold::single(world.prior.last().clone()), LABEL_POST_SINGLE)
    };
    stage(
        "posterior sampling",
        sample_posterior(
            &world.manifold.to_vec(),
            &world.w,
            &prior,
            config.per_point,
            &pcfg,
            derive_seed(world.seed, label),
        ),
    )
}

/// One row per sample: the manifold point it was drawn for, then its entries.
pub fn samples_csv(samples: &PosteriorSamples) -> String {
    let dim = samples.samples.first().map_or(0, |h| h.len());
    let mut s = String::from("point");
    for j in 0..dim {
        let _ = write!(s, ",h{j}");
    }
    s.push('\n');
    for (h, origin) in samples.samples.iter().zip(&samples.origin) {
        let _ = write!(s, "{origin}");
        for x in h.iter() {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    s
}

impl ExperimentOutput {
    /// `min`, `mean`, `max` over repetitions for every `(method, target, i)`.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(Method, Target, usize), Vec<ExtReal>> = BTreeMap::new();
        for r in &self.records {
            groups.entry((r.method, r.target, r.i)).or_default().push(r.value);
        }
        groups
            .into_iter()
            .map(|((method, target, i), vals)| {
                let min = vals.iter().copied().fold(ExtReal::Infinite, ExtReal::min);
                let max = vals
                    .iter()
                    .copied()
                    .fold(ExtReal::Finite(0.0), |a, b| if b > a { b } else { a });
                let mean = if vals.iter().all(|v| v.is_finite()) {
                    let s: f64 = vals.iter().filter_map(|v| v.finite()).sum();
                    ExtReal::Finite(s / vals.len() as f64)
                } else {
                    ExtReal::Infinite
                };
                SummaryRow {
                    method,
                    target,
                    i,
                    min,
                    mean,
                    max,
                }
            })
            .collect()
    }

    /// Values of one curve for one repetition, indexed by `i`.
    pub fn curve(&self, method: Method, target: Target, rep: usize) -> Vec<ExtReal> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.target == target && r.rep == rep)
            .map(|r| r.value)
            .collect()
    }

    pub fn curves_csv(&self) -> String {
        let mut s = String::from("method,rep,i,target,value\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.method.label(),
                r.rep,
                r.i,
                r.target.label(),
                r.value
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,target,i,min,mean,max\n");
        for r in self.summary() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method.label(),
                r.target.label(),
                r.i,
                r.min,
                r.mean,
                r.max
            );
        }
        s
    }

    pub fn manifest(&self, command: &str, files: &[&str]) -> Manifest {
        Manifest {
            tool: "obsred".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: self.config.seed,
            files: files.iter().map(|f| f.to_string()).collect(),
            config: self.config.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Writes `curves.csv`, `summary.csv` and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path, command: &str) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("curves.csv"), self.curves_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        let manifest = self.manifest(command, &["curves.csv", "summary.csv"]);
        manifest.write(&dir.join("manifest.json"))
    }
}

/// Record of a run, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub config: RunConfig,
    #[serde(default)]
    pub diagnostics: Vec<RepDiagnostics>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")
    }
}

pub fn bounds_csv(rows: &[BoundRow]) -> String {
    let mut s = String::from("i,dbar,dbarbar,min\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.i, r.d_bar, r.d_bar_bar, r.combined);
    }
    s
}
