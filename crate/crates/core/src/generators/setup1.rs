//! Thermal-block manifold over a parameter grid with tied conductivities, and
//! a prior built by greedy reduction of a relaxed (untied) grid.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::thermal::{solve_thermal_block, Theta, ThermalBlockModel};
use crate::error::{contract, Result};
use crate::geometry::{DegenerateEllipsoid, HVector, PriorManifold};
use crate::greedy::{greedy, GreedyResult, SnapshotSet, StoppingRule};

/// Containment slack used when checking the greedy prior is nested.
const NESTING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Setup1Params {
    pub theta_min: f64,
    pub theta_step: f64,
    pub t_steps: usize,
    /// Upper bound on the relaxed-cloud size.
    pub relax_subsample: usize,
    pub n_prior: usize,
    pub levels: usize,
}

impl Default for Setup1Params {
    fn default() -> Self {
        Setup1Params {
            theta_min: 0.1,
            theta_step: 0.1,
            t_steps: 10,
            relax_subsample: 2000,
            n_prior: 25,
            levels: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Setup1World {
    /// Solutions for `θ_1 = θ_2`, `θ_3 = θ_4` on the grid.
    pub manifold: SnapshotSet,
    pub manifold_thetas: Vec<Theta>,
    /// Solutions over the strided 4-d grid, together with the tied grid.
    pub relaxed: SnapshotSet,
    pub relaxed_thetas: Vec<Theta>,
    pub prior: PriorManifold,
    /// Greedy reduction of the relaxed cloud the prior was taken from.
    pub reduction: GreedyResult,
}

/// Grid indices `{0, s, 2s, …} ∪ {T}`.
fn strided(t_steps: usize, stride: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..=t_steps).step_by(stride).collect();
    if *v.last().unwrap() != t_steps {
        v.push(t_steps);
    }
    v
}

/// Index tuples of the relaxed cloud: the smallest stride whose 4-d subgrid,
/// joined with the tied grid, fits in `limit` points.
fn relaxed_indices(t_steps: usize, limit: usize) -> Result<Vec<[usize; 4]>> {
    let tied: Vec<[usize; 4]> = (0..=t_steps)
        .flat_map(|a| (0..=t_steps).map(move |b| [a, a, b, b]))
        .collect();
    contract(tied.len() <= limit, || {
        format!(
            "relax_subsample {limit} is smaller than the tied grid ({} points)",
            tied.len()
        )
    })?;
    for stride in 1..=t_steps.max(1) {
        let g = strided(t_steps, stride);
        let mut set: BTreeSet<[usize; 4]> = tied.iter().copied().collect();
        for &a in &g {
            for &b in &g {
                for &c in &g {
                    for &d in &g {
                        set.insert([a, b, c, d]);
                    }
                }
            }
        }
        if set.len() <= limit {
            return Ok(set.into_iter().collect());
        }
    }
    Ok(tied)
}

fn solve_all(model: &ThermalBlockModel, thetas: &[Theta]) -> Result<SnapshotSet> {
    let sols: Vec<HVector> = thetas
        .par_iter()
        .map(|t| solve_thermal_block(model, t, None))
        .collect::<Result<_>>()?;
    SnapshotSet::new(&sols)
}

/// Builds the tied manifold, the relaxed cloud and an `L`-level prior with
/// `V_j = Ŝ_j` for `j < L`, `V_L = Ŝ_{n_prior}` and widths equal to the worst
/// relaxed-cloud distance.
pub fn build_setup1(model: &ThermalBlockModel, params: &Setup1Params) -> Result<Setup1World> {
    let p = params;
    contract(p.t_steps >= 1, || "t_steps must be at least 1".into())?;
    contract(p.theta_min > 0.0 && p.theta_step >= 0.0, || {
        "theta_min must be positive and theta_step nonnegative".into()
    })?;
    contract(p.levels >= 1 && p.levels <= p.n_prior, || {
        format!("need 1 <= L <= n_prior, got L = {}, n_prior = {}", p.levels, p.n_prior)
    })?;
    let value = |t: usize| p.theta_min + p.theta_step * t as f64;
    let manifold_thetas: Vec<Theta> = (0..=p.t_steps)
        .flat_map(|a| (0..=p.t_steps).map(move |b| (a, b)))
        .map(|(a, b)| [value(a), value(a), value(b), value(b)])
        .collect();
    let relaxed_thetas: Vec<Theta> = relaxed_indices(p.t_steps, p.relax_subsample)?
        .into_iter()
        .map(|ix| ix.map(value))
        .collect();
    let manifold = solve_all(model, &manifold_thetas)?;
    let relaxed = solve_all(model, &relaxed_thetas)?;
    let reduction = greedy(&relaxed, StoppingRule::max_dim(p.n_prior))?;
    let prior = prior_from_reduction(&reduction, p.n_prior, p.levels)?;
    Ok(Setup1World {
        manifold,
        manifold_thetas,
        relaxed,
        relaxed_thetas,
        prior,
        reduction,
    })
}

/// `V_j = Ŝ_j` for `j < L`, `V_L = Ŝ_n`, widths from the greedy error curve.
pub fn prior_from_reduction(g: &GreedyResult, n: usize, levels: usize) -> Result<PriorManifold> {
    contract(levels >= 1 && levels <= n, || {
        format!("need 1 <= L <= n, got L = {levels}, n = {n}")
    })?;
    let mut ells = Vec::with_capacity(levels);
    for j in 1..levels {
        ells.push(DegenerateEllipsoid::new(g.subspace(j), g.error_at(j))?);
    }
    ells.push(DegenerateEllipsoid::new(g.subspace(n), g.error_at(n))?);
    PriorManifold::nested(ells, NESTING_TOL)
}
