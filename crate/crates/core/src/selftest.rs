//! Quick property checks on small random instances, for sanity-checking a
//! build from the command line.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bases::{compute_suitable_bases, BasisTolerances, SuitableBases};
use crate::estimate::point_estimate;
use crate::generators::{solve_thermal_block, ThermalBlockModel};
use crate::geometry::{orthonormality_defect, orthonormalize, DegenerateEllipsoid, HVector, Subspace};
use crate::greedy::{greedy, SnapshotSet, StoppingRule};
use crate::rng::stream_rng;
use crate::sampling::{build_slice, observe, sample_slice_l1, SamplerConfig};
use crate::theory::{width_degenerate_ellipsoid, ExtReal};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = std::result::Result<String, String>;
type CheckFn = fn(u64) -> Outcome;

const INSTANCES: usize = 20;

fn gaussian<R: Rng>(rng: &mut R, n: usize) -> HVector {
    HVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn random_subspace<R: Rng>(rng: &mut R, big_n: usize, d: usize) -> Subspace {
    let vs: Vec<HVector> = (0..d).map(|_| gaussian(rng, big_n)).collect();
    orthonormalize(&vs, big_n)
}

fn instance<R: Rng>(rng: &mut R) -> (Subspace, Subspace, DegenerateEllipsoid, HVector) {
    let big_n = rng.random_range(12..=30);
    let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
    let v = random_subspace(rng, big_n, n);
    let w = random_subspace(rng, big_n, m);
    let eps_prime = 0.05 + rng.random::<f64>();
    let inside = v.basis() * gaussian(rng, v.dim());
    let out = v.residual(&gaussian(rng, big_n)).expect("same ambient");
    let scale = eps_prime * rng.random::<f64>() / out.norm().max(1e-300);
    let h = inside + out * scale;
    let e = DegenerateEllipsoid::new(v.clone(), eps_prime).expect("positive width");
    (v, w, e, h)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bases_check(seed: u64) -> Outcome {
    let mut rng = stream_rng(seed, 0);
    for k in 0..INSTANCES {
        let (v, w, _, _) = instance(&mut rng);
        let b = compute_suitable_bases(&v, &w, BasisTolerances::default()).map_err(err)?;
        let g = b.w_star.tr_mul(&b.v_star);
        for i in 0..b.m() {
            for j in 0..b.n() {
                let expected = if i == j { b.sigma[j] } else { 0.0 };
                if (g[(i, j)] - expected).abs() > 1e-8 {
                    return Err(format!("instance {k}: cross Gram entry ({i},{j}) off"));
                }
            }
        }
        let full = b.four_block_basis().map_err(err)?;
        if full.ncols() != b.ambient() || orthonormality_defect(&full) > 1e-10 {
            return Err(format!("instance {k}: four-block basis is not an ONB"));
        }
    }
    Ok(format!("{INSTANCES} pairs"))
}

fn sampler_check(seed: u64) -> Outcome {
    let mut rng = stream_rng(seed, 1);
    let cfg = SamplerConfig::default();
    let mut total = 0;
    for k in 0..INSTANCES {
        let (v, w, e, h) = instance(&mut rng);
        let obs = observe(&h, &w).map_err(err)?;
        let bases = SuitableBases::without_complement(&v, &w, BasisTolerances::default()).map_err(err)?;
        let slice = build_slice(&obs, &e, &bases).map_err(err)?;
        for s in sample_slice_l1(&slice, 100, &cfg, &mut rng).map_err(err)? {
            let o = observe(&s, &w).map_err(err)?;
            if (o.values - &obs.values).amax() > 1e-8 || v.dist(&s).map_err(err)? > e.width + 1e-8 {
                return Err(format!("instance {k}: sample outside the slice"));
            }
            total += 1;
        }
    }
    Ok(format!("{total} samples"))
}

fn estimate_check(seed: u64) -> Outcome {
    let mut rng = stream_rng(seed, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let (v, w, e, h) = instance(&mut rng);
        let obs = observe(&h, &w).map_err(err)?;
        let bases = SuitableBases::without_complement(&v, &w, BasisTolerances::default()).map_err(err)?;
        let p = point_estimate(&obs, &e, &bases).map_err(err)?;
        let c = build_slice(&obs, &e, &bases).map_err(err)?.center;
        worst = worst.max((p - c).amax());
    }
    if worst > 1e-10 {
        return Err(format!("estimate differs from slice center by {worst:e}"));
    }
    Ok(format!("max deviation {worst:e}"))
}

fn greedy_check(seed: u64) -> Outcome {
    let mut rng = stream_rng(seed, 3);
    let pts: Vec<HVector> = (0..40).map(|_| gaussian(&mut rng, 15)).collect();
    let set = SnapshotSet::new(&pts).map_err(err)?;
    let g = greedy(&set, StoppingRule::max_dim(10)).map_err(err)?;
    if orthonormality_defect(g.basis.basis()) > 1e-10 {
        return Err("greedy basis not orthonormal".into());
    }
    for i in 1..=g.dim() {
        if g.error_at(i) > g.error_at(i - 1) + 1e-12 {
            return Err(format!("error increases at dimension {i}"));
        }
        let actual = set.max_dist(&g.subspace(i)).map_err(err)?;
        if (actual - g.error_at(i)).abs() > 1e-9 {
            return Err(format!("reported error off at dimension {i}"));
        }
    }
    Ok(format!("{} dimensions", g.dim()))
}

fn width_check(_seed: u64) -> Outcome {
    for (n, eps) in [(4, 1e-5), (25, 1e-2)] {
        for i in 0..2 * n {
            let w = width_degenerate_ellipsoid(n, eps, i);
            let expected = if i < n { ExtReal::Infinite } else { ExtReal::Finite(eps) };
            if w != expected {
                return Err(format!("n = {n}, i = {i}: got {w}"));
            }
        }
    }
    Ok("n = 4, 25".into())
}

fn thermal_check(_seed: u64) -> Outcome {
    let model = ThermalBlockModel::new(8, 1.0).map_err(err)?;
    let theta = [0.3, 1.2, 0.7, 2.0];
    let b = model.load(&theta, None).map_err(err)?;
    let h = model.solve_nodal(&theta, None).map_err(err)?;
    let r = model.operator(&theta).map_err(err)?.mul_vec(&h).map_err(err)? - &b;
    let residual = r.norm() / b.norm();
    if residual > 1e-10 {
        return Err(format!("relative residual {residual:e}"));
    }
    let y = solve_thermal_block(&model, &theta, None).map_err(err)?;
    if y.len() != model.dim() {
        return Err("solution has the wrong dimension".into());
    }
    Ok(format!("residual {residual:e}"))
}

/// Runs every check; `seed` drives the random instances.
pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let checks: [(&'static str, CheckFn); 6] = [
        ("suitable bases", bases_check),
        ("sampler soundness", sampler_check),
        ("point estimate", estimate_check),
        ("greedy", greedy_check),
        ("ellipsoid widths", width_check),
        ("thermal solve", thermal_check),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let (passed, detail) = match f(seed) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name, passed, detail }
        })
        .collect()
}
