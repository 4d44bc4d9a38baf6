//! Upper bounds on the Kolmogorov widths of the posterior manifold, closed-form
//! widths of degenerate ellipsoids, and subspaces that attain the bounds.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bases::SuitableBases;
use crate::error::{contract, Result};
use crate::geometry::{direct_sum, Subspace};
use crate::greedy::SnapshotSet;

/// A nonnegative real or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            ExtReal::Infinite => None,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }

    /// Maps `+∞` floats to [`ExtReal::Infinite`].
    pub fn from_f64(x: f64) -> ExtReal {
        if x == f64::INFINITY {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(x)
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Infinite, ExtReal::Infinite) => Some(Ordering::Equal),
            (ExtReal::Infinite, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::Finite(_), ExtReal::Infinite) => Some(Ordering::Less),
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(ExtReal::Finite(x)),
            Raw::Str(s) if s == "inf" => Ok(ExtReal::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

/// Geometry of a single-ellipsoid prior `dist(h, V) ≤ ε′` and a manifold
/// `T + B_ε` with `T ⊆ V`, `dim T = k`, observed through `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub k: usize,
    pub n: usize,
    pub ambient: usize,
    pub m: usize,
    pub eps: f64,
    pub eps_prime: f64,
    /// Descending.
    pub sigma: Vec<f64>,
    pub p: usize,
    pub q: usize,
    /// `min(n, k + n - q)`.
    pub k_star: usize,
}

/// Bound sequences `d̄_i` (prior-driven) and `d̄̄_i` (observation-driven).
#[allow(clippy::too_many_arguments)]
pub fn bound_sequences(
    k: usize,
    n: usize,
    ambient: usize,
    eps: f64,
    eps_prime: f64,
    sigma: &[f64],
    p: usize,
    q: usize,
    m: usize,
) -> Result<BoundCurve> {
    contract(eps >= 0.0 && eps_prime >= 0.0, || "widths must be nonnegative".into())?;
    contract(p <= q, || format!("p = {p} exceeds q = {q}"))?;
    contract(q <= m.min(n), || format!("q = {q} exceeds min(m, n) = {}", m.min(n)))?;
    contract(sigma.len() >= q, || format!("{} singular values given, q = {q}", sigma.len()))?;
    contract(k <= n, || format!("k = {k} exceeds n = {n}"))?;
    contract(m <= ambient && n <= ambient, || "subspace dimension exceeds N".into())?;
    let mut sigma = sigma.to_vec();
    sigma.sort_by(|a, b| b.total_cmp(a));
    Ok(BoundCurve {
        k,
        n,
        ambient,
        m,
        eps,
        eps_prime,
        sigma,
        p,
        q,
        k_star: n.min(k + n - q),
    })
}

impl BoundCurve {
    pub fn from_bases(k: usize, eps: f64, eps_prime: f64, bases: &SuitableBases) -> Result<Self> {
        bound_sequences(
            k,
            bases.n(),
            bases.ambient(),
            eps,
            eps_prime,
            &bases.sigma,
            bases.p,
            bases.q,
            bases.m(),
        )
    }

    pub fn dim_w_perp(&self) -> usize {
        self.ambient - self.m
    }

    pub fn d_bar(&self, i: usize) -> ExtReal {
        if i < self.k_star {
            ExtReal::Infinite
        } else if i < self.n {
            let s = self.sigma[self.q - (i - self.k_star) - 1];
            if s > 0.0 {
                ExtReal::Finite((self.eps + self.eps_prime) / s)
            } else {
                ExtReal::Infinite
            }
        } else {
            ExtReal::Finite(self.eps_prime)
        }
    }

    pub fn d_bar_bar(&self, i: usize) -> ExtReal {
        if i < self.k + self.dim_w_perp() {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(self.eps)
        }
    }

    pub fn combined(&self, i: usize) -> ExtReal {
        self.d_bar(i).min(self.d_bar_bar(i))
    }

    pub fn rows(&self, i_max: usize) -> Vec<BoundRow> {
        (0..=i_max)
            .map(|i| BoundRow {
                i,
                d_bar: self.d_bar(i),
                d_bar_bar: self.d_bar_bar(i),
                combined: self.combined(i),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub i: usize,
    pub d_bar: ExtReal,
    pub d_bar_bar: ExtReal,
    pub combined: ExtReal,
}

/// `i`-width of `{h : dist(h, S) ≤ ε}` with `dim S = k`.
pub fn width_degenerate_ellipsoid(k: usize, eps: f64, i: usize) -> ExtReal {
    if i < k {
        ExtReal::Infinite
    } else {
        ExtReal::Finite(eps)
    }
}

/// Worst distance from the cloud to `s`.
pub fn empirical_width(cloud: &SnapshotSet, s: &Subspace) -> Result<f64> {
    cloud.max_dist(s)
}

/// Worst distance from the cloud to the span of the first `i` columns of
/// `basis`, for `i = 0..=i_max`. Columns must be orthonormal; `i` beyond the
/// column count uses all columns.
pub fn empirical_width_curve(
    cloud: &SnapshotSet,
    basis: &nalgebra::DMatrix<f64>,
    i_max: usize,
) -> Result<Vec<f64>> {
    crate::error::check_dim(cloud.ambient(), basis.nrows())?;
    let worst = |r: &nalgebra::DMatrix<f64>| {
        r.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    };
    let mut resid = cloud.matrix().clone();
    let mut out = Vec::with_capacity(i_max + 1);
    out.push(worst(&resid));
    for i in 1..=i_max {
        if i <= basis.ncols() {
            let q = basis.column(i - 1);
            let c = resid.tr_mul(&q);
            resid.ger(-1.0, &q, &c, 1.0);
            out.push(worst(&resid));
        } else {
            out.push(out[i - 1]);
        }
    }
    Ok(out)
}

fn columns_subspace(mat: nalgebra::DMatrixView<'_, f64>) -> Result<Subspace> {
    Subspace::from_orthonormal(mat.into_owned())
}

/// `T ⊕ span{v*_{q+1..n}}`.
fn base_subspace(t: &Subspace, bases: &SuitableBases) -> Result<Subspace> {
    let tail = Subspace::from_orthonormal(bases.v_tail())?;
    direct_sum(t, &tail)
}

/// The subspace of dimension at most `i` used to establish the `d̄_i` bound:
/// `T ⊕ span{v*_{q+1..n}}` plus the `i - k*` interaction directions with the
/// smallest singular values, then filler from `W⊥ ∩ V⊥`.
pub fn proof_subspace(i: usize, t: &Subspace, bases: &SuitableBases) -> Result<Subspace> {
    let k = t.dim();
    let (n, p, q) = (bases.n(), bases.p, bases.q);
    let k_star = n.min(k + n - q);
    contract(i >= k_star, || format!("i = {i} is below k* = {k_star}"))?;
    let v_base = base_subspace(t, bases)?;
    let extra = i - k_star;
    let kq = q - p;
    let with_tilde = extra.min(kq);
    let tilde = columns_subspace(bases.w_tilde.columns(kq - with_tilde, with_tilde))?;
    let mut s = direct_sum(&v_base, &tilde)?;
    if extra > kq {
        let u = bases.complement()?;
        let fill = (extra - kq).min(u.ncols());
        let filler = columns_subspace(u.columns(0, fill))?;
        s = direct_sum(&s, &filler)?;
    }
    Ok(s)
}

/// A subspace of dimension at most `i` whose worst error over the union set
/// is bounded by `min(d̄_i, d̄̄_i)` whenever that is finite.
pub fn witness_subspace(
    i: usize,
    t: &Subspace,
    bases: &SuitableBases,
    curve: &BoundCurve,
    v: &Subspace,
) -> Result<Option<Subspace>> {
    let (db, dbb) = (curve.d_bar(i), curve.d_bar_bar(i));
    if !db.is_finite() && !dbb.is_finite() {
        return Ok(None);
    }
    if dbb <= db {
        // T ⊕ W⊥.
        let u = bases.complement()?;
        let w_perp_vecs = [
            bases.w_tilde.clone(),
            bases.v_tail(),
            u.clone(),
        ];
        let mut s = t.clone();
        for block in &w_perp_vecs {
            s = direct_sum(&s, &Subspace::from_orthonormal(block.clone())?)?;
        }
        return Ok(Some(s));
    }
    if i >= curve.n {
        return Ok(Some(v.clone()));
    }
    Ok(Some(proof_subspace(i, t, bases)?))
}
