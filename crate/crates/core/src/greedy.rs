//! Greedy construction of nested approximation subspaces from snapshots.

use nalgebra::DMatrix;

use crate::error::{check_dim, contract, Result};
use crate::geometry::{matrix_from_columns, orthogonalize_against, HVector, Subspace};

/// Residuals below this are treated as an exhausted snapshot span.
pub const EXHAUSTED_TOL: f64 = 1e-12;

/// A nonempty collection of vectors of one ambient dimension, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    data: DMatrix<f64>,
}

impl SnapshotSet {
    pub fn new(snapshots: &[HVector]) -> Result<Self> {
        contract(!snapshots.is_empty(), || "snapshot set is empty".into())?;
        let n = snapshots[0].len();
        for s in snapshots {
            check_dim(n, s.len())?;
        }
        Ok(SnapshotSet {
            data: matrix_from_columns(n, snapshots),
        })
    }

    /// Columns of `data` are the snapshots.
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        contract(data.ncols() > 0, || "snapshot set is empty".into())?;
        Ok(SnapshotSet { data })
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn ambient(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn get(&self, j: usize) -> HVector {
        self.data.column(j).into_owned()
    }

    pub fn iter(&self) -> impl Iterator<Item = HVector> + '_ {
        self.data.column_iter().map(|c| c.into_owned())
    }

    pub fn to_vec(&self) -> Vec<HVector> {
        self.iter().collect()
    }

    /// Largest distance from a snapshot to `s`.
    pub fn max_dist(&self, s: &Subspace) -> Result<f64> {
        check_dim(self.ambient(), s.ambient())?;
        let coeffs = s.basis().tr_mul(&self.data);
        let resid = &self.data - s.basis() * coeffs;
        Ok(resid
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max))
    }
}

/// When to stop adding dimensions. With neither field set, the greedy runs
/// until the snapshot span is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StoppingRule {
    pub max_dim: Option<usize>,
    pub tolerance: Option<f64>,
}

impl StoppingRule {
    pub fn max_dim(i_max: usize) -> Self {
        StoppingRule {
            max_dim: Some(i_max),
            tolerance: None,
        }
    }

    pub fn tolerance(tau: f64) -> Self {
        StoppingRule {
            max_dim: None,
            tolerance: Some(tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    /// `N×d`; the first `i` columns span the `i`-th nested subspace.
    pub basis: Subspace,
    pub selected_indices: Vec<usize>,
    /// `error_curve[t]` is the worst snapshot error after `t + 1` dimensions.
    pub error_curve: Vec<f64>,
    /// Worst snapshot norm, the error of the zero subspace.
    pub initial_error: f64,
}

impl GreedyResult {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// The `i`-dimensional subspace, capped at the final dimension.
    pub fn subspace(&self, i: usize) -> Subspace {
        self.basis.leading(i)
    }

    pub fn nested_subspaces(&self) -> Vec<Subspace> {
        (1..=self.dim()).map(|i| self.subspace(i)).collect()
    }

    /// Worst snapshot error with `i` dimensions (`i = 0` is the zero subspace).
    pub fn error_at(&self, i: usize) -> f64 {
        if i == 0 || self.error_curve.is_empty() {
            self.initial_error
        } else {
            self.error_curve[(i - 1).min(self.error_curve.len() - 1)]
        }
    }
}

pub fn greedy(snapshots: &SnapshotSet, stop: StoppingRule) -> Result<GreedyResult> {
    contract(!snapshots.is_empty(), || "snapshot set is empty".into())?;
    let big_n = snapshots.ambient();
    let mut resid = snapshots.matrix().clone();
    let mut cols: Vec<HVector> = Vec::new();
    let mut selected = Vec::new();
    let mut curve = Vec::new();

    let (mut best, mut err) = argmax_norm(&resid);
    let initial_error = err;
    loop {
        if stop.max_dim.is_some_and(|d| cols.len() >= d)
            || stop.tolerance.is_some_and(|t| err <= t)
            || err < EXHAUSTED_TOL
            || cols.len() >= big_n
        {
            break;
        }
        let candidate: HVector = resid.column(best).into_owned();
        let Some(q) = orthogonalize_against(&candidate, &cols) else {
            break;
        };
        // r <- r - q (qᵀ r) for every snapshot residual.
        let coeffs = resid.tr_mul(&q);
        resid.ger(-1.0, &q, &coeffs, 1.0);
        cols.push(q);
        selected.push(best);
        (best, err) = argmax_norm(&resid);
        curve.push(err);
    }
    Ok(GreedyResult {
        basis: Subspace::from_orthonormal(matrix_from_columns(big_n, &cols))?,
        selected_indices: selected,
        error_curve: curve,
        initial_error,
    })
}

/// Index and value of the largest column norm; ties go to the lowest index.
fn argmax_norm(m: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, c) in m.column_iter().enumerate() {
        let v = c.norm();
        if v > best.1 {
            best = (j, v);
        }
    }
    best
}
