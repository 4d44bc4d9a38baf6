//! Finite-dimensional Hilbert-space primitives.
//!
//! The ambient space is `R^N` with the Euclidean inner product. Elements are
//! plain [`HVector`]s; linear subspaces are carried by an orthonormal basis
//! matrix wrapped in [`Subspace`].

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, contract, Error, Result};

/// An element of the ambient space, as coordinates in its canonical ONB.
pub type HVector = DVector<f64>;

/// Tolerance on `max |BᵀB - I|` accepted for a basis declared orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Relative drop tolerance used by [`orthonormalize`].
pub const DROP_TOL: f64 = 1e-10;

pub fn is_finite(h: &HVector) -> bool {
    h.iter().all(|x| x.is_finite())
}

pub(crate) fn check_finite(h: &HVector) -> Result<()> {
    contract(is_finite(h), || "vector has non-finite entries".into())
}

/// A linear subspace of `R^N` represented by orthonormal columns.
///
/// A basis with zero columns is the zero subspace `{0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Subspace {
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    /// Wraps a basis that is already orthonormal, checking the claim.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let dev = orthonormality_defect(&basis);
        contract(dev <= ORTHONORMAL_TOL, || {
            format!("basis columns are not orthonormal (max |BᵀB - I| = {dev:e})")
        })?;
        contract(basis.iter().all(|x| x.is_finite()), || {
            "basis has non-finite entries".into()
        })?;
        Ok(Subspace { basis })
    }

    /// Span of the columns of an arbitrary matrix.
    pub fn span_of_columns(columns: &DMatrix<f64>) -> Self {
        let vectors: Vec<HVector> = columns.column_iter().map(|c| c.into_owned()).collect();
        orthonormalize(&vectors, columns.nrows())
    }

    /// Canonical coordinate subspace `span{e_i : i in indices}`.
    pub fn coordinate(ambient: usize, indices: &[usize]) -> Result<Self> {
        let mut basis = DMatrix::zeros(ambient, indices.len());
        for (col, &i) in indices.iter().enumerate() {
            contract(i < ambient, || format!("coordinate index {i} out of range"))?;
            basis[(i, col)] = 1.0;
        }
        Subspace::from_orthonormal(basis)
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// Subspace spanned by the first `d` basis columns.
    pub fn leading(&self, d: usize) -> Subspace {
        let d = d.min(self.dim());
        Subspace {
            basis: self.basis.columns(0, d).into_owned(),
        }
    }

    /// Coefficients `Bᵀh` of `h` in this basis.
    pub fn coords(&self, h: &HVector) -> Result<DVector<f64>> {
        check_dim(self.ambient(), h.len())?;
        Ok(self.basis.tr_mul(h))
    }

    pub fn project(&self, h: &HVector) -> Result<HVector> {
        let c = self.coords(h)?;
        Ok(&self.basis * c)
    }

    /// `h - P_S(h)`.
    pub fn residual(&self, h: &HVector) -> Result<HVector> {
        Ok(h - self.project(h)?)
    }

    pub fn dist(&self, h: &HVector) -> Result<f64> {
        Ok(self.residual(h)?.norm())
    }

    /// Largest distance from a column of `other` to `self`.
    pub fn containment_defect(&self, other: &Subspace) -> Result<f64> {
        check_dim(self.ambient(), other.ambient())?;
        let mut worst: f64 = 0.0;
        for c in other.basis.column_iter() {
            let c = c.into_owned();
            worst = worst.max(self.dist(&c)?);
        }
        Ok(worst)
    }
}

/// `max |BᵀB - I|` over all entries.
pub fn orthonormality_defect(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.tr_mul(basis);
    let d = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn project(h: &HVector, s: &Subspace) -> Result<HVector> {
    s.project(h)
}

pub fn dist(h: &HVector, s: &Subspace) -> Result<f64> {
    s.dist(h)
}

/// Orthonormal basis of `span{vectors}` by modified Gram-Schmidt with one
/// re-orthogonalization pass. Vectors whose residual falls below
/// `DROP_TOL * (1 + ‖v‖)` are dropped; vectors of the wrong length are ignored.
pub fn orthonormalize(vectors: &[HVector], ambient: usize) -> Subspace {
    let mut cols: Vec<HVector> = Vec::new();
    for v in vectors.iter().filter(|v| v.len() == ambient) {
        if cols.len() == ambient {
            break;
        }
        if let Some(q) = orthogonalize_against(v, &cols) {
            cols.push(q);
        }
    }
    Subspace {
        basis: matrix_from_columns(ambient, &cols),
    }
}

/// Like `DMatrix::from_columns`, but allows zero columns.
pub(crate) fn matrix_from_columns(rows: usize, cols: &[HVector]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Normalized residual of `v` against orthonormal `cols`, or `None` if `v` is
/// (numerically) in their span.
pub(crate) fn orthogonalize_against(v: &HVector, cols: &[HVector]) -> Option<HVector> {
    let scale = v.norm();
    if !scale.is_finite() {
        return None;
    }
    let mut r = v.clone();
    for _pass in 0..2 {
        for q in cols {
            let c = q.dot(&r);
            r.axpy(-c, q, 1.0);
        }
    }
    let nr = r.norm();
    if nr < DROP_TOL * (1.0 + scale) {
        None
    } else {
        Some(r / nr)
    }
}

pub fn direct_sum(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    check_dim(a.ambient(), b.ambient())?;
    let vectors: Vec<HVector> = a
        .basis
        .column_iter()
        .chain(b.basis.column_iter())
        .map(|c| c.into_owned())
        .collect();
    Ok(orthonormalize(&vectors, a.ambient()))
}

/// `{h : dist(h, V) <= width}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateEllipsoid {
    pub subspace: Subspace,
    pub width: f64,
}

impl DegenerateEllipsoid {
    pub fn new(subspace: Subspace, width: f64) -> Result<Self> {
        contract(width >= 0.0 && !width.is_nan(), || {
            format!("ellipsoid width must be nonnegative, got {width}")
        })?;
        Ok(DegenerateEllipsoid { subspace, width })
    }

    pub fn contains(&self, h: &HVector, tol: f64) -> Result<bool> {
        Ok(self.subspace.dist(h)? <= self.width + tol)
    }
}

pub fn ellipsoid_contains(e: &DegenerateEllipsoid, h: &HVector, tol: f64) -> Result<bool> {
    e.contains(h, tol)
}

/// Intersection of `L >= 1` degenerate ellipsoids.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorManifold {
    ellipsoids: Vec<DegenerateEllipsoid>,
}

impl PriorManifold {
    pub fn new(ellipsoids: Vec<DegenerateEllipsoid>) -> Result<Self> {
        contract(!ellipsoids.is_empty(), || "prior needs at least one ellipsoid".into())?;
        let n = ellipsoids[0].subspace.ambient();
        for e in &ellipsoids {
            check_dim(n, e.subspace.ambient())?;
        }
        Ok(PriorManifold { ellipsoids })
    }

    pub fn single(e: DegenerateEllipsoid) -> Self {
        PriorManifold {
            ellipsoids: vec![e],
        }
    }

    /// A prior whose subspaces are nested `V_1 ⊂ … ⊂ V_L` and widths
    /// nonincreasing, as produced by a reduced-basis construction.
    pub fn nested(ellipsoids: Vec<DegenerateEllipsoid>, tol: f64) -> Result<Self> {
        let prior = PriorManifold::new(ellipsoids)?;
        for (j, pair) in prior.ellipsoids.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            let defect = b.subspace.containment_defect(&a.subspace)?;
            contract(defect <= tol, || {
                format!("V_{} is not contained in V_{} (defect {defect:e})", j + 1, j + 2)
            })?;
            contract(a.width >= b.width, || {
                format!("widths increase at j = {}: {} < {}", j + 1, a.width, b.width)
            })?;
        }
        Ok(prior)
    }

    pub fn len(&self) -> usize {
        self.ellipsoids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ellipsoids.is_empty()
    }

    pub fn ambient(&self) -> usize {
        self.ellipsoids[0].subspace.ambient()
    }

    pub fn ellipsoids(&self) -> &[DegenerateEllipsoid] {
        &self.ellipsoids
    }

    pub fn get(&self, j: usize) -> Option<&DegenerateEllipsoid> {
        self.ellipsoids.get(j)
    }

    pub fn last(&self) -> &DegenerateEllipsoid {
        self.ellipsoids.last().expect("nonempty prior")
    }

    pub fn contains(&self, h: &HVector, tol: f64) -> Result<bool> {
        for e in &self.ellipsoids {
            if !e.contains(h, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn prior_contains(prior: &PriorManifold, h: &HVector, tol: f64) -> Result<bool> {
    prior.contains(h, tol)
}

impl From<DegenerateEllipsoid> for PriorManifold {
    fn from(e: DegenerateEllipsoid) -> Self {
        PriorManifold::single(e)
    }
}

pub(crate) fn unit(ambient: usize, i: usize) -> HVector {
    let mut e = HVector::zeros(ambient);
    e[i] = 1.0;
    e
}

impl TryFrom<Vec<DegenerateEllipsoid>> for PriorManifold {
    type Error = Error;
    fn try_from(v: Vec<DegenerateEllipsoid>) -> Result<Self> {
        PriorManifold::new(v)
    }
}
