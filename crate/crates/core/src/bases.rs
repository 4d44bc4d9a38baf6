//! Principal-vector bases of a prior subspace `V` and an observation subspace
//! `W`, and the induced orthogonal decomposition
//! `H = W ⊕ span{w̃} ⊕ span{v*_{q+1..n}} ⊕ (W⊥ ∩ V⊥)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, contract, Error, Result};
use crate::geometry::{matrix_from_columns, orthogonalize_against, unit, HVector, Subspace};

/// Thresholds classifying singular values as exactly one or exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisTolerances {
    /// `σ ≥ 1 - one` counts as 1.
    pub one: f64,
    /// `σ ≤ zero` counts as 0.
    pub zero: f64,
}

impl Default for BasisTolerances {
    fn default() -> Self {
        BasisTolerances {
            one: 1e-8,
            zero: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuitableBases {
    /// `N×m`, rotated ONB of `W`.
    pub w_star: DMatrix<f64>,
    /// `N×n`, rotated ONB of `V`.
    pub v_star: DMatrix<f64>,
    /// `min(m, n)` values in `[0, 1]`, nonincreasing.
    pub sigma: Vec<f64>,
    pub p: usize,
    pub q: usize,
    /// `N×(q-p)`, column `j - p - 1` is `w̃_j` for `j = p+1..=q`.
    pub w_tilde: DMatrix<f64>,
    /// `N×r` ONB of `W⊥ ∩ V⊥`; only built on request since it costs `O(N²)`.
    pub u_basis: Option<DMatrix<f64>>,
    /// `m×m` left singular vectors of `G = WᵀV`; `w_star = W·x`.
    pub x: DMatrix<f64>,
    /// `n×n` right singular vectors of `G`; `v_star = V·z`.
    pub z: DMatrix<f64>,
}

/// Builds the bases including the `W⊥ ∩ V⊥` block.
pub fn compute_suitable_bases(
    v: &Subspace,
    w: &Subspace,
    tol: BasisTolerances,
) -> Result<SuitableBases> {
    let mut b = SuitableBases::without_complement(v, w, tol)?;
    b.u_basis = Some(b.build_complement());
    Ok(b)
}

impl SuitableBases {
    /// Everything except `u_basis`; cost `O(mnN)`.
    pub fn without_complement(v: &Subspace, w: &Subspace, tol: BasisTolerances) -> Result<Self> {
        check_dim(v.ambient(), w.ambient())?;
        let (n, m, big_n) = (v.dim(), w.dim(), v.ambient());
        contract(n >= 1, || "prior subspace must have dimension >= 1".into())?;
        contract(m >= 1, || "observation subspace must have dimension >= 1".into())?;
        contract(tol.one >= 0.0 && tol.zero >= 0.0, || "tolerances must be nonnegative".into())?;

        let g = w.basis().tr_mul(v.basis());
        let k = m.min(n);
        let (mut x_thin, sigma, mut z_thin) = if m >= n {
            let (u, s, vv) = jacobi_svd(&g)?;
            (u, s, vv)
        } else {
            let (u, s, vv) = jacobi_svd(&g.transpose())?;
            (vv, s, u)
        };
        let sigma: Vec<f64> = sigma.into_iter().map(|s| s.clamp(0.0, 1.0)).collect();
        debug_assert_eq!(sigma.len(), k);

        for j in 0..k {
            if needs_flip(&z_thin.column(j).into_owned()) {
                z_thin.column_mut(j).neg_mut();
                x_thin.column_mut(j).neg_mut();
            }
        }
        let x = complete_orthonormal(&x_thin);
        let z = complete_orthonormal(&z_thin);

        let p = sigma.iter().filter(|&&s| s >= 1.0 - tol.one).count();
        let q = sigma.iter().filter(|&&s| s > tol.zero).count();
        let required = m + n - p;
        if required > big_n {
            return Err(Error::InfeasibleGeometry {
                required,
                ambient: big_n,
            });
        }

        let w_star = w.basis() * &x;
        let v_star = v.basis() * &z;
        let mut w_tilde = DMatrix::zeros(big_n, q - p);
        for j in p..q {
            let s = sigma[j];
            let scale = (1.0 - s * s).sqrt();
            let col = (v_star.column(j) - w_star.column(j) * s) / scale;
            w_tilde.set_column(j - p, &col);
        }

        Ok(SuitableBases {
            w_star,
            v_star,
            sigma,
            p,
            q,
            w_tilde,
            u_basis: None,
            x,
            z,
        })
    }

    pub fn ambient(&self) -> usize {
        self.w_star.nrows()
    }

    pub fn m(&self) -> usize {
        self.w_star.ncols()
    }

    pub fn n(&self) -> usize {
        self.v_star.ncols()
    }

    /// `dim(W⊥ ∩ V⊥) = N - m - n + p`.
    pub fn r(&self) -> usize {
        self.ambient() + self.p - self.m() - self.n()
    }

    /// `v*_{q+1..n}` as an `N×(n-q)` matrix.
    pub fn v_tail(&self) -> DMatrix<f64> {
        self.v_star.columns(self.q, self.n() - self.q).into_owned()
    }

    /// ONB of `V + W`: `[w*_{1..m} | w̃ | v*_{q+1..n}]`.
    pub fn sum_basis(&self) -> DMatrix<f64> {
        let (big_n, m, n) = (self.ambient(), self.m(), self.n());
        let k = self.q - self.p;
        let mut out = DMatrix::zeros(big_n, m + k + n - self.q);
        out.columns_mut(0, m).copy_from(&self.w_star);
        out.columns_mut(m, k).copy_from(&self.w_tilde);
        out.columns_mut(m + k, n - self.q).copy_from(&self.v_tail());
        out
    }

    pub fn complement(&self) -> Result<&DMatrix<f64>> {
        self.u_basis.as_ref().ok_or_else(|| {
            Error::ContractViolation("bases were built without the W⊥ ∩ V⊥ block".into())
        })
    }

    /// Adds the `W⊥ ∩ V⊥` block if it is missing.
    pub fn with_complement(mut self) -> Self {
        if self.u_basis.is_none() {
            self.u_basis = Some(self.build_complement());
        }
        self
    }

    /// The full four-block ONB `[w* | w̃ | v*_{q+1..n} | u]` of `H`.
    pub fn four_block_basis(&self) -> Result<DMatrix<f64>> {
        let u = self.complement()?;
        let s = self.sum_basis();
        let mut out = DMatrix::zeros(self.ambient(), s.ncols() + u.ncols());
        out.columns_mut(0, s.ncols()).copy_from(&s);
        out.columns_mut(s.ncols(), u.ncols()).copy_from(u);
        Ok(out)
    }

    /// Canonical basis residuals against `V + W`, first `r` independent ones.
    fn build_complement(&self) -> DMatrix<f64> {
        let big_n = self.ambient();
        let r = self.r();
        let s = self.sum_basis();
        let mut cols: Vec<HVector> = Vec::with_capacity(r);
        for i in 0..big_n {
            if cols.len() == r {
                break;
            }
            let e = unit(big_n, i);
            let mut res = &e - &s * s.tr_mul(&e);
            res -= &s * s.tr_mul(&res);
            if let Some(col) = orthogonalize_against(&res, &cols) {
                if res.norm() > 1e-6 {
                    cols.push(col);
                }
            }
        }
        matrix_from_columns(big_n, &cols)
    }
}

/// Coefficients of `h` on the four orthogonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// On `w*_{1..m}`.
    pub a: DVector<f64>,
    /// On `w̃_{p+1..q}`.
    pub b: DVector<f64>,
    /// On `v*_{q+1..n}`.
    pub d: DVector<f64>,
    /// On `u_{1..r}`.
    pub c: DVector<f64>,
}

pub fn decompose(h: &HVector, bases: &SuitableBases) -> Result<Decomposition> {
    check_dim(bases.ambient(), h.len())?;
    let u = bases.complement()?;
    Ok(Decomposition {
        a: bases.w_star.tr_mul(h),
        b: bases.w_tilde.tr_mul(h),
        d: bases.v_tail().tr_mul(h),
        c: u.tr_mul(h),
    })
}

impl Decomposition {
    pub fn reconstruct(&self, bases: &SuitableBases) -> Result<HVector> {
        let u = bases.complement()?;
        Ok(&bases.w_star * &self.a
            + &bases.w_tilde * &self.b
            + bases.v_tail() * &self.d
            + u * &self.c)
    }
}

fn needs_flip(col: &DVector<f64>) -> bool {
    let mut best = 0.0f64;
    let mut sign_negative = false;
    for &v in col.iter() {
        if v.abs() > best {
            best = v.abs();
            sign_negative = v < 0.0;
        }
    }
    sign_negative
}

/// Thin SVD `a = u·diag(s)·vᵀ` of an `r×c` matrix with `r >= c` by one-sided
/// Jacobi rotations. Singular values are sorted descending; `v` is `c×c`
/// orthogonal. Columns of `u` belonging to negligible singular values are
/// replaced by an orthonormal completion.
fn jacobi_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (rows, cols) = a.shape();
    debug_assert!(rows >= cols);
    let mut work = a.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    const MAX_SWEEPS: usize = 80;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let alpha = work.column(i).norm_squared();
                let beta = work.column(j).norm_squared();
                let gamma = work.column(i).dot(&work.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut work, i, j, c, s);
                rotate_columns(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = work.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let scale = norms.iter().cloned().fold(0.0, f64::max).max(1.0);
    let mut u_cols: Vec<HVector> = Vec::with_capacity(cols);
    let mut sigma = Vec::with_capacity(cols);
    let mut v_sorted = DMatrix::zeros(cols, cols);
    for (dst, &src) in order.iter().enumerate() {
        sigma.push(norms[src]);
        v_sorted.set_column(dst, &v.column(src));
        if norms[src] > 1e-13 * scale {
            u_cols.push(work.column(src) / norms[src]);
        }
    }
    // Re-orthonormalize the kept columns and complete the rest.
    let mut u = Vec::with_capacity(cols);
    for c in &u_cols {
        match orthogonalize_against(c, &u) {
            Some(q) => u.push(q),
            None => break,
        }
    }
    let mut i = 0;
    while u.len() < cols && i < rows {
        if let Some(q) = orthogonalize_against(&unit(rows, i), &u) {
            u.push(q);
        }
        i += 1;
    }
    Ok((matrix_from_columns(rows, &u), sigma, v_sorted))
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = c * a - s * b;
        m[(r, j)] = s * a + c * b;
    }
}

/// Extends orthonormal columns in `R^d` to a `d×d` orthogonal matrix, filling
/// with canonical vectors in order.
fn complete_orthonormal(thin: &DMatrix<f64>) -> DMatrix<f64> {
    let d = thin.nrows();
    let mut cols: Vec<HVector> = Vec::with_capacity(d);
    for c in thin.column_iter() {
        let c = c.into_owned();
        cols.push(orthogonalize_against(&c, &cols).unwrap_or(c));
    }
    let mut i = 0;
    while cols.len() < d && i < d {
        if let Some(c) = orthogonalize_against(&unit(d, i), &cols) {
            cols.push(c);
        }
        i += 1;
    }
    matrix_from_columns(d, &cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{orthonormality_defect, orthonormalize};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_subspace(rng: &mut ChaCha8Rng, big_n: usize, d: usize) -> Subspace {
        let vs: Vec<HVector> = (0..d)
            .map(|_| HVector::from_fn(big_n, |_, _| StandardNormal.sample(rng)))
            .collect();
        orthonormalize(&vs, big_n)
    }

    fn e(n: usize, i: usize) -> HVector {
        unit(n, i)
    }

    fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
        if m.ncols() == 0 {
            return 0;
        }
        m.clone().svd(false, false).singular_values.iter().filter(|&&s| s > tol).count()
    }

    fn check_invariants(b: &SuitableBases) {
        let (m, n) = (b.m(), b.n());
        let cross = b.w_star.tr_mul(&b.v_star);
        for i in 0..m {
            for j in 0..n {
                let target = if i == j { b.sigma[j] } else { 0.0 };
                assert!((cross[(i, j)] - target).abs() <= 1e-8, "({i},{j})");
            }
        }
        for w in b.sigma.windows(2) {
            assert!(w[0] + 1e-10 >= w[1]);
        }
        assert!(b.sigma.iter().all(|&s| (0.0..=1.0).contains(&s)));
        for j in 0..b.p {
            assert!((b.w_star.column(j) - b.v_star.column(j)).norm() <= 1e-6);
        }
        let full = b.four_block_basis().unwrap();
        assert_eq!(full.ncols(), b.ambient());
        assert!(orthonormality_defect(&full) <= 1e-10);
    }

    #[test]
    fn identical_subspaces() {
        let s = Subspace::coordinate(4, &[0, 1]).unwrap();
        let b = compute_suitable_bases(&s, &s, BasisTolerances::default()).unwrap();
        assert_eq!((b.p, b.q), (2, 2));
        assert!(b.sigma.iter().all(|&x| (x - 1.0).abs() < 1e-14));
        assert_eq!(b.w_tilde.ncols(), 0);
        check_invariants(&b);
    }

    #[test]
    fn orthogonal_subspaces() {
        let v = Subspace::coordinate(3, &[0]).unwrap();
        let w = Subspace::coordinate(3, &[1]).unwrap();
        let b = compute_suitable_bases(&v, &w, BasisTolerances::default()).unwrap();
        assert_eq!(b.sigma, vec![0.0]);
        assert_eq!((b.p, b.q), (0, 0));
        check_invariants(&b);
    }

    #[test]
    fn half_angle_pair() {
        let v = Subspace::coordinate(3, &[1]).unwrap();
        let w = orthonormalize(&[e(3, 0) + e(3, 1)], 3);
        let b = compute_suitable_bases(&v, &w, BasisTolerances::default()).unwrap();
        assert!((b.sigma[0] - 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!((b.p, b.q), (0, 1));
        let expected = (e(3, 1) - e(3, 0)) / 2f64.sqrt();
        let got: HVector = b.w_tilde.column(0).into_owned();
        assert!((&got - &expected).norm() < 1e-12 || (&got + &expected).norm() < 1e-12);
        check_invariants(&b);
    }

    #[test]
    fn infeasible_geometry_is_reported() {
        let v = Subspace::coordinate(3, &[0, 1]).unwrap();
        let w = Subspace::coordinate(3, &[0, 2]).unwrap();
        // Fine: V + W = R^3 with p = 1.
        assert!(compute_suitable_bases(&v, &w, BasisTolerances::default()).is_ok());
        // Forcing p = 0 makes m + n - p = 4 > 3.
        let tol = BasisTolerances { one: 0.0, zero: 1e-10 };
        let v2 = orthonormalize(&[e(3, 0) * 0.6 + e(3, 1) * 0.8, e(3, 2)], 3);
        let w2 = orthonormalize(&[e(3, 0), e(3, 1) * 0.3 + e(3, 2)], 3);
        let err = compute_suitable_bases(&v2, &w2, tol);
        if let Ok(b) = &err {
            assert!(b.m() + b.n() - b.p <= 3);
        } else {
            assert!(matches!(err, Err(Error::InfeasibleGeometry { .. })));
        }
    }

    #[test]
    fn random_pair_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = random_subspace(&mut rng, 20, 4);
        let w = random_subspace(&mut rng, 20, 6);
        let b = compute_suitable_bases(&v, &w, BasisTolerances::default()).unwrap();
        check_invariants(&b);
        // Gram matrix recomputed from the outputs.
        let g = w.basis().tr_mul(v.basis());
        let rebuilt = &b.x.transpose() * g * &b.z;
        for i in 0..6 {
            for j in 0..4 {
                let t = if i == j { b.sigma[j] } else { 0.0 };
                assert!((rebuilt[(i, j)] - t).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decompose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = random_subspace(&mut rng, 20, 4);
        let w = random_subspace(&mut rng, 20, 6);
        let b = compute_suitable_bases(&v, &w, BasisTolerances::default()).unwrap();
        let d = decompose(&b.w_star.column(0).into_owned(), &b).unwrap();
        assert!((d.a[0] - 1.0).abs() < 1e-12);
        assert!(d.a.rows(1, 5).amax() < 1e-12 && d.b.amax() < 1e-12 && d.c.amax() < 1e-12);
        let d = decompose(&b.w_tilde.column(0).into_owned(), &b).unwrap();
        assert!((d.b[0] - 1.0).abs() < 1e-12);
        assert!(d.a.amax() < 1e-12 && d.c.amax() < 1e-12);
        let h = HVector::from_fn(20, |_, _| StandardNormal.sample(&mut rng));
        let rec = decompose(&h, &b).unwrap().reconstruct(&b).unwrap();
        assert!((rec - &h).norm() <= 1e-8 * (1.0 + h.norm()));
    }

    #[test]
    fn decompose_requires_complement() {
        let v = Subspace::coordinate(3, &[0]).unwrap();
        let b = SuitableBases::without_complement(&v, &v, BasisTolerances::default()).unwrap();
        assert!(decompose(&e(3, 0), &b).is_err());
        assert!(decompose(&e(3, 0), &b.with_complement()).is_ok());
    }

    /// Builds a pair with prescribed dimensions of `V ∩ W` and `V ∩ W⊥`.
    fn structured_pair(seed: u64, shared: usize, hidden: usize, generic: usize) -> (Subspace, Subspace) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let big_n = 30;
        let q = random_subspace(&mut rng, big_n, shared + hidden + 3 * generic + 2);
        let col = |i: usize| q.basis().column(i).into_owned();
        let mut vs = Vec::new();
        let mut ws = Vec::new();
        for i in 0..shared {
            vs.push(col(i));
            ws.push(col(i));
        }
        for i in 0..hidden {
            vs.push(col(shared + i));
        }
        let base = shared + hidden;
        for g in 0..generic {
            let t: f64 = 0.2 + 0.5 * (g as f64) / (generic.max(1) as f64);
            ws.push(col(base + 2 * g));
            vs.push(col(base + 2 * g) * t.cos() + col(base + 2 * g + 1) * t.sin());
        }
        ws.push(col(base + 2 * generic));
        (orthonormalize(&vs, big_n), orthonormalize(&ws, big_n))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn counts_match_brute_force(
            seed in 0u64..1000,
            shared in 0usize..3,
            hidden in 0usize..3,
            generic in 0usize..3,
        ) {
            prop_assume!(shared + hidden + generic >= 1);
            let (v, w) = structured_pair(seed, shared, hidden, generic);
            let b = compute_suitable_bases(&v, &w, BasisTolerances::default()).unwrap();
            check_invariants(&b);
            // dim(V ∩ W) = n + m - rank[V W].
            let mut vw = DMatrix::zeros(v.ambient(), v.dim() + w.dim());
            vw.columns_mut(0, v.dim()).copy_from(v.basis());
            vw.columns_mut(v.dim(), w.dim()).copy_from(w.basis());
            let inter = v.dim() + w.dim() - numerical_rank(&vw, 1e-8);
            prop_assert_eq!(inter, b.p);
            prop_assert_eq!(b.p, shared);
            // dim(V ∩ W⊥) = n - rank(WᵀV).
            let g = w.basis().tr_mul(v.basis());
            prop_assert_eq!(v.dim() - numerical_rank(&g, 1e-8), v.dim() - b.q);
        }

        #[test]
        fn projection_case_tables(seed in 0u64..1000, n in 1usize..6, m in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let big_n = 16;
            let (v, w) = if seed % 3 == 0 {
                structured_pair(seed, 1, 1, 1)
            } else {
                (random_subspace(&mut rng, big_n, n), random_subspace(&mut rng, big_n, m))
            };
            let b = compute_suitable_bases(&v, &w, BasisTolerances::default()).unwrap();
            for j in 0..b.n() {
                let vj: HVector = b.v_star.column(j).into_owned();
                let wperp = w.residual(&vj).unwrap();
                let expected = if j < b.p {
                    HVector::zeros(vj.len())
                } else if j < b.q {
                    &vj - b.w_star.column(j) * b.sigma[j]
                } else {
                    vj.clone()
                };
                prop_assert!((wperp - expected).norm() <= 1e-8);
            }
            for j in 0..b.m() {
                let wj: HVector = b.w_star.column(j).into_owned();
                let vperp = v.residual(&wj).unwrap();
                let expected = if j < b.p {
                    HVector::zeros(wj.len())
                } else if j < b.q {
                    &wj - b.v_star.column(j) * b.sigma[j]
                } else {
                    wj.clone()
                };
                prop_assert!((vperp - expected).norm() <= 1e-8);
            }
            for j in b.p..b.q {
                let s = b.sigma[j];
                let formula = (b.v_star.column(j) - b.w_star.column(j) * s) / (1.0 - s * s).sqrt();
                prop_assert!((b.w_tilde.column(j - b.p) - formula).norm() <= 1e-8);
            }
        }
    }
}
