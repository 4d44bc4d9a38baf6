//! Symmetric banded matrices and their Cholesky factors.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};

/// Symmetric matrix storing only the lower band `j ∈ [i - bw, i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        (i - j <= self.bw && i < self.n).then(|| i * (self.bw + 1) + (j + self.bw - i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` to entry `(i, j)` (and by symmetry `(j, i)`).
    ///
    /// Panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.slot(i, j).expect("entry outside band");
        self.data[k] += v;
    }

    /// `self += c * other`; both must share the shape.
    pub fn axpy(&mut self, c: f64, other: &BandMatrix) {
        assert_eq!((self.n, self.bw), (other.n, other.bw));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn max_abs_diff(&self, other: &BandMatrix) -> f64 {
        assert_eq!((self.n, self.bw), (other.n, other.bw));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[i * (self.bw + 1) + (j + self.bw - i)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[i * (self.bw + 1) + self.bw] * x[i];
        }
        Ok(y)
    }

    /// Lower Cholesky factor; fails if the matrix is not positive definite.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.data.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[i * w + (j + bw - i)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Numerical(format!(
                            "matrix not positive definite at pivot {i}"
                        )));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, data: l })
    }
}

/// Lower-triangular banded factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.n
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// `L x`.
    pub fn l_mul(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        Ok(DVector::from_fn(self.n, |i, _| {
            (i.saturating_sub(self.bw)..=i).map(|j| self.at(i, j) * x[j]).sum()
        }))
    }

    /// `Lᵀ x`.
    pub fn lt_mul(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                y[j] += self.at(i, j) * x[i];
            }
        }
        Ok(y)
    }

    /// `L⁻¹ b` by forward substitution.
    pub fn l_solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, b.len())?;
        let mut y = b.clone();
        for i in 0..self.n {
            let mut s = y[i];
            for j in i.saturating_sub(self.bw)..i {
                s -= self.at(i, j) * y[j];
            }
            y[i] = s / self.at(i, i);
        }
        Ok(y)
    }

    /// `L⁻ᵀ b` by back substitution.
    pub fn lt_solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, b.len())?;
        let mut x = b.clone();
        for i in (0..self.n).rev() {
            x[i] /= self.at(i, i);
            let xi = x[i];
            for j in i.saturating_sub(self.bw)..i {
                x[j] -= self.at(i, j) * xi;
            }
        }
        Ok(x)
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.lt_solve(&self.l_solve(b)?)
    }
}
