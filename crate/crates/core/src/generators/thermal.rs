//! Thermal-block problem on the unit square, discretized with bilinear (Q1)
//! elements on a uniform grid.
//!
//! Boundaries: flux `c` on the bottom edge, insulated left and right edges,
//! zero temperature on the top edge. The conductivity is constant on each
//! quadrant, numbered in reading order (top-left, top-right, bottom-left,
//! bottom-right).
//!
//! Vectors returned to callers are in the orthonormal representation
//! `y = Lᵀ h`, where `M = L Lᵀ` is the L² mass matrix and `h` holds nodal values.
//! Euclidean products of such vectors equal L² products of the fields.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::banded::{BandCholesky, BandMatrix};
use crate::error::{check_dim, contract, Result};
use crate::geometry::HVector;

const LOCAL_STIFFNESS: [[f64; 4]; 4] = [
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
];

const LOCAL_MASS: [[f64; 4]; 4] = [
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
];

pub type Theta = [f64; 4];

#[derive(Debug, Clone)]
pub struct ThermalBlockModel {
    cells: usize,
    flux: f64,
    /// `A(θ) = Σ θ_i stiffness[i]`.
    stiffness: [BandMatrix; 4],
    /// Bottom-edge load for unit flux and unit conductivity, split by subdomain.
    edge_loads: [DVector<f64>; 4],
    mass_factor: BandCholesky,
}

/// Grid size and bottom-edge flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    pub cells: usize,
    pub flux: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            cells: 24,
            flux: 1.0,
        }
    }
}

impl ThermalBlockModel {
    /// Assembles the model on a `cells × cells` grid.
    pub fn new(cells: usize, flux: f64) -> Result<Self> {
        contract(cells >= 2, || format!("need at least 2 cells per side, got {cells}"))?;
        contract(flux.is_finite(), || "flux must be finite".into())?;
        let n = cells;
        let dim = n * (n + 1);
        let bw = n + 2;
        let h = 1.0 / n as f64;
        let mut stiffness = std::array::from_fn(|_| BandMatrix::zeros(dim, bw));
        let mut mass = BandMatrix::zeros(dim, bw);
        let mut edge_loads: [DVector<f64>; 4] = std::array::from_fn(|_| DVector::zeros(dim));
        for iy in 0..n {
            for ix in 0..n {
                let sub = subdomain(ix, iy, n);
                let nodes = element_nodes(ix, iy, n);
                for a in 0..4 {
                    let Some(ga) = nodes[a] else { continue };
                    for b in 0..=a {
                        let Some(gb) = nodes[b] else { continue };
                        stiffness[sub].add(ga, gb, LOCAL_STIFFNESS[a][b] / 6.0);
                        mass.add(ga, gb, LOCAL_MASS[a][b] * h * h / 36.0);
                    }
                }
                if iy == 0 {
                    // Edge nodes (ix, 0) and (ix + 1, 0) each get h/2.
                    edge_loads[sub][ix] += h / 2.0;
                    edge_loads[sub][ix + 1] += h / 2.0;
                }
            }
        }
        let mass_factor = mass.cholesky()?;
        Ok(ThermalBlockModel {
            cells,
            flux,
            stiffness,
            edge_loads,
            mass_factor,
        })
    }

    pub fn from_config(cfg: &ThermalConfig) -> Result<Self> {
        Self::new(cfg.cells, cfg.flux)
    }

    /// Same discretization with a different bottom-edge flux.
    pub fn with_flux(&self, flux: f64) -> Self {
        ThermalBlockModel {
            flux,
            ..self.clone()
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn flux(&self) -> f64 {
        self.flux
    }

    /// Number of unknowns after removing the Dirichlet edge.
    pub fn dim(&self) -> usize {
        self.cells * (self.cells + 1)
    }

    pub fn stiffness_component(&self, i: usize) -> &BandMatrix {
        &self.stiffness[i]
    }

    /// `A(θ) = Σ θ_i A_i`.
    pub fn operator(&self, theta: &Theta) -> Result<BandMatrix> {
        check_theta(theta)?;
        let mut a = BandMatrix::zeros(self.dim(), self.cells + 2);
        for (t, s) in theta.iter().zip(&self.stiffness) {
            a.axpy(*t, s);
        }
        Ok(a)
    }

    /// Assembles `A(θ)` element by element with the conductivity evaluated
    /// per cell. Agrees with [`ThermalBlockModel::operator`].
    pub fn assemble_direct(&self, theta: &Theta) -> Result<BandMatrix> {
        check_theta(theta)?;
        let n = self.cells;
        let mut a = BandMatrix::zeros(self.dim(), n + 2);
        for iy in 0..n {
            for ix in 0..n {
                let k = theta[subdomain(ix, iy, n)];
                let nodes = element_nodes(ix, iy, n);
                for p in 0..4 {
                    let Some(gp) = nodes[p] else { continue };
                    for q in 0..=p {
                        let Some(gq) = nodes[q] else { continue };
                        a.add(gp, gq, k * LOCAL_STIFFNESS[p][q] / 6.0);
                    }
                }
            }
        }
        Ok(a)
    }

    /// Nodal load from the bottom-edge flux, `∫ c k⁻¹ φ_j` over the edge.
    pub fn flux_load(&self, theta: &Theta) -> Result<DVector<f64>> {
        check_theta(theta)?;
        let mut b = DVector::zeros(self.dim());
        for (t, f) in theta.iter().zip(&self.edge_loads) {
            b.axpy(self.flux / t, f, 1.0);
        }
        Ok(b)
    }

    /// Nodal load `∫ s φ_j` for a source given in the orthonormal representation.
    pub fn source_load(&self, source: &HVector) -> Result<DVector<f64>> {
        self.mass_factor.l_mul(source)
    }

    /// Nodal values to the orthonormal representation.
    pub fn to_ambient(&self, nodal: &DVector<f64>) -> Result<HVector> {
        self.mass_factor.lt_mul(nodal)
    }

    pub fn to_nodal(&self, y: &HVector) -> Result<DVector<f64>> {
        self.mass_factor.lt_solve(y)
    }

    /// The operator in the orthonormal representation, `L⁻¹ A(θ) L⁻ᵀ y`.
    /// Using its output as the source reproduces `y` when the flux is zero.
    pub fn apply_operator(&self, theta: &Theta, y: &HVector) -> Result<HVector> {
        check_dim(self.dim(), y.len())?;
        let a = self.operator(theta)?;
        self.mass_factor.l_solve(&a.mul_vec(&self.to_nodal(y)?)?)
    }

    /// Nodal right-hand side `b` of `A(θ) h = b`.
    pub fn load(&self, theta: &Theta, source: Option<&HVector>) -> Result<DVector<f64>> {
        let mut b = self.flux_load(theta)?;
        if let Some(s) = source {
            check_dim(self.dim(), s.len())?;
            b += self.source_load(s)?;
        }
        Ok(b)
    }

    /// Nodal solution of `A(θ) h = b`.
    pub fn solve_nodal(&self, theta: &Theta, source: Option<&HVector>) -> Result<DVector<f64>> {
        let b = self.load(theta, source)?;
        self.operator(theta)?.cholesky()?.solve(&b)
    }
}

/// Solves the thermal block for `theta` and returns the solution in the
/// orthonormal representation. `source` is the heat source in that same
/// representation.
pub fn solve_thermal_block(
    model: &ThermalBlockModel,
    theta: &Theta,
    source: Option<&HVector>,
) -> Result<HVector> {
    model.to_ambient(&model.solve_nodal(theta, source)?)
}

fn check_theta(theta: &Theta) -> Result<()> {
    contract(theta.iter().all(|t| *t > 0.0 && t.is_finite()), || {
        format!("conductivities must be positive, got {theta:?}")
    })
}

/// Quadrant of cell `(ix, iy)` by its center, in reading order.
fn subdomain(ix: usize, iy: usize, n: usize) -> usize {
    let right = 2 * ix + 1 > n;
    let top = 2 * iy + 1 > n;
    match (top, right) {
        (true, false) => 0,
        (true, true) => 1,
        (false, false) => 2,
        (false, true) => 3,
    }
}

/// Unknown indices of the cell's corners in the order (0,0), (1,0), (1,1),
/// (0,1); `None` for nodes on the Dirichlet edge.
fn element_nodes(ix: usize, iy: usize, n: usize) -> [Option<usize>; 4] {
    let node = |x: usize, y: usize| (y < n).then_some(y * (n + 1) + x);
    [
        node(ix, iy),
        node(ix + 1, iy),
        node(ix + 1, iy + 1),
        node(ix, iy + 1),
    ]
}
