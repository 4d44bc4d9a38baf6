//! Experimental worlds: the thermal-block solution manifold and the
//! synthetic misaligned manifold.

pub mod banded;
pub mod setup1;
pub mod setup2;
pub mod thermal;

pub use banded::{BandCholesky, BandMatrix};
pub use setup1::{build_setup1, prior_from_reduction, Setup1Params, Setup1World};
pub use setup2::{build_setup2, gamma_weights, uniform_ball, Setup2Params, Setup2World};
pub use thermal::{solve_thermal_block, Theta, ThermalBlockModel, ThermalConfig};
