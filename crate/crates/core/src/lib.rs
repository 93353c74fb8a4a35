//! Pseudospectral solver and estimate lab for the fifth-order KP-II equation
//! `u_t + alpha u_xxx + beta u_xxxxx + u u_x + d_x^{-1} d_y^2 u = 0` (with `beta = -1`)
//! on a periodic torus.

pub mod dd;
pub mod error;
pub mod lab;
pub mod norms;
pub mod propagator;
pub mod quadrature;
pub mod runs;
pub mod scattering;
pub mod solver;
pub mod spectral;

pub use error::{Kp5Error, Result};
