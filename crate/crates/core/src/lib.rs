//! Numerical laboratory for Rauzy-Veech renormalization of interval
//! exchange transformations: balanced accelerations, Kontsevich-Zorich
//! spectrum estimation, cocycles with logarithmic singularities, the
//! correction operator, and Birkhoff sum/ergodicity diagnostics.

pub mod accel;
pub mod cocycle;
pub mod correction;
pub mod dynamics;
pub mod error;
pub mod iet;
pub mod linalg;
pub mod num;
pub mod rauzy;
pub mod singularity;
pub mod spectrum;

pub use error::{Error, Result};
