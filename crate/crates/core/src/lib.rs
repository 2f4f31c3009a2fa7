//! Numerical laboratory for the skew product f_N coupling the Chirikov
//! standard map with a hyperbolic toral automorphism.

pub mod bundles;
pub mod cli;
pub mod dd;
pub mod error;
pub mod io;
pub mod maps;
pub mod seed;
pub mod spectrum;
pub mod torus;
pub mod ucurves;
pub mod verification;

pub use error::{Error, Result};
pub use maps::{HyperbolicMatrix, MapModel, MapSpec};
pub use torus::{Angle, TorusPoint};
