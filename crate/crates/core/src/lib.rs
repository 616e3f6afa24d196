//! Neumann Green and Robin functions of planar domains under conformal metrics.

pub mod cli;
pub mod config;
pub mod critical;
pub mod curve;
pub mod error;
pub mod expr;
pub mod fem;
pub mod fit;
pub mod green;
pub mod interaction;
pub mod geom;
pub mod mesh;
pub mod oracle;
pub mod perturb;
pub mod quadrature;
pub mod recovery;
pub mod report;
pub mod validate;

pub use curve::{BoundaryCurve, FourierMode};
pub use error::{Error, Result};
pub use mesh::{build_domain, Location, Mesh};
