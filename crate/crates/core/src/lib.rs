pub mod cli;
pub mod constants;
pub mod disk;
pub mod energy;
pub mod error;
pub mod mesh;
pub mod moser;
pub mod quadrature;
pub mod radial;
pub mod report;
pub(crate) mod sparse;
pub mod torsion;
pub mod trace;

pub use error::{Error, Result};
