pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod functional;
pub mod model;
pub mod params;
pub mod pde;
pub mod rk45;
pub mod safno;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
