//! Spectral element collocation on composite domains built from
//! quadrilateral and annular-wedge elements.

pub mod assembly;
pub mod convolution;
pub mod ddft;
pub mod dae;
pub mod error;
pub mod geometry;
pub mod ocp;
pub mod profiles;
pub mod scenarios;
pub mod spectral;
pub mod steady;
pub mod testfns;
pub mod validation;

pub use error::{Error, Result};
