pub mod chsh;
pub mod contextual;
pub mod error;
pub mod harness;
pub mod lrhv;
pub mod purity;
pub mod quantum;
pub mod report;
pub mod rng;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
