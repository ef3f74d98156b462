pub mod aci;
pub mod discovery;
pub mod ensemble;
pub mod error;
pub mod filter;
pub mod harness;
pub mod localization;
pub mod models;
pub mod oracles;
pub mod sde;
pub mod smoother;

pub use error::{Error, Pass, Result};
