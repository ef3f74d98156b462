//! Reference solutions and error metrics used to validate the ensemble
//! methods: exact linear-Gaussian moments, the conditional-Gaussian dyad
//! filter/smoother, and a particle forward-filter/backward-smoother.

pub mod cgns;
pub mod linear;
pub mod metrics;
pub mod particle;

use crate::ensemble::MomentSeries;

pub use cgns::cgns_dyad_moments;
pub use linear::{kalman_bucy_moments, rts_moments, LinearModel};
pub use metrics::rmse;
pub use particle::{particle_ffbs, ParticleOptions};

/// Filter and smoother moments from one oracle.
#[derive(Debug, Clone)]
pub struct OracleMoments {
    pub filter: MomentSeries,
    pub smoother: MomentSeries,
}
