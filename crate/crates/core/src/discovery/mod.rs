//! Causality-based discovery of partially observed polynomial dynamics.

pub mod causation;
pub mod estimate;
pub mod learn;
pub mod library;
pub mod model;

pub use causation::{causation_entropy, identify_structure, CausationEntropy, IndicatorMatrix, RegressionData};
pub use estimate::{estimate_params, LinearConstraint, ParamEstimate};
pub use learn::{complete, learn, sample_hidden, IterationRecord, LearnOptions, LearnState, SampleSource};
pub use library::{CandidateLibrary, Monomial};
pub use model::{PolynomialDynamics, PolynomialModel};
