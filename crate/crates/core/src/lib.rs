//! Auditing and repairing age-discriminatory callback labels in resume
//! audit data.
//!
//! The pipeline: load or synthesize applicant records ([`data`]), estimate
//! each record's effect of being Young with a virtual-twins forest
//! ([`causal`], [`forest`]), flip the labels most affected ([`repair`]),
//! train forest or MLP classifiers ([`neural`]) and score them by AUC and
//! false-positive-rate difference under a callback budget ([`metrics`]).
//! [`harness`] runs the cross-validated comparisons.

pub mod causal;
pub mod data;
pub mod forest;
pub mod harness;
pub mod metrics;
pub mod neural;
pub mod repair;
pub mod rng;
