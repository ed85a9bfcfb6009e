//! Pairwise opinion dynamics on the unit sphere.
//!
//! Agents hold unit vectors in `R^d`. At each step an ordered pair `(i, j)` is
//! drawn and agent `i` moves towards (or away from) agent `j` according to an
//! update function of their correlation. The crate provides the update rules
//! ([`update`]), the random process ([`dynamics`]), predicates on
//! configurations ([`analysis`]), explicit steering scripts ([`sequences`]),
//! and a seeded, parallel Monte Carlo harness ([`experiment`]).

pub mod analysis;
pub mod configuration;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod rng;
pub mod sequences;
pub mod update;

pub use analysis::{
    cluster_partition, epsilon_activity, polarization_check, potential_min_corr,
    potential_triangle, separability, strict_convexity, ActivityVerdict, ClusterPartition,
    ConvexityVerdict, PolarizationVerdict, SeparabilityVerdict, SignAssignment,
};
pub use configuration::{Configuration, ConfigurationSnapshot, CorrelationMatrix};
pub use dynamics::{
    apply_sequence, run, step, InterventionDistribution, MetricRecord, RunSummary, RunTrace,
    SimulationParams, StopReason, StopRule,
};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, ExperimentReport, ExperimentSpec, InitSpec,
};
pub use geometry::Opinion;
pub use sequences::{CounterexampleSpec, InterventionScript, Postcondition};
pub use update::{
    apply_update, classify, contraction_constant, evaluate, predicted_correlation, slerp_update,
    FunctionClassification, UpdateFunctionSpec,
};
