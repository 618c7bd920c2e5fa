//! Reaction-time analysis for sprint starts. Championships are compared
//! with a clustered rank-sum test, and false-start barriers come from Monte
//! Carlo tails of a generalized Gamma mixed-effects model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clusrank;
pub mod data;
pub mod diagnostics;
pub mod gengamma;
pub mod remixfit;
pub mod rng;
pub mod special;
pub mod tailsim;

pub use clusrank::{asymptotic_test, permutation_test, statistic_s, ClusRankError, ClusRankResult};
pub use data::{
    build_clustered_sample, build_model_dataset, load_csv, load_exclusions, read_csv, Cluster, ClusteredSample,
    Comparison, Competition, DataError, Event, Exclusion, Gender, GenderFilter, Group, ModelDataset, ModelFilter,
    RTRecord, Round,
};
pub use gengamma::{DistError, GGParams};
pub use remixfit::{
    fit, quantile_residuals, simulate_conditional, simulate_dataset, simulate_marginal, FitConfig, FitError,
    MixedGGModel, PopulationParams, ResidualSet,
};
pub use tailsim::{invert_barrier, tail_probabilities, tail_report, TailError, TailReport};
