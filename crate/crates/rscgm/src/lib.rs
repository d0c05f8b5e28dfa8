//! Graph-smoothed collaborative filtering.
//!
//! The crate factorizes a rating matrix under Gaussian priors while pulling
//! predicted ratings of well-connected users (and items) together, with the
//! pull strength decaying in the graph distance between the rater and the
//! rated item. It also ships the usual comparison points (plain weighted
//! factorization, Laplacian factor regularization, item-based neighbors,
//! harmonic label propagation) and a cross-validated evaluation harness.
//!
//! Start with the `examples/` directory; each example exercises one
//! capability end to end on synthetic data.

pub mod affinity;
pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod smoothness;

pub use affinity::{
    build_affinity_graph, build_pairwise_graph, AffinityGraph, Entity, GraphSource,
    PairwiseCombiner, PairwiseGraph,
};
pub use dataset::{
    kfold, load_ratings, load_social, load_tags, sample_ratings, sample_users, FoldSplit, IdMap,
    Rating, RatingDataset, RatingFormat, RatingMode, SocialEdges, TagAssignments,
};
pub use error::{Error, Result};
pub use model::{
    init_model, objective, objective_pairwise, recommend_top_m, train, train_pairwise,
    train_with_index, update_item_factor, update_user_factor, FactorModel, Hyperparameters,
    TrainReport,
};
pub use smoothness::{
    build_smoothness_index, confidence, energy_joint, energy_pairwise, label_distances,
    propagation_depth, DistanceTable, SmoothnessIndex,
};
