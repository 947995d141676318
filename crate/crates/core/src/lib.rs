//! Example-ordering algorithms for permutation-based SGD.
//!
//! The crate is organised bottom-up:
//!
//! * [`vector`] and [`objective`]: dense vectors, permutations, centering and
//!   the herding objective every ordering is measured against.
//! * [`balancing`]: online sign assignment (naive and self-balancing walk).
//! * [`ordering`]: greedy herding, reorder-from-signs and offline herding.
//! * [`problems`]: synthetic finite-sum objectives with exact gradients.
//! * [`trainer`]: permutation SGD with RR, SO, FlipFlop, greedy, offline
//!   herding, GraB and the fixed-order variants.
//! * [`io`]: vector-set and permutation files.

pub mod balancing;
pub mod error;
pub mod io;
pub mod objective;
pub mod ordering;
pub mod problems;
pub mod rng;
pub mod trainer;
pub mod vector;

pub use balancing::{
    naive_sign, sign_sequence, walk_probability, walk_sign, walk_threshold, BalancerConfig, BalancerKind,
    BalancerState, FailurePolicy, Signing, WalkFailure,
};
pub use error::{Error, Result};
pub use objective::{center, herding_objective, prefix_norms, prefix_sums};
pub use ordering::{
    adversarial_set, greedy_order, offline_herd, offline_herd_from, reorder_from_signs, GreedyOptions,
    HerdOutcome, HerdRound,
};
pub use problems::{MlpShape, Problem, ProblemKind};
pub use trainer::{
    initial_order, retrain_fixed, train, train_with_validation, EpochRecord, GrabState, OrderScheduler,
    OrderingFootprint, Strategy, TrainConfig, TrainTrace,
};
pub use vector::{DenseVector, Norm, Permutation, Sign, SignSequence, VectorSet};
