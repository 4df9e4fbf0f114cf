//! End-to-end 3-Distinctness: padding reduction, hashed tripartition, setup, the nested
//! walk over collision pairs with an Element Distinctness inner walk, and the solver.
//!
//! Positions are 0-based internally; triples reported to callers are 1-based.

pub mod family;
pub mod instance;
pub mod partition;
pub mod solve;

pub use family::{
    count_inner_marked, count_inner_marked_brute, swap_batch, ConcreteFamily, Degenerate, GarbagePerturbation, OuterWalk, Parameters,
    ThreeDistinctOps,
};
pub use instance::{generate, is_triple, oracle_solve, preprocess, GeneratorSpec, Instance, InstanceError, Preprocessed};
pub use partition::{cross_pairs, sample_tripartition, setup_state, tripartition_from_hash, CollisionPairs, SetupError, SetupOutcome, Tripartition};
pub use solve::{abstract_inner_bounds, desk_parameters, solve, PartitionRecord, SolveConfig, SolveError, SolveReport};
