//! Desk-scale simulation of quantum walk search with coin-dependent data, nested
//! updates, and an end-to-end 3-Distinctness model with cost ledgers.

pub mod combin;
pub mod cost_model;
pub mod hash_family;
pub mod history_set;
pub mod ledger;
pub mod markov;
pub mod nested;
pub mod par;
pub mod three_distinctness;
pub mod verify;
pub mod walk;

pub use ledger::CostLedger;
pub use markov::MarkovChain;
