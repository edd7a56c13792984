//! A chain-agnostic block-header relay with optimistic acceptance,
//! validation-on-demand disputes, and branch-aware transaction inclusion
//! proofs, plus the simulation and cost-measurement tooling around it.

pub mod chain;
pub mod cost;
pub mod dataset;
pub mod incentives;
pub mod relay;
pub mod sim;
