//! Source-chain generation, ground-truth annotations, and the adversarial
//! scenario engine.

mod generate;
mod scenario;

pub use generate::{
    generate_chain, mint_child, ChainAnnotations, ChainGenConfig, ChainRecord, GeneratedChain,
    HeaderAnnotation,
};
pub use scenario::{
    run_scenario, Attack, BehaviorClass, LogEvent, Role, Scenario, ScenarioClient, ScenarioOutcome,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    BadScenario(String),
    #[error("invalid generator config: {0}")]
    BadConfig(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("relay error: {0}")]
    Relay(#[from] crate::relay::RelayError),
}
