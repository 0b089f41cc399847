//! The joint training objective and its verification oracles.
//!
//! Per agent the objective combines three terms, all in nats:
//! - task loss: cross-entropy of the policy's action logits against the
//!   correct action derived from the task target;
//! - task relevance: mean log-likelihood of the target under the
//!   variational decoder given received payloads (a lower bound on the
//!   mutual information between received messages and the target, up to
//!   the parameter-free entropy of the target);
//! - complexity: mean KL divergence of the message law to the prior (an
//!   upper bound on the mutual information between the observation and
//!   the outgoing messages).
//!
//! total = task − λ_t · relevance + λ_c · complexity.
//!
//! [`discrete`] provides brute-force mutual-information oracles on finite
//! alphabets that verify both bounds exactly.

mod discrete;
mod loss;

pub use discrete::{
    exact_mi_discrete, optimal_prior_and_decoder, random_system, verify_bounds_discrete,
    BoundsCheck, DiscreteJoint,
};
pub use loss::{
    complexity_term, joint_loss, kl_gauss_diag, mean_messages_for, relevance_term, AgentGradients,
    BatchSample, FrozenNoise, Lambda, LossBreakdown,
};

use crate::agents::AgentError;
use crate::nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DibError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("batch must be non-empty")]
    EmptyBatch,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}
