//! Desk-scale laboratory for multi-agent emergent communication in
//! cross-layer networking systems.
//!
//! Two agents — an application-layer agent watching traffic dynamics and a
//! physical-layer agent watching channel quality — jointly learn Gaussian
//! message encoders and decision policies under a single objective that
//! trades task loss against the informativeness and description length of
//! the exchanged messages. Post-hoc analysis fits a weight posterior over
//! independently seeded training runs and evaluates a Rényi-divergence
//! generalization bound against the measured train/held-out gap.
//!
//! Module map:
//! - [`env`]: synthetic traffic/channel world, datasets, trace ingestion,
//!   exact Bayes oracles.
//! - [`nn`]: minimal feed-forward networks with analytic gradients.
//! - [`agents`]: message encoders, policies, task decoders, quantization,
//!   and the binary message wire format.
//! - [`dib`]: the joint loss (task + relevance + complexity) and discrete
//!   mutual-information oracles that verify its variational bounds.
//! - [`trainer`]: joint training, the two-stage autoencoder baseline,
//!   evaluation, and metrics.
//! - [`bound`]: weight-posterior fitting, Gaussian Rényi divergence, and
//!   the generalization-bound report.

pub mod agents;
pub mod bound;
pub mod config;
pub mod dib;
pub mod env;
pub mod manifest;
pub mod nn;
pub mod rng;
mod util;
pub mod trainer;
