//! Learned READ/SPEAK scheduling for incremental sequence-to-sequence synthesis.
//!
//! An agent decides, one step at a time, whether to ingest another source
//! character (`READ`) or to emit another output frame (`SPEAK`) from the
//! characters read so far. The crate contains:
//!
//! - [`episode`]: actions, counters, policy paths and episode traces
//! - [`numerics`]: small dense tensors, a GRU cell, dense layers, Adam
//! - [`backend`]: the synthesis backend contract, a synthetic corpus, an
//!   analytic oracle backend and a learned toy encoder/decoder
//! - [`env`]: observations, composite latency/quality rewards, terminal rules
//! - [`agent`]: recurrent policy, baseline network and REINFORCE training
//! - [`baselines`]: wait-until-end and wait-k-steps rule-based policies
//! - [`metrics`]: latency (`d_T`) and quality measurement, trade-off tables
//! - [`cli`]: configuration, checkpoints, plots and the command surface

pub mod agent;
pub mod backend;
pub mod baselines;
pub mod cli;
pub mod env;
pub mod episode;
pub mod error;
pub mod metrics;
pub mod numerics;

pub use error::{Error, Result};
