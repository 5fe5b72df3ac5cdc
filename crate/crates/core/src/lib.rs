//! Experience-replay laboratory: replay buffers, prioritized sampling, n-step
//! targets, small value learners, toy environments and the studies that
//! measure how replay capacity and replay ratio interact.

pub mod config;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod learner;
pub mod nstep;
pub mod optim;
pub mod replay;
pub mod report;
pub mod sampler;
pub mod schedule;

pub use error::{Error, Result};
