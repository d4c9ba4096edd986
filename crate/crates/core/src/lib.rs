//! Steady-state analysis of foreground-background (FB) queues with two-phase
//! Coxian service.
//!
//! Phase-1 work is served in a foreground queue; jobs that need a second phase
//! move to a background queue that is served only when capacity is left over.
//! The crate covers a speed-modulated single server and a pool of servers
//! switched off below a job-count threshold, with exact transform solutions,
//! a truncated-chain oracle, a discrete-event simulator, FCFS/LAS baselines
//! and the cost sweeps built on them.

pub mod baselines;
pub mod ctmc;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod multi;
pub mod quad;
pub mod series;
pub mod sim;
pub mod single;

pub use error::{Error, Result};
pub use model::{CostCoefficients, CoxianService, MultiServerModel, SingleServerModel, SpeedProfile};
