//! Resilient consensus for sampled-data double-integrator networks.
//!
//! Normal agents run the DP-MSR filter (discard up to `f` extreme neighbour
//! positions on each side, then apply a damped consensus law) while up to `f`
//! malicious agents apply arbitrary inputs. The crate provides:
//!
//! - [`graph`]: weighted digraphs, generators and an exact `(r, s)`-robustness checker;
//! - [`dynamics`]: the agent model, the control law and the gain condition;
//! - [`msr`]: the filter and the synchronous engine;
//! - [`asyncsim`]: the partially asynchronous engine with bounded delays;
//! - [`adversary`]: malicious-agent models and attack strategies;
//! - [`metrics`]: safety intervals, consensus detection, envelopes and rates;
//! - [`trace`]: recorded runs and their CSV form;
//! - [`cli`]: scenario files, presets, reports and parameter sweeps.

pub mod adversary;
pub mod asyncsim;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod msr;
pub mod trace;

pub use adversary::{Adversary, AdversaryModel, BuiltinStrategy, ModelKind, Strategy, StrategyContext};
pub use asyncsim::{run_async, AsyncScenario, AsyncTiming, DelayRule, DelaySchedule, UpdateRule, UpdateSchedule};
pub use dynamics::{NetworkState, SimParams};
pub use error::{Error, Result};
pub use graph::{Digraph, NodeSet, WeightPolicy};
pub use msr::{run_sync, FilterDecision, Setup};
pub use trace::Trace;
