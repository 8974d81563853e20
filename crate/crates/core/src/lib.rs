//! Time-correlated impulsive noise for wideband channels.
//!
//! The crate models impulsive noise with a partitioned Markov chain whose
//! impulsive states emit Gaussian samples arranged to trace a damped
//! oscillation. It covers the whole loop:
//!
//! * [`chain`] builds the model, analyses its sojourn behaviour and generates traces.
//! * [`detect`] separates impulses from the background of a recorded trace.
//! * [`fit`] estimates every chain parameter from a trace.
//! * [`baselines`] provides the Bernoulli-Gaussian-with-memory and Middleton Class-A models.
//! * [`metrics`] scores model traces against a measured one.
//! * [`format`] reads and writes trace and parameter files, and [`cli`] wires it all
//!   into the `impnoise` command.

pub mod baselines;
pub mod chain;
pub mod cli;
pub mod detect;
pub mod fit;
pub mod format;
pub mod metrics;
pub mod trace;

pub use trace::NoiseTrace;
