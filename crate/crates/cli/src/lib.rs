//! Evaluation harness for Mondrian forests: the streaming accuracy protocol,
//! CSV and plot-data output, synthetic data, and statistical self-checks.

pub mod checks;
pub mod protocol;
pub mod record;
pub mod synth;
