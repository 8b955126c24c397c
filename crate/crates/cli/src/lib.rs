//! Experiment runner behind the `sympidx` command: typed configs, validation,
//! artifact writing and run manifests.

// `!(x > 0.0)` is the NaN-rejecting form throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;

pub use config::{validate, Command, ExperimentConfig, Params};
pub use run::{run, Outcome, RunError, Status};

/// Caps the global thread pool at `SYMPIDX_THREADS` when it is set. Returns
/// a warning for unusable values.
pub fn configure_threads() -> Option<String> {
    let raw = std::env::var("SYMPIDX_THREADS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .err()
            .map(|e| format!("SYMPIDX_THREADS ignored: {e}")),
        _ => Some(format!("SYMPIDX_THREADS ignored: expected a positive integer, got {raw:?}")),
    }
}
