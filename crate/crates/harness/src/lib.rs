//! Experiment harness for the VAC agents: config ingestion, (agent, seed)
//! sweeps, CSV/SVG output and the verification gate. The `vacbench`
//! binary is a thin CLI over this library.

pub mod config;
pub mod experiment;
pub mod output;

/// Exit status of a config or argument error.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status when an agent run failed; partial outputs are kept.
pub const EXIT_RUNTIME: u8 = 3;

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| e.to_string())?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, String> {
    Ok(f())
}
