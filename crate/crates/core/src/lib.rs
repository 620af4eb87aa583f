//! Cumulant generating functions and their convexity, exponential tilting,
//! discrete Legendre conjugates, and norms in Grand Lebesgue spaces `B(φ)`.
//!
//! - [`rv_models`]: centered scalar and vector sources with Kramer windows.
//! - [`cgf_engine`]: `Δ = ln G`, `Φ = Δ/λ`, tilted measures, multivariate `Q` and `V`.
//! - [`legendre`]: linear-time conjugation of tabulated convex functions.
//! - [`gls_spaces`]: generating functions, `B(φ)` norms, tail and MGF bounds,
//!   exponent duality.
//! - [`convexity_lab`]: OC / LC / LD certificates and the closed-form LC rule.
//! - [`report`] and [`cli`]: artifact formats and the `tiltbound` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgf_engine;
pub mod cli;
pub mod convexity_lab;
pub mod error;
pub mod gls_spaces;
pub mod legendre;
pub mod numeric;
pub mod report;
pub mod rv_models;

pub use error::{Error, Result};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "TILTBOUND_THREADS";

/// Sizes the global thread pool from `TILTBOUND_THREADS` when it is set.
/// Results never depend on the thread count.
pub fn configure_threads_from_env() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Parse(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invalid(e.to_string()))
}
