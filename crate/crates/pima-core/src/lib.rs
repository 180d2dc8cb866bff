//! Simulation and analysis toolkit for PIMA (partial-information multiple
//! access), a semi-grant-free uplink protocol in which a base station first
//! estimates *how many* users are active from a short pilot burst and then
//! sizes a contention data sub-frame accordingly.
//!
//! The crate provides:
//!
//! - [`traffic`]: Poisson packet generation and bounded per-user FIFO buffers
//!   with drop-oldest eviction.
//! - [`estimator`]: the received-power model for the pilot (PIA) sub-frame,
//!   decision regions for the activity-count estimate, and the analytic
//!   misclassification probabilities used to size the pilot length.
//! - [`scheduler`]: combinatorial success probabilities for randomly assigned
//!   data slots, the frame-efficiency objective, and the optimal data
//!   sub-frame length per estimated activity count.
//! - [`protocol`]: slot-accurate engines for PIMA, TDMA, and pseudo-Bayesian
//!   stabilized slotted ALOHA, all sharing the same traffic and metric
//!   plumbing.
//! - [`harness`]: reproducible single runs and multi-seed parameter sweeps
//!   with CSV output.
//!
//! All stochastic components draw from named, seedable generators
//! (ChaCha8) so that any reported row can be regenerated bit-for-bit from
//! its configuration and seed.

pub mod estimator;
pub mod harness;
pub mod metrics;
pub mod protocol;
pub mod scheduler;
pub mod stats;
pub mod traffic;

use thiserror::Error;

/// Errors reported by configuration validation and the analytic routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field has an invalid value. `field` names the field
    /// as it appears in config files and CLI flags.
    #[error("invalid configuration: {field}: {message}")]
    Config {
        /// Name of the offending field.
        field: &'static str,
        /// Human-readable description of the violation.
        message: String,
    },

    /// The activity prior is too degenerate for a maximum-a-posteriori
    /// boundary to exist between two adjacent counts.
    #[error(
        "no decision boundary between activity counts {lower} and {upper}: \
         the prior is too degenerate for the regions to remain intervals"
    )]
    DegeneratePrior {
        /// Lower of the two adjacent activity counts.
        lower: usize,
        /// Upper of the two adjacent activity counts.
        upper: usize,
    },

    /// A set of decision boundaries is not strictly increasing / finite.
    #[error("invalid decision regions: {0}")]
    InvalidRegions(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
