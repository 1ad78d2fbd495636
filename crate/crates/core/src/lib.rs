//! Two-stage adaptive seeding over independently realized neighbors.
//!
//! A seeder picks first-stage nodes whose neighbors then realize
//! independently; the leftover budget seeds realized neighbors to maximize a
//! monotone submodular value function. This crate provides:
//!
//! * instance and policy types with JSON formats ([`instance`], [`policy`]);
//! * value-oracle families and sanity checks ([`functions`]);
//! * exact and Monte Carlo policy evaluation ([`eval`]);
//! * a block-greedy solver for non-adaptive policies, with a randomized
//!   rounding step that converts them into adaptive executors
//!   ([`nonadaptive`]);
//! * a concave relaxation with pipage rounding for stochastic selection
//!   under small probabilities ([`sosp`]);
//! * a locally adaptive block greedy and policy conversions
//!   ([`locallyadaptive`]);
//! * exact brute-force optima for desk-scale instances ([`oracle`]);
//! * instance generators and closed-form gap references ([`harness`]).

pub mod error;
pub mod eval;
pub mod functions;
pub mod harness;
pub mod instance;
pub mod locallyadaptive;
pub mod nonadaptive;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod sosp;
pub mod trace;

pub use error::{Error, Result};

/// Enumeration and search limits. Exceeding a cap is an error that reports
/// the required count, never a silent truncation.
#[derive(Debug, Clone)]
pub struct Caps {
    /// Max ground size for exhaustive realization enumeration.
    pub enum_limit: u64,
    /// Max candidate subsets in block searches and brute-force scans.
    pub subset_cap: u64,
    /// Per-realization second-stage optimization switches from exact
    /// enumeration to greedy above this combination count.
    pub exact_opt_cap: u64,
    /// Brute-force oracle limit on first-stage nodes.
    pub oracle_x_limit: u64,
    /// Brute-force oracle limit on the neighbor ground set.
    pub oracle_ground_limit: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            enum_limit: 20,
            subset_cap: 1_000_000,
            exact_opt_cap: 10_000,
            oracle_x_limit: 8,
            oracle_ground_limit: 14,
        }
    }
}
