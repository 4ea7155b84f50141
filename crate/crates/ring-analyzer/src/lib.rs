//! Round and bit complexity of probabilistic leader election on anonymous rings.
//!
//! The protocol under study is the classic Itai–Rodeh symmetry-breaking scheme:
//! on a ring of `N` identical processors, every active processor flips a coin
//! with success probability `t/n` (where `n` is the current number of active
//! processors) and the candidates circulate pebbles so everyone can count them.
//! One candidate means a leader is elected; two or more mean the candidates
//! proceed to the next round; zero means everyone retries.
//!
//! This crate provides four complementary views of the same process:
//!
//! * [`exact`]: the finite-`n` recurrences for the expected round count
//!   `M(n,t)`, its second moment, and the moment generating function, solved
//!   bottom-up in double precision with numerically stable binomial weights.
//! * [`asymptotics`]: the `n → ∞` constants (limit mean, second moment,
//!   variance, the `1/n` and `1/n²` correction coefficients) together with an
//!   elementary bound sequence and explicit truncation error bounds.
//! * [`distribution`]: the exact and limiting distributions of the round
//!   count, the residues of their generating functions at `z = 2`, and the
//!   resulting geometric tail law.
//! * [`optimizer`]: the limit functional `M(∞,t)` and its derivative in the
//!   candidacy parameter `t`, the unique minimizer `t*` on `(0,2)`, and the
//!   behaviour on the segments `[2,3)` and `(ξ,ξ+1)`.
//! * [`simulator`]: a reproducible Monte Carlo implementation of the actual
//!   protocol, used as an independent oracle for every analytic prediction.
//!
//! The [`validation`] module bundles the cross-module consistency checks that
//! back the `validate` CLI subcommand and the acceptance test suite.

pub mod asymptotics;
pub mod binom;
pub mod cli;
pub mod distribution;
pub mod exact;
pub mod optimizer;
pub mod simulator;
pub mod util;
pub mod validation;

use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A normalizing denominator vanished (or fell below 1e-15).
    #[error("singularity: {0}")]
    Singularity(String),
    /// A least-squares fit had too much residual spread to be trusted.
    #[error("fit error: {0}")]
    Fit(String),
    /// A root bracket could not be established.
    #[error("bracket error: {0}")]
    Bracket(String),
    /// A simulated election exceeded the round guard.
    #[error("livelock guard tripped after {rounds} rounds")]
    Livelock { rounds: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) => 2,
            Error::Singularity(_) => 3,
            Error::Fit(_) | Error::Bracket(_) => 4,
            Error::Livelock { .. } => 2,
        }
    }
}
