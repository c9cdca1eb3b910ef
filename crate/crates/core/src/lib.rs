//! Monopoly insurance pricing as a leader–follower game.
//!
//! An insurer (leader) picks a premium principle, a farmer (follower) picks a
//! nonnegative payoff function that minimizes a distortion risk measure of
//! retained loss plus premium. This crate carries the numerical core:
//!
//! - [`choquet`]: distortion functions and Choquet integrals on finite spaces
//! - [`premium`]: expected-value, power-distortion and general distortion premiums
//! - [`diffnet`]: a small reverse-mode network engine (dense, conv, pooling)
//! - [`payoff`]: payoff models over weather grids or scalar losses
//! - [`game`]: the upper and lower objectives and their penalized combination
//! - [`vpbgd`]: the value-gap penalized bilevel gradient solver
//! - [`oracle`]: brute-force grid solvers for small instances
//! - [`dataio`]: detrending, loss construction and a synthetic scenario generator
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command
//! line live in the companion `bowley` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}

pub mod choquet;
pub mod dataio;
pub mod diffnet;
mod error;
pub mod game;
pub mod oracle;
pub mod payoff;
pub mod premium;
pub mod vpbgd;

pub use error::{Error, Result};
