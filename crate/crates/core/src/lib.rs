//! Reachable-set estimation for bimodal piecewise-affine systems with bounded disturbances.
//!
//! A system switches between `x' = A1 x + B w + d1` on `c^T x + f < 0` and
//! `x' = A2 x + B w + d2` on `c^T x + f >= 0`, with `w^T Rw w <= 1`. The crate searches for
//! a continuous piecewise quadratic Lyapunov function whose 1-level set bounds every state
//! reachable from the origin, and compares it with the classical common quadratic bound.
//!
//! ```
//! use pwa_reach::{bundled, solve::{self, CertificateKind, SearchOptions}};
//!
//! let sys = bundled::example1();
//! let solver = solve::ClarabelSolver::default();
//! let cert = solve::solve_at(&sys, CertificateKind::Piecewise, 0.4, &SearchOptions::default(), &solver)?;
//! assert!(cert.audit.max_violation() < 1e-5);
//! # Ok::<(), pwa_reach::Error>(())
//! ```

pub mod bundled;
pub mod config;
pub mod copositive;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod reachset;
pub mod sim;
pub mod solve;

pub use config::Tolerances;
pub use error::{Error, Result};
pub use model::{BimodalSystem, Mode, SwitchGeometry};
pub use solve::{Certificate, CertificateKind};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/reachable-sets.md")]
    mod reachable_sets {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
