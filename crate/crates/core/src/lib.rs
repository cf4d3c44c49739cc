//! Feedback-linearizable discretization of dynamically linearizable
//! control-affine systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`ad`]: nested forward-mode dual numbers and the [`Field`](ad::Field)
//!   abstraction every smooth map in the crate is expressed through.
//! - [`linalg`]: numerical rank, nullspaces and small dense solvers.
//! - [`geometry`]: retraction and discretization maps, their axioms and
//!   their lift through diffeomorphisms.
//! - [`systems`]: control-affine systems, dynamic compensators, extended
//!   systems and linearizing data.
//! - [`integrator`]: one-step schemes induced by discretization maps,
//!   closed-loop simulation, a reference integrator and order estimation.
//! - [`linearizability`]: Lie brackets, distributions, the discrete-time
//!   involutivity audit and the continuous-time static linearizability test.
//! - [`presets`]: the planar unicycle-type benchmark used by tests and the CLI.
//! - [`cli`]: the `fldisc` command-line front end.

pub mod ad;
pub mod cli;
mod error;
pub mod geometry;
pub mod integrator;
pub mod linalg;
pub mod linearizability;
pub mod presets;
pub mod sampling;
pub mod systems;

pub use error::{Error, Result};
