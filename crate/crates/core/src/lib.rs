//! Homotopy-dynamics training for small physics-informed networks.
//!
//! The crate is organised around the pieces needed to take a tanh MLP from an
//! easy, smooth instance of a singularly perturbed PDE to the sharp target
//! instance:
//!
//! * [`net`]: the MLP, its input derivatives (value, gradient, Laplacian) and
//!   parameter Jacobians of all of them.
//! * [`problems`]: homotopy families `H(u, eps)` with their linearisations and
//!   parameter derivatives, plus collocation sampling and schedules.
//! * [`loss`] and [`trainer`]: residual and homotopy losses, Adam training,
//!   and the two path-tracking strategies (forward Euler through a truncated
//!   pseudo-inverse, and re-optimisation of the homotopy loss).
//! * [`analysis`]: spectra of the linearised operator, the tangent kernel and
//!   the gradient-flow kernel.
//! * [`reference`]: exact solutions, a finite-difference steady-state solver
//!   for the 2D Allen–Cahn problem and the relative L2 error.

pub mod analysis;
mod batched;
pub mod error;
pub mod jet;
pub mod linalg;
pub mod loss;
pub mod net;
pub mod optim;
pub mod points;
pub mod problems;
pub mod reference;
pub mod trainer;

pub use error::{Error, Result};
pub use jet::Jet;
pub use net::{DerivBatch, NetworkParams};
pub use points::Points;
pub use problems::{CollocationSet, Domain, EpsSchedule, Homotopy, SamplingMode};
