//! Constrained and unconstrained Nash equilibria of finite N-player absorbing
//! Markov games under the total expected reward criterion, computed through
//! occupation-measure linear programs.

pub mod absorption;
pub mod best_response;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod lp;
pub mod model;
pub mod occupation;
pub mod simulate;
pub mod transforms;

pub use error::{Error, Result};
pub use model::{CorrelatedStrategy, GameModel, ModelDescription, StationaryProfile};
