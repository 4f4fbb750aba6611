pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod numeric;
pub mod orca;
pub mod sim;
pub mod state_repr;
pub mod value_net;
pub mod vlearning;

pub use error::{Error, Result};
