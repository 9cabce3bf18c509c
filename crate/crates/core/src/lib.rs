pub mod cells;
pub mod config;
pub mod engine;
pub mod error;
pub mod flitsim;
pub mod packet;
pub mod perf;

pub use error::{Error, Result};
pub mod router;
pub mod runner;
pub mod topology;
