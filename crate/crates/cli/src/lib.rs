pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod scaling;
