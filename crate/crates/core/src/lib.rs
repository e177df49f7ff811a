pub mod deim;
pub mod dmd;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod models;
pub mod pod;
pub mod rom;
pub mod sketch;
