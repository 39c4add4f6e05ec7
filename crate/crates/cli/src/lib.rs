//! Configuration parsing and command dispatch behind the `varexp` binary.

pub mod config;
pub mod run;
