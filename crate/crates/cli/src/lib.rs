//! Command line and HTTP front ends for the xv engine.

pub mod cli;
pub mod export;
pub mod http;
pub mod render;
