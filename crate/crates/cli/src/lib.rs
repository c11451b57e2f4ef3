//! Command-line tool and local HTTP service over the seasoning toolchain.

pub mod cli;
pub mod error;
pub mod pipeline;
pub mod project;
pub mod server;
