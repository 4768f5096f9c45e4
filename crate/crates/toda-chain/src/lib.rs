//! Command-line front end and file formats for the controlled chain.
//!
//! Everything numerical lives in `toda-chain-core`; this crate adds the
//! JSON report schemas, CSV trajectory export, state-literal files and the
//! `toda-chain` binary with its subcommands.

pub mod cli;
pub mod commands;
pub mod format;
pub mod report;

/// Process exit codes of the binary.
pub mod exit_codes {
    pub const SUCCESS: u8 = 0;
    pub const VALIDATION: u8 = 1;
    pub const NUMERICAL: u8 = 2;
    pub const CERTIFICATION: u8 = 3;
}
