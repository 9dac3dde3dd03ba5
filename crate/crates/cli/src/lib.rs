//! Library side of the `hom3` binary: configuration, subcommands, plots and the
//! self-test suite.

pub mod commands;
pub mod config;
pub mod plot;
pub mod selftest;
