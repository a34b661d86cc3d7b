//! Job server, polling agent and command-line front end for the
//! `ensemble-audit` engine.

pub mod agent;
pub mod cli;
pub mod server;
