//! Command line and HTTP front end. Every command maps onto a
//! `visage_core` operation; this crate only parses, loads and prints.

pub mod cli;
pub mod server;

pub use cli::{run, Cli};
pub use server::{router, AppState};
