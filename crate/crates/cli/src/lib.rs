//! Command-line front end and HTTP query service for the retrieval engine.

pub mod server;

use ringview::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;

/// Usage and configuration mistakes exit with 1; anything wrong with the
/// data on disk exits with 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::InvalidArgument(_)) => EXIT_USAGE,
        Some(_) => EXIT_DATA,
        None => EXIT_USAGE,
    }
}
