//! Library side of the `ppid` binary: configuration, benchmarks and exit
//! codes, exposed so the integration tests can drive them directly.

pub mod bench;
pub mod config;

use std::io;

use ppid_core::protocol::ProtocolError;

/// Process exit codes.
pub mod exit {
    /// Success; for `query`, the verdict was PASS.
    pub const OK: i32 = 0;
    /// `query` only: the verdict was FAIL.
    pub const FAIL: i32 = 1;
    /// Any error from `query`, and errors of other commands not covered below.
    pub const ERROR: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const FILE: i32 = 4;
    pub const TRANSPORT: i32 = 5;
}

fn is_transport(kind: io::ErrorKind) -> bool {
    use io::ErrorKind::*;
    matches!(
        kind,
        ConnectionRefused | ConnectionReset | ConnectionAborted | NotConnected | AddrInUse | AddrNotAvailable
            | BrokenPipe | TimedOut | WouldBlock | UnexpectedEof
    )
}

/// Maps an error chain to an exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<config::ConfigError>().is_some() {
            return exit::CONFIG;
        }
        if let Some(p) = cause.downcast_ref::<ProtocolError>() {
            match p {
                ProtocolError::Timeout(_) => return exit::TRANSPORT,
                ProtocolError::Io(e) if is_transport(e.kind()) => return exit::TRANSPORT,
                ProtocolError::Io(_) => return exit::FILE,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return if is_transport(e.kind()) { exit::TRANSPORT } else { exit::FILE };
        }
    }
    exit::ERROR
}
