//! Three-party protocol: the central server (CS) holds the secret key, the
//! third-party server (TPS) stores ciphertexts and evaluates queries, and
//! service providers (SP) ask questions.
//!
//! Message flow for one query:
//!
//! 1. SP registers `(query_id, user_id, kind)` with CS and waits for the
//!    echo.
//! 2. SP sends the encrypted query to TPS.
//! 3. TPS evaluates and forwards the result ciphertext to CS.
//! 4. CS decrypts, runs the extended check and sends the verdict to the SP
//!    connection that registered the id. Results for unknown or already
//!    answered ids are dropped.

mod caps;
pub mod net;
mod party;
pub mod store;
pub mod wire;

use std::io;

use thiserror::Error;

pub use caps::{Capability, CapabilityRegistry, KeyDir, KeyInfo, Role};
pub use party::{registration, CsParty, Direction, SpParty, TpsParty, TpsReply, Transcript, TranscriptEntry};
pub use store::{StoredRecord, TpsStore};
pub use wire::{Frame, MsgType};

use crate::encoding::{EncodingError, UserId};
use crate::he::HeError;
use crate::queries::{QueryError, QueryKind, Status};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("{role} may not {capability}")]
    Capability { role: Role, capability: Capability },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
}

/// Why a verdict is a failure beyond the check itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    None = 0,
    NotFound = 1,
    Protocol = 2,
    Decrypt = 3,
}

impl Reason {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::None,
            1 => Self::NotFound,
            2 => Self::Protocol,
            3 => Self::Decrypt,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::NotFound => "not-found",
            Self::Protocol => "protocol",
            Self::Decrypt => "decrypt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub query_id: u64,
    pub user_id: UserId,
    pub kind: QueryKind,
    pub status: Status,
    pub reason: Reason,
}

impl Verdict {
    pub fn to_frame(&self) -> Frame {
        let status = match self.status {
            Status::Pass => 1,
            Status::Fail => 0,
        };
        Frame {
            msg_type: MsgType::Verdict,
            query_id: self.query_id,
            user_id: self.user_id,
            kind: self.kind.code(),
            payloads: vec![vec![status, self.reason as u8]],
        }
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, ProtocolError> {
        let bad = |m: &str| ProtocolError::Malformed(m.to_string());
        if frame.msg_type != MsgType::Verdict {
            return Err(bad("expected a verdict"));
        }
        let kind = QueryKind::from_code(frame.kind).ok_or_else(|| bad("unknown query kind"))?;
        let [body] = frame.payloads.as_slice() else {
            return Err(bad("verdict carries one payload"));
        };
        let (status, reason) = match body.as_slice() {
            [1, r] => (Status::Pass, *r),
            [0, r] => (Status::Fail, *r),
            _ => return Err(bad("verdict payload")),
        };
        let reason = Reason::from_u8(reason).ok_or_else(|| bad("unknown reason code"))?;
        if status == Status::Pass && reason != Reason::None {
            return Err(bad("passing verdict with a failure reason"));
        }
        Ok(Self {
            query_id: frame.query_id,
            user_id: frame.user_id,
            kind,
            status,
            reason,
        })
    }
}
