//! Envelope for every serialized object: a four-byte magic, the parameter
//! id and the payload length, all little-endian, followed by the payload.

use super::{HeError, ParamsId};

pub const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magic {
    Ciphertext,
    PublicKey,
    SecretKey,
    RelinKeys,
    GaloisKeys,
}

impl Magic {
    pub fn bytes(self) -> &'static [u8; 4] {
        match self {
            Self::Ciphertext => b"HEV1",
            Self::PublicKey => b"HPK1",
            Self::SecretKey => b"HSK1",
            Self::RelinKeys => b"HRK1",
            Self::GaloisKeys => b"HGK1",
        }
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        [
            Self::Ciphertext,
            Self::PublicKey,
            Self::SecretKey,
            Self::RelinKeys,
            Self::GaloisKeys,
        ]
        .into_iter()
        .find(|m| m.bytes() == b)
    }
}

pub fn wrap(magic: Magic, params: ParamsId, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(magic.bytes());
    out.extend_from_slice(&params.0.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Parsed header fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub magic: Magic,
    pub params: ParamsId,
    pub len: usize,
}

pub fn read_header(bytes: &[u8]) -> Result<Header, HeError> {
    if bytes.len() < HEADER_LEN {
        return Err(HeError::Decode("truncated envelope header".into()));
    }
    let magic = Magic::from_bytes(&bytes[..4])
        .ok_or_else(|| HeError::Decode(format!("unknown magic {:02x?}", &bytes[..4])))?;
    let params = ParamsId(u32::from_le_bytes(bytes[4..8].try_into().unwrap()));
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    Ok(Header { magic, params, len })
}

/// Validates the envelope and returns its payload. Trailing bytes are an
/// error.
pub fn unwrap(bytes: &[u8], magic: Magic, expected: ParamsId) -> Result<&[u8], HeError> {
    let header = read_header(bytes)?;
    if header.magic != magic {
        return Err(HeError::Decode(format!(
            "expected {:?} envelope, found {:?}",
            magic, header.magic
        )));
    }
    if header.params != expected {
        return Err(HeError::ParamsMismatch {
            expected,
            found: header.params,
        });
    }
    if bytes.len() != HEADER_LEN + header.len {
        return Err(HeError::Decode(format!(
            "envelope declares {} payload bytes, holds {}",
            header.len,
            bytes.len() - HEADER_LEN
        )));
    }
    Ok(&bytes[HEADER_LEN..])
}
