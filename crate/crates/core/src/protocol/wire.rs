//! Frame codec. Every integer is little-endian.
//!
//! ```text
//! "PPID" | version u8 | msg_type u8 | query_id u64 | user_id [16] | kind u8
//!        | payload_count u32 | payload_count x (len u32 | bytes)
//! ```
//!
//! On a stream each frame is preceded by its length as a `u32`.

use std::io::{self, Read, Write};

use super::ProtocolError;
use crate::encoding::UserId;

pub const MAGIC: &[u8; 4] = b"PPID";
pub const VERSION: u8 = 1;
/// Upper bound on a single frame; a query with two ciphertexts at the
/// largest parameter set is about 1 MiB.
pub const MAX_FRAME_LEN: usize = 64 << 20;
const FIXED_LEN: usize = 4 + 1 + 1 + 8 + 16 + 1 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgType {
    Enroll = 1,
    Query = 2,
    TpsResult = 3,
    Verdict = 4,
    Error = 5,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::Enroll,
            2 => Self::Query,
            3 => Self::TpsResult,
            4 => Self::Verdict,
            5 => Self::Error,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub query_id: u64,
    pub user_id: UserId,
    pub kind: u8,
    pub payloads: Vec<Vec<u8>>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let body: usize = self.payloads.iter().map(|p| 4 + p.len()).sum();
        let mut out = Vec::with_capacity(FIXED_LEN + body);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.query_id.to_le_bytes());
        out.extend_from_slice(&self.user_id.0);
        out.push(self.kind);
        out.extend_from_slice(&(self.payloads.len() as u32).to_le_bytes());
        for p in &self.payloads {
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
            out.extend_from_slice(p);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let bad = |m: &str| ProtocolError::Malformed(m.to_string());
        if bytes.len() < FIXED_LEN {
            return Err(bad("frame shorter than its header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(ProtocolError::Malformed(format!("unsupported version {}", bytes[4])));
        }
        let msg_type = MsgType::from_u8(bytes[5])
            .ok_or_else(|| ProtocolError::Malformed(format!("unknown message type {}", bytes[5])))?;
        let query_id = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let user_id = UserId(bytes[14..30].try_into().unwrap());
        let kind = bytes[30];
        let count = u32::from_le_bytes(bytes[31..35].try_into().unwrap()) as usize;
        let mut pos = FIXED_LEN;
        let mut payloads = Vec::with_capacity(count.min(16));
        for _ in 0..count {
            let len_bytes = bytes.get(pos..pos + 4).ok_or_else(|| bad("truncated payload length"))?;
            let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
            pos += 4;
            let p = bytes
                .get(pos..pos.checked_add(len).ok_or_else(|| bad("payload length overflow"))?)
                .ok_or_else(|| bad("truncated payload"))?;
            payloads.push(p.to_vec());
            pos += len;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after payloads"));
        }
        Ok(Self {
            msg_type,
            query_id,
            user_id,
            kind,
            payloads,
        })
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    let body = frame.encode();
    w.write_all(&(body.len() as u32).to_le_bytes())?;
    w.write_all(&body)?;
    w.flush()
}

/// Reads one length-prefixed frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, ProtocolError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::Malformed(format!("frame of {len} bytes exceeds the limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Frame::decode(&body).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame() -> Frame {
        Frame {
            msg_type: MsgType::Query,
            query_id: 0x0102_0304_0506_0708,
            user_id: UserId([0xab; 16]),
            kind: 6,
            payloads: vec![b"HEV1".to_vec(), vec![]],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = frame().encode();
        assert_eq!(&bytes[..6], b"PPID\x01\x02");
        assert_eq!(&bytes[6..14], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(bytes[30], 6);
        assert_eq!(&bytes[31..35], &[2, 0, 0, 0]);
        assert_eq!(&bytes[35..39], &[4, 0, 0, 0]);
    }

    #[test]
    fn rejects_damage() {
        let bytes = frame().encode();
        assert!(Frame::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(Frame::decode(&bytes[..bytes.len() - 5]).is_err());
        let mut v = bytes.clone();
        v[4] = 2;
        assert!(Frame::decode(&v).is_err());
        let mut v = bytes.clone();
        v[5] = 9;
        assert!(Frame::decode(&v).is_err());
        let mut v = bytes;
        v.push(0);
        assert!(Frame::decode(&v).is_err());
    }

    #[test]
    fn stream_roundtrip() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame()).unwrap();
        write_frame(&mut buf, &frame()).unwrap();
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), frame());
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), frame());
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn codec_roundtrip(
            t in 1u8..=5,
            qid in any::<u64>(),
            uid in any::<[u8; 16]>(),
            kind in any::<u8>(),
            payloads in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..64), 0..4),
        ) {
            let f = Frame { msg_type: MsgType::from_u8(t).unwrap(), query_id: qid, user_id: UserId(uid), kind, payloads };
            prop_assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
        }
    }
}
