//! Transport-free logic of the three parties. Each method takes a frame
//! and returns the frame to send on, so the same code runs over TCP and
//! in tests.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use super::{ProtocolError, Reason, StoredRecord, TpsStore, Verdict};
use super::wire::{Frame, MsgType};
use crate::encoding::{encode_demographic, UserId, UserRecord};
use crate::he::{Backend, Decryptor, Evaluator, HeError, SecretBackend};
use crate::queries::{cs_extended_decrypt, evaluate, PlainQuery, QueryConfig, QueryKind, Status, StoredPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Received,
    Sent,
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub frame: Frame,
}

/// Every frame the third-party server saw or emitted, in order.
#[derive(Debug, Clone, Default)]
pub struct Transcript(Arc<Mutex<Vec<TranscriptEntry>>>);

impl Transcript {
    pub fn record(&self, direction: Direction, frame: &Frame) {
        self.0.lock().unwrap().push(TranscriptEntry {
            direction,
            frame: frame.clone(),
        });
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.0.lock().unwrap().clone()
    }
}

fn error_frame(frame: &Frame, reason: Reason) -> Frame {
    Frame {
        msg_type: MsgType::Error,
        query_id: frame.query_id,
        user_id: frame.user_id,
        kind: frame.kind,
        payloads: vec![vec![reason as u8]],
    }
}

/// Where a frame produced by the third-party server goes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TpsReply {
    ToSender(Frame),
    ToCentral(Frame),
    Ignore,
}

pub struct TpsParty<B: Backend> {
    ev: Evaluator<B>,
    store: TpsStore,
    cfg: QueryConfig,
    transcript: Option<Transcript>,
}

impl<B: Backend> TpsParty<B> {
    pub fn new(ev: Evaluator<B>, store: TpsStore, cfg: QueryConfig) -> Self {
        Self {
            ev,
            store,
            cfg,
            transcript: None,
        }
    }

    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn evaluator(&self) -> &Evaluator<B> {
        &self.ev
    }

    pub fn store(&self) -> &TpsStore {
        &self.store
    }

    fn log(&self, direction: Direction, frame: &Frame) {
        if let Some(t) = &self.transcript {
            t.record(direction, frame);
        }
    }

    /// Entry point for every inbound frame. Each frame is recorded before
    /// it is looked at.
    pub fn handle(&self, frame: &Frame) -> TpsReply {
        self.log(Direction::Received, frame);
        let reply = match frame.msg_type {
            MsgType::Enroll => TpsReply::ToSender(self.enroll(frame).unwrap_or_else(|e| {
                log::warn!("enrollment of {} rejected: {e}", frame.user_id);
                error_frame(frame, Reason::Protocol)
            })),
            MsgType::Query => TpsReply::ToCentral(self.query(frame)),
            other => {
                log::warn!("ignoring {other:?} frame for query id {}", frame.query_id);
                return TpsReply::Ignore;
            }
        };
        match &reply {
            TpsReply::ToSender(f) | TpsReply::ToCentral(f) => self.log(Direction::Sent, f),
            TpsReply::Ignore => {}
        }
        reply
    }

    /// Stores an enrollment and returns the acknowledgement.
    pub fn handle_enroll(&self, frame: &Frame) -> Result<Frame, ProtocolError> {
        self.log(Direction::Received, frame);
        let ack = self.enroll(frame)?;
        self.log(Direction::Sent, &ack);
        Ok(ack)
    }

    /// Evaluates a query. The returned frame goes to the central server:
    /// either the result ciphertext or an error code.
    pub fn handle_query(&self, frame: &Frame) -> Frame {
        self.log(Direction::Received, frame);
        let out = self.query(frame);
        self.log(Direction::Sent, &out);
        out
    }

    fn enroll(&self, frame: &Frame) -> Result<Frame, ProtocolError> {
        let [demo, bio] = frame.payloads.as_slice() else {
            return Err(ProtocolError::Malformed("enrollment carries two ciphertexts".into()));
        };
        // Parse both so that foreign parameters are rejected at the door.
        self.ev.deserialize(demo)?;
        self.ev.deserialize(bio)?;
        self.store.put(
            &frame.user_id,
            &StoredRecord {
                demo: demo.clone(),
                bio: bio.clone(),
            },
        )?;
        Ok(Frame {
            payloads: Vec::new(),
            ..frame.clone()
        })
    }

    fn query(&self, frame: &Frame) -> Frame {
        match self.evaluate(frame) {
            Ok(bytes) => Frame {
                msg_type: MsgType::TpsResult,
                payloads: vec![bytes],
                ..frame.clone()
            },
            Err(reason) => error_frame(frame, reason),
        }
    }

    fn evaluate(&self, frame: &Frame) -> Result<Vec<u8>, Reason> {
        let kind = QueryKind::from_code(frame.kind).ok_or(Reason::Protocol)?;
        let record = match self.store.get(&frame.user_id) {
            Ok(Some(r)) => r,
            Ok(None) => return Err(Reason::NotFound),
            Err(e) => {
                log::error!("store read for {}: {e}", frame.user_id);
                return Err(Reason::Protocol);
            }
        };
        let parse = |b: &[u8]| self.ev.deserialize(b).map_err(|_| Reason::Protocol);
        let demo = parse(&record.demo)?;
        let bio = parse(&record.bio)?;
        let payloads = frame.payloads.iter().map(|p| parse(p)).collect::<Result<Vec<_>, _>>()?;
        let stored = StoredPair { demo: &demo, bio: &bio };
        match evaluate(&self.ev, kind, stored, &payloads, &self.cfg) {
            Ok(out) => Ok(self.ev.serialize(&out)),
            Err(e) => {
                log::warn!("query {} ({kind}) rejected: {e}", frame.query_id);
                Err(Reason::Protocol)
            }
        }
    }
}

#[derive(Default)]
struct CsState {
    pending: HashMap<u64, (UserId, QueryKind)>,
    answered: HashSet<u64>,
}

pub struct CsParty<B, S>
where
    B: Backend,
    S: SecretBackend<Ciphertext = B::Ciphertext>,
{
    enc: Evaluator<B>,
    dec: Decryptor<S>,
    cfg: QueryConfig,
    state: Mutex<CsState>,
}

impl<B, S> CsParty<B, S>
where
    B: Backend,
    S: SecretBackend<Ciphertext = B::Ciphertext>,
{
    pub fn new(enc: Evaluator<B>, dec: Decryptor<S>, cfg: QueryConfig) -> Self {
        Self {
            enc,
            dec,
            cfg,
            state: Mutex::default(),
        }
    }

    pub fn config(&self) -> &QueryConfig {
        &self.cfg
    }

    /// Encrypts a record into an enrollment frame for the third-party server.
    pub fn enroll_frame(&self, record: &UserRecord) -> Result<Frame, ProtocolError> {
        let demo = self.enc.encrypt(&encode_demographic(&record.demographics)?)?;
        let bio = self.enc.encrypt(&record.fingercode.to_slots())?;
        Ok(Frame {
            msg_type: MsgType::Enroll,
            query_id: 0,
            user_id: record.user_id,
            kind: 0,
            payloads: vec![self.enc.serialize(&demo), self.enc.serialize(&bio)],
        })
    }

    /// Accepts a service provider's registration of a query id. Ids are
    /// single use.
    pub fn register(&self, frame: &Frame) -> Result<(), ProtocolError> {
        if frame.msg_type != MsgType::Query || !frame.payloads.is_empty() {
            return Err(ProtocolError::Malformed("registration is a query frame without payloads".into()));
        }
        let kind = QueryKind::from_code(frame.kind)
            .ok_or_else(|| ProtocolError::Malformed(format!("unknown query kind {}", frame.kind)))?;
        let mut state = self.state.lock().unwrap();
        if state.answered.contains(&frame.query_id) || state.pending.contains_key(&frame.query_id) {
            return Err(ProtocolError::Malformed(format!("query id {} already used", frame.query_id)));
        }
        state.pending.insert(frame.query_id, (frame.user_id, kind));
        Ok(())
    }

    /// Turns a third-party result into a verdict. Returns `None` for ids
    /// that were never registered or are already answered; those frames
    /// are dropped.
    pub fn resolve(&self, frame: &Frame) -> Option<Verdict> {
        let (user_id, kind) = {
            let mut state = self.state.lock().unwrap();
            let Some(entry) = state.pending.remove(&frame.query_id) else {
                let why = if state.answered.contains(&frame.query_id) {
                    "replayed"
                } else {
                    "unregistered"
                };
                log::warn!(target: "audit", "dropping {why} result for query id {}", frame.query_id);
                return None;
            };
            state.answered.insert(frame.query_id);
            entry
        };
        let fail = |reason| Verdict {
            query_id: frame.query_id,
            user_id,
            kind,
            status: Status::Fail,
            reason,
        };
        if frame.user_id != user_id || frame.kind != kind.code() {
            log::warn!(target: "audit", "result for query id {} does not match its registration", frame.query_id);
            return Some(fail(Reason::Protocol));
        }
        match frame.msg_type {
            MsgType::Error => {
                let reason = match frame.payloads.as_slice() {
                    [body] if body.len() == 1 => Reason::from_u8(body[0]).unwrap_or(Reason::Protocol),
                    _ => Reason::Protocol,
                };
                Some(fail(if reason == Reason::None { Reason::Protocol } else { reason }))
            }
            MsgType::TpsResult => {
                let [body] = frame.payloads.as_slice() else {
                    return Some(fail(Reason::Protocol));
                };
                let out = match self.enc.deserialize(body) {
                    Ok(c) => c,
                    Err(_) => return Some(fail(Reason::Protocol)),
                };
                match cs_extended_decrypt(&self.dec, &out, &self.cfg) {
                    Ok(status) => Some(Verdict {
                        status,
                        ..fail(Reason::None)
                    }),
                    Err(HeError::NoiseBudgetExhausted) => {
                        log::error!("query id {}: noise budget exhausted", frame.query_id);
                        Some(fail(Reason::Decrypt))
                    }
                    Err(e) => {
                        log::error!("query id {}: {e}", frame.query_id);
                        Some(fail(Reason::Decrypt))
                    }
                }
            }
            _ => Some(fail(Reason::Protocol)),
        }
    }
}

pub struct SpParty<B: Backend> {
    ev: Evaluator<B>,
}

impl<B: Backend> SpParty<B> {
    pub fn new(ev: Evaluator<B>) -> Self {
        Self { ev }
    }

    /// The encrypted query for the third-party server.
    pub fn query_frame(&self, query_id: u64, user_id: UserId, query: &PlainQuery) -> Result<Frame, ProtocolError> {
        let payloads = query
            .encode()?
            .iter()
            .map(|slots| Ok(self.ev.serialize(&self.ev.encrypt(slots)?)))
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        Ok(Frame {
            msg_type: MsgType::Query,
            query_id,
            user_id,
            kind: query.kind().code(),
            payloads,
        })
    }
}

/// The registration a service provider sends the central server for a
/// query: same header, no ciphertexts.
pub fn registration(query: &Frame) -> Frame {
    Frame {
        payloads: Vec::new(),
        ..query.clone()
    }
}
