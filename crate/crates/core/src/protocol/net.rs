//! Blocking TCP transport: one thread per connection, frames as defined
//! in [`super::wire`].

use std::collections::HashMap;
use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::party::{registration, CsParty, TpsParty, TpsReply};
use super::wire::{read_frame, write_frame, Frame, MsgType};
use super::{ProtocolError, Reason, Verdict};
use crate::he::{Backend, SecretBackend};

/// A running accept loop. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections. Connections already open finish on
    /// their own threads.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the accept loop ends.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn accept_loop<F>(listener: TcpListener, name: &'static str, handler: F) -> io::Result<ServerHandle>
where
    F: Fn(TcpStream) + Send + Sync + 'static,
{
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handler = Arc::new(handler);
    let thread = thread::Builder::new().name(format!("{name}-accept")).spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let h = handler.clone();
                    let _ = thread::Builder::new()
                        .name(format!("{name}-conn"))
                        .spawn(move || h(stream));
                }
                Err(e) => log::warn!("{name}: accept failed: {e}"),
            }
        }
    })?;
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

/// Runs the third-party server. Query results go to `cs_addr` on a fresh
/// connection each.
pub fn spawn_tps<B>(listener: TcpListener, tps: Arc<TpsParty<B>>, cs_addr: SocketAddr) -> io::Result<ServerHandle>
where
    B: Backend + Send + Sync + 'static,
{
    accept_loop(listener, "tps", move |mut stream| {
        let peer = stream.peer_addr().ok();
        loop {
            let frame = match read_frame(&mut stream) {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(e) => {
                    log::warn!("tps: bad frame from {peer:?}: {e}");
                    break;
                }
            };
            match tps.handle(&frame) {
                TpsReply::ToSender(reply) => {
                    if write_frame(&mut stream, &reply).is_err() {
                        break;
                    }
                }
                TpsReply::ToCentral(out) => {
                    if let Err(e) = TcpStream::connect(cs_addr).and_then(|mut cs| write_frame(&mut cs, &out)) {
                        log::error!("tps: forwarding query {} to {cs_addr}: {e}", frame.query_id);
                    }
                }
                TpsReply::Ignore => log::warn!("tps: unexpected frame from {peer:?}"),
            }
        }
    })
}

/// Runs the central server.
pub fn spawn_cs<B, S>(listener: TcpListener, cs: Arc<CsParty<B, S>>) -> io::Result<ServerHandle>
where
    B: Backend + Send + Sync + 'static,
    S: SecretBackend<Ciphertext = B::Ciphertext> + Send + Sync + 'static,
{
    let routes: Arc<Mutex<HashMap<u64, TcpStream>>> = Arc::default();
    accept_loop(listener, "cs", move |mut stream| loop {
        let frame = match read_frame(&mut stream) {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => {
                log::warn!("cs: bad frame: {e}");
                break;
            }
        };
        match frame.msg_type {
            MsgType::Query => {
                let reply = match cs.register(&frame).and_then(|()| Ok(stream.try_clone()?)) {
                    Ok(route) => {
                        routes.lock().unwrap().insert(frame.query_id, route);
                        frame.clone()
                    }
                    Err(e) => {
                        log::warn!(target: "audit", "cs: registration refused: {e}");
                        Frame {
                            msg_type: MsgType::Error,
                            payloads: vec![vec![Reason::Protocol as u8]],
                            ..frame.clone()
                        }
                    }
                };
                if write_frame(&mut stream, &reply).is_err() {
                    break;
                }
            }
            MsgType::TpsResult | MsgType::Error => {
                let Some(verdict) = cs.resolve(&frame) else { continue };
                let route = routes.lock().unwrap().remove(&verdict.query_id);
                match route {
                    Some(mut sp) => {
                        if let Err(e) = write_frame(&mut sp, &verdict.to_frame()) {
                            log::warn!("cs: delivering verdict {}: {e}", verdict.query_id);
                        }
                    }
                    None => log::warn!("cs: no route for verdict {}", verdict.query_id),
                }
            }
            other => log::warn!("cs: ignoring {other:?} frame"),
        }
    })
}

fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<TcpStream, ProtocolError> {
    let stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(timeout))?;
    Ok(stream)
}

fn read_reply(stream: &mut TcpStream, what: &'static str) -> Result<Frame, ProtocolError> {
    match read_frame(stream) {
        Ok(Some(f)) => Ok(f),
        Ok(None) => Err(ProtocolError::Malformed(format!("connection closed before {what}"))),
        Err(ProtocolError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
            Err(ProtocolError::Timeout(what))
        }
        Err(e) => Err(e),
    }
}

/// Sends an enrollment frame and waits for the acknowledgement.
pub fn enroll(tps: impl ToSocketAddrs, frame: &Frame, timeout: Duration) -> Result<(), ProtocolError> {
    let mut stream = connect(tps, timeout)?;
    write_frame(&mut stream, frame)?;
    let ack = read_reply(&mut stream, "enrollment acknowledgement")?;
    if ack.msg_type != MsgType::Enroll || ack.user_id != frame.user_id {
        return Err(ProtocolError::Malformed(format!("enrollment of {} refused", frame.user_id)));
    }
    Ok(())
}

/// The service provider side of one query: register with the central
/// server, send to the third-party server, wait for the verdict.
pub fn run_query(
    cs: impl ToSocketAddrs,
    tps: impl ToSocketAddrs,
    query: &Frame,
    timeout: Duration,
) -> Result<Verdict, ProtocolError> {
    let mut cs = connect(cs, timeout)?;
    write_frame(&mut cs, &registration(query))?;
    let ack = read_reply(&mut cs, "registration")?;
    if ack.msg_type != MsgType::Query || ack.query_id != query.query_id {
        return Err(ProtocolError::Malformed(format!("registration of query {} refused", query.query_id)));
    }
    let mut tps = connect(tps, timeout)?;
    write_frame(&mut tps, query)?;
    let _ = tps.shutdown(Shutdown::Write);
    let frame = read_reply(&mut cs, "verdict")?;
    let verdict = Verdict::from_frame(&frame)?;
    if verdict.query_id != query.query_id {
        return Err(ProtocolError::Malformed("verdict for another query".into()));
    }
    Ok(verdict)
}
