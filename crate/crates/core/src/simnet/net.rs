//! Two-process sessions over TCP. Bob connects to Alice, optionally through
//! an eavesdropping proxy. The protocol is strictly turn-based per shot:
//!
//! ```text
//! Bob   -> SESSION_INIT            Alice -> SESSION_INIT (echo)
//! Bob   -> QUBIT                   Alice -> [MEASURE_ACK] ANNOUNCE
//!   ... until N shots arrive ...
//! Bob   -> SESSION_END (preps)     Alice -> SESSION_END (bit, outcomes)
//! ```
//!
//! After the debrief both sides hold the same records and write identical
//! transcripts.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::wire::{Debrief, SessionInit, WireMessage, PROTOCOL_VERSION};
use super::{is_lost, SessionTranscript};
use crate::adversary::{enact, Strategy};
use crate::error::{Error, Result};
use crate::protocol::{
    alice_announce, alice_measure, bob_prepare, default_message, role_rng, Announcement, Bit, Outcome, PreparedState, Role,
    SessionParams, ShotRecord,
};
use crate::qubit::{PauliAxis, QubitState};

/// How long a client keeps retrying to reach its peer.
pub const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
/// Read timeout on every established connection.
pub const IO_TIMEOUT: Duration = Duration::from_secs(30);

/// A session that ended early. `partial` holds what this side recorded
/// (flagged incomplete) when it knows enough to build records.
#[derive(Debug, Error)]
#[error("session aborted: {error}")]
pub struct SessionAbort {
    #[source]
    pub error: Error,
    pub partial: Option<SessionTranscript>,
}

impl From<Error> for SessionAbort {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

impl From<SessionAbort> for Error {
    fn from(abort: SessionAbort) -> Self {
        abort.error
    }
}

type NetResult = std::result::Result<SessionTranscript, SessionAbort>;

fn unexpected(msg: &WireMessage, waiting_for: &str) -> Error {
    Error::Transport(format!("unexpected {} while waiting for {waiting_for}", msg.name()))
}

fn init_of(params: &SessionParams) -> Result<SessionInit> {
    Ok(SessionInit {
        version: PROTOCOL_VERSION,
        p_a: params.p_a,
        c_m: params.c_m,
        shots: u32::try_from(params.shots).map_err(|_| Error::Domain("shot count exceeds the wire limit".into()))?,
        seed: params.seed,
        loss: params.loss,
    })
}

fn params_of(init: &SessionInit, message: Bit) -> Result<SessionParams> {
    let params = SessionParams {
        p_a: init.p_a,
        c_m: init.c_m,
        shots: init.shots as usize,
        seed: init.seed,
        loss: init.loss,
        message,
    };
    params.validate()?;
    Ok(params)
}

fn check_version(found: u8) -> Result<()> {
    if found == PROTOCOL_VERSION {
        Ok(())
    } else {
        Err(Error::VersionMismatch { expected: PROTOCOL_VERSION, found })
    }
}

/// Bob's side of a session over an established stream.
pub fn bob_session<S: Read + Write>(stream: &mut S, params: &SessionParams) -> NetResult {
    params.validate()?;
    WireMessage::SessionInit(init_of(params)?).write_to(stream)?;
    match WireMessage::read_from(stream)? {
        WireMessage::SessionInit(echo) => check_version(echo.version)?,
        other => return Err(unexpected(&other, "SESSION_INIT").into()),
    }

    let mut rng = role_rng(params.seed, Role::BobPrepare);
    let mut prepared: Vec<PreparedState> = Vec::new();
    let mut seen: Vec<(Option<PauliAxis>, Announcement)> = Vec::new();
    let partial = |prepared: &[PreparedState], seen: &[(Option<PauliAxis>, Announcement)]| SessionTranscript {
        params: *params,
        records: prepared
            .iter()
            .zip(seen)
            .enumerate()
            .map(|(index, (&prep, &(basis, announcement)))| ShotRecord {
                index,
                prepared: prep,
                basis,
                m: match announcement {
                    Announcement::Result { m, .. } => Some(m),
                    _ => None,
                },
                announcement,
            })
            .collect(),
        complete: false,
    };
    let abort = |error: Error, prepared: &[PreparedState], seen: &[(Option<PauliAxis>, Announcement)]| SessionAbort {
        error,
        partial: Some(partial(prepared, seen)),
    };

    let mut delivered = 0;
    while delivered < params.shots {
        let (label, state) = bob_prepare(&mut rng);
        prepared.push(label);
        let exchange = (|| -> Result<(Option<PauliAxis>, Announcement)> {
            WireMessage::Qubit(state.bloch()).write_to(stream)?;
            let mut basis = None;
            loop {
                match WireMessage::read_from(stream)? {
                    WireMessage::MeasureAck(axis) if basis.is_none() => basis = Some(axis),
                    WireMessage::Announce(a) => {
                        if a.basis() != basis {
                            return Err(Error::Transport("announced basis differs from the acknowledged one".into()));
                        }
                        return Ok((basis, a));
                    }
                    other => return Err(unexpected(&other, "ANNOUNCE")),
                }
            }
        })();
        match exchange {
            Ok(shot) => {
                if !shot.1.is_null() {
                    delivered += 1;
                }
                seen.push(shot);
            }
            Err(e) => {
                prepared.pop();
                return Err(abort(e, &prepared, &seen));
            }
        }
    }

    let debrief = (|| -> Result<(Bit, Vec<Option<Outcome>>)> {
        WireMessage::SessionEnd(Debrief::Bob { prepared: prepared.clone() }).write_to(stream)?;
        match WireMessage::read_from(stream)? {
            WireMessage::SessionEnd(Debrief::Alice { message, outcomes }) => Ok((message, outcomes)),
            other => Err(unexpected(&other, "Alice's SESSION_END")),
        }
    })();
    let (message, outcomes) = debrief.map_err(|e| abort(e, &prepared, &seen))?;
    if outcomes.len() != prepared.len() {
        let e = Error::Transport(format!("debrief covers {} shots, expected {}", outcomes.len(), prepared.len()));
        return Err(abort(e, &prepared, &seen));
    }

    let records: Vec<ShotRecord> = prepared
        .iter()
        .zip(&seen)
        .zip(&outcomes)
        .enumerate()
        .map(|(index, ((&prep, &(basis, announcement)), &m))| ShotRecord { index, prepared: prep, basis, m, announcement })
        .collect();
    if let Some(bad) = records.iter().find(|r| !r.is_consistent()) {
        let e = Error::Transport(format!("debrief contradicts the announcement of shot {}", bad.index));
        return Err(abort(e, &prepared, &seen));
    }
    Ok(SessionTranscript { params: SessionParams { message, ..*params }, records, complete: true })
}

/// Alice's side of a session over an established stream. Her message bit
/// is `message`, or the seed-derived default.
pub fn alice_session<S: Read + Write>(stream: &mut S, message: Option<Bit>) -> NetResult {
    let init = match WireMessage::read_from(stream)? {
        WireMessage::SessionInit(init) => init,
        other => return Err(unexpected(&other, "SESSION_INIT").into()),
    };
    check_version(init.version)?;
    let params = params_of(&init, message.unwrap_or_else(|| default_message(init.seed)))?;
    WireMessage::SessionInit(SessionInit { version: PROTOCOL_VERSION, ..init }).write_to(stream)?;

    let mut measure = role_rng(params.seed, Role::AliceMeasure);
    let mut announce = role_rng(params.seed, Role::AliceAnnounce);
    let mut channel = role_rng(params.seed, Role::Loss);
    let mut shots: Vec<(Option<PauliAxis>, Option<Outcome>, Announcement)> = Vec::new();

    let prepared = loop {
        match WireMessage::read_from(stream)? {
            WireMessage::Qubit(bloch) => {
                let received = QubitState::new(bloch).map_err(|e| Error::Transport(format!("bad QUBIT payload: {e}")))?;
                if is_lost(params.loss, &mut channel) {
                    WireMessage::Announce(Announcement::Null).write_to(stream)?;
                    shots.push((None, None, Announcement::Null));
                    continue;
                }
                let (basis, m) = alice_measure(&received, &mut measure);
                WireMessage::MeasureAck(basis).write_to(stream)?;
                let a = alice_announce(params.message, basis, m, params.p_a, &mut announce);
                WireMessage::Announce(a).write_to(stream)?;
                shots.push((Some(basis), Some(m), a));
            }
            WireMessage::SessionEnd(Debrief::Bob { prepared }) => break prepared,
            other => return Err(unexpected(&other, "QUBIT or SESSION_END").into()),
        }
    };
    if prepared.len() != shots.len() {
        return Err(Error::Transport(format!("debrief covers {} shots, {} were sent", prepared.len(), shots.len())).into());
    }
    let outcomes = shots.iter().map(|s| s.1).collect();
    WireMessage::SessionEnd(Debrief::Alice { message: params.message, outcomes }).write_to(stream)?;

    let records: Vec<ShotRecord> = prepared
        .iter()
        .zip(&shots)
        .enumerate()
        .map(|(index, (&prep, &(basis, m, announcement)))| ShotRecord { index, prepared: prep, basis, m, announcement })
        .collect();
    let delivered = records.iter().filter(|r| !r.announcement.is_null()).count();
    if delivered != params.shots {
        let e = Error::Transport(format!("session ended after {delivered} of {} shots", params.shots));
        return Err(SessionAbort { error: e, partial: Some(SessionTranscript { params, records, complete: false }) });
    }
    Ok(SessionTranscript { params, records, complete: true })
}

/// Counters reported by the proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProxyStats {
    pub frames_relayed: usize,
    pub qubits_intercepted: usize,
}

fn relay<W: Write>(msg: &WireMessage, to: &mut W, stats: &mut ProxyStats) -> Result<()> {
    msg.write_to(to)?;
    stats.frames_relayed += 1;
    Ok(())
}

/// Man-in-the-middle between Bob (`downstream`) and Alice (`upstream`).
/// QUBIT frames are replaced by what Eve's strategy sends on; everything
/// else passes unchanged. Eve's randomness is seeded from SESSION_INIT.
pub fn eve_session<D: Read + Write, U: Read + Write>(downstream: &mut D, upstream: &mut U, strategy: &Strategy) -> Result<ProxyStats> {
    strategy.validate()?;
    let mut stats = ProxyStats::default();
    let init = match WireMessage::read_from(downstream)? {
        WireMessage::SessionInit(init) => init,
        other => return Err(unexpected(&other, "SESSION_INIT")),
    };
    relay(&WireMessage::SessionInit(init), upstream, &mut stats)?;
    let echo = WireMessage::read_from(upstream)?;
    relay(&echo, downstream, &mut stats)?;
    let mut rng = role_rng(init.seed, Role::Eve);

    loop {
        match WireMessage::read_from(downstream)? {
            WireMessage::Qubit(bloch) => {
                let state = QubitState::new(bloch).map_err(|e| Error::Transport(format!("bad QUBIT payload: {e}")))?;
                let (out, _) = enact(strategy, stats.qubits_intercepted, &state, &mut rng)?;
                stats.qubits_intercepted += 1;
                relay(&WireMessage::Qubit(out.bloch()), upstream, &mut stats)?;
                loop {
                    let reply = WireMessage::read_from(upstream)?;
                    relay(&reply, downstream, &mut stats)?;
                    match reply {
                        WireMessage::MeasureAck(_) => {}
                        WireMessage::Announce(_) => break,
                        other => return Err(unexpected(&other, "ANNOUNCE")),
                    }
                }
            }
            end @ WireMessage::SessionEnd(Debrief::Bob { .. }) => {
                relay(&end, upstream, &mut stats)?;
                let reply = WireMessage::read_from(upstream)?;
                relay(&reply, downstream, &mut stats)?;
                return Ok(stats);
            }
            other => return Err(unexpected(&other, "QUBIT or SESSION_END")),
        }
    }
}

fn prepare(stream: &TcpStream) -> Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    Ok(())
}

/// Connects, retrying until [`CONNECT_TIMEOUT`] so peers may start in any order.
fn connect(endpoint: &str) -> Result<TcpStream> {
    let deadline = Instant::now() + CONNECT_TIMEOUT;
    let addrs: Vec<_> = endpoint
        .to_socket_addrs()
        .map_err(|e| Error::Transport(format!("cannot resolve {endpoint}: {e}")))?
        .collect();
    loop {
        let mut last = None;
        for addr in &addrs {
            match TcpStream::connect_timeout(addr, Duration::from_secs(1)) {
                Ok(s) => {
                    prepare(&s)?;
                    return Ok(s);
                }
                Err(e) => last = Some(e),
            }
        }
        if Instant::now() >= deadline {
            let reason = last.map_or_else(|| "no address".to_string(), |e| e.to_string());
            return Err(Error::Transport(format!("cannot reach {endpoint}: {reason}")));
        }
        thread::sleep(Duration::from_millis(50));
    }
}

fn accept(listener: &TcpListener) -> Result<TcpStream> {
    let (stream, _) = listener.accept()?;
    prepare(&stream)?;
    Ok(stream)
}

fn bind(endpoint: &str) -> Result<TcpListener> {
    TcpListener::bind(endpoint).map_err(|e| Error::Transport(format!("cannot listen on {endpoint}: {e}")))
}

/// Bob: connects to `endpoint` and runs one session.
pub fn run_bob(endpoint: &str, params: &SessionParams) -> NetResult {
    let mut stream = connect(endpoint)?;
    bob_session(&mut stream, params)
}

/// Alice: listens on `endpoint` and serves one session.
pub fn run_alice(endpoint: &str, message: Option<Bit>) -> NetResult {
    run_alice_on(&bind(endpoint)?, message)
}

pub fn run_alice_on(listener: &TcpListener, message: Option<Bit>) -> NetResult {
    let mut stream = accept(listener)?;
    alice_session(&mut stream, message)
}

/// Eve: listens on `endpoint` for Bob, connects to Alice at `upstream`,
/// and relays one session.
pub fn run_eve_proxy(endpoint: &str, upstream: &str, strategy: &Strategy) -> Result<ProxyStats> {
    run_eve_proxy_on(&bind(endpoint)?, upstream, strategy)
}

pub fn run_eve_proxy_on(listener: &TcpListener, upstream: &str, strategy: &Strategy) -> Result<ProxyStats> {
    let mut bob = accept(listener)?;
    let mut alice = connect(upstream)?;
    eve_session(&mut bob, &mut alice, strategy)
}
