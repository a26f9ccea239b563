//! Length-prefixed binary framing: one type byte, a little-endian u32
//! payload length, then the payload.

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};
use crate::protocol::{Announcement, Bit, Outcome, PreparedState};
use crate::qubit::PauliAxis;

pub const PROTOCOL_VERSION: u8 = 1;

/// Frames larger than this are rejected before allocation.
pub const MAX_PAYLOAD: u32 = 1 << 24;

const TAG_SESSION_INIT: u8 = 1;
const TAG_QUBIT: u8 = 2;
const TAG_MEASURE_ACK: u8 = 3;
const TAG_ANNOUNCE: u8 = 4;
const TAG_SESSION_END: u8 = 5;

const KIND_BIT: u8 = 0;
const KIND_RESULT: u8 = 1;
const KIND_NULL: u8 = 2;
const NO_BASIS: u8 = 0xFF;
const NO_OUTCOME: u8 = 2;

/// Session parameters as sent by Bob when opening a session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionInit {
    pub version: u8,
    pub p_a: f64,
    pub c_m: Option<f64>,
    pub shots: u32,
    pub seed: u64,
    pub loss: f64,
}

/// What each side reveals once all shots are done.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Debrief {
    /// Bob's preparation for every shot, null shots included.
    Bob { prepared: Vec<PreparedState> },
    /// Alice's message bit and her outcome for every shot (`None` when the
    /// particle never arrived).
    Alice { message: Bit, outcomes: Vec<Option<Outcome>> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    SessionInit(SessionInit),
    /// Bloch vector of the particle in transit.
    Qubit([f64; 3]),
    /// Alice has measured in this basis.
    MeasureAck(PauliAxis),
    Announce(Announcement),
    SessionEnd(Debrief),
}

fn axis_code(axis: PauliAxis) -> u8 {
    match axis {
        PauliAxis::X => 0,
        PauliAxis::Z => 1,
    }
}

fn axis_from(code: u8) -> Result<PauliAxis> {
    match code {
        0 => Ok(PauliAxis::X),
        1 => Ok(PauliAxis::Z),
        other => Err(Error::Transport(format!("bad basis byte {other}"))),
    }
}

fn outcome_code(m: Outcome) -> u8 {
    match m {
        Outcome::Plus => 0,
        Outcome::Minus => 1,
    }
}

fn outcome_from(code: u8) -> Result<Option<Outcome>> {
    match code {
        0 => Ok(Some(Outcome::Plus)),
        1 => Ok(Some(Outcome::Minus)),
        NO_OUTCOME => Ok(None),
        other => Err(Error::Transport(format!("bad outcome byte {other}"))),
    }
}

fn bit_from(code: u8) -> Result<Bit> {
    Bit::try_from(code).map_err(|_| Error::Transport(format!("bad bit byte {code}")))
}

impl WireMessage {
    fn tag(&self) -> u8 {
        match self {
            WireMessage::SessionInit(_) => TAG_SESSION_INIT,
            WireMessage::Qubit(_) => TAG_QUBIT,
            WireMessage::MeasureAck(_) => TAG_MEASURE_ACK,
            WireMessage::Announce(_) => TAG_ANNOUNCE,
            WireMessage::SessionEnd(_) => TAG_SESSION_END,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WireMessage::SessionInit(_) => "SESSION_INIT",
            WireMessage::Qubit(_) => "QUBIT",
            WireMessage::MeasureAck(_) => "MEASURE_ACK",
            WireMessage::Announce(_) => "ANNOUNCE",
            WireMessage::SessionEnd(_) => "SESSION_END",
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            WireMessage::SessionInit(init) => {
                out.push(init.version);
                out.extend_from_slice(&init.p_a.to_le_bytes());
                out.extend_from_slice(&init.c_m.unwrap_or(f64::NAN).to_le_bytes());
                out.extend_from_slice(&init.shots.to_le_bytes());
                out.extend_from_slice(&init.seed.to_le_bytes());
                out.extend_from_slice(&init.loss.to_le_bytes());
            }
            WireMessage::Qubit(r) => {
                for x in r {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            WireMessage::MeasureAck(axis) => out.push(axis_code(*axis)),
            WireMessage::Announce(a) => out.extend_from_slice(&match *a {
                Announcement::Bit { basis, c } => [KIND_BIT, axis_code(basis), c.as_u8()],
                Announcement::Result { basis, m } => [KIND_RESULT, axis_code(basis), outcome_code(m)],
                Announcement::Null => [KIND_NULL, NO_BASIS, 0],
            }),
            WireMessage::SessionEnd(Debrief::Bob { prepared }) => {
                out.push(0);
                out.extend_from_slice(&(prepared.len() as u32).to_le_bytes());
                out.extend(prepared.iter().map(|p| p.code()));
            }
            WireMessage::SessionEnd(Debrief::Alice { message, outcomes }) => {
                out.push(1);
                out.push(message.as_u8());
                out.extend_from_slice(&(outcomes.len() as u32).to_le_bytes());
                out.extend(outcomes.iter().map(|m| m.map_or(NO_OUTCOME, outcome_code)));
            }
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(5 + payload.len());
        out.push(self.tag());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    /// Decodes one frame from the front of `bytes`, returning the message
    /// and the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 5 {
            return Err(Error::Transport(format!("truncated frame header ({} bytes)", bytes.len())));
        }
        let len = u32::from_le_bytes(bytes[1..5].try_into().expect("4 bytes"));
        if len > MAX_PAYLOAD {
            return Err(Error::Transport(format!("frame payload of {len} bytes exceeds limit")));
        }
        let end = 5 + len as usize;
        if bytes.len() < end {
            return Err(Error::Transport(format!("truncated frame: need {end} bytes, have {}", bytes.len())));
        }
        Ok((Self::from_parts(bytes[0], &bytes[5..end])?, end))
    }

    fn from_parts(tag: u8, p: &[u8]) -> Result<Self> {
        let expect_len = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::Transport(format!("payload of tag {tag} has {} bytes, expected {n}", p.len())))
            }
        };
        let f64_at = |i: usize| f64::from_le_bytes(p[i..i + 8].try_into().expect("8 bytes"));
        match tag {
            TAG_SESSION_INIT => {
                expect_len(37)?;
                let c_m = f64_at(9);
                Ok(WireMessage::SessionInit(SessionInit {
                    version: p[0],
                    p_a: f64_at(1),
                    c_m: if c_m.is_nan() { None } else { Some(c_m) },
                    shots: u32::from_le_bytes(p[17..21].try_into().expect("4 bytes")),
                    seed: u64::from_le_bytes(p[21..29].try_into().expect("8 bytes")),
                    loss: f64_at(29),
                }))
            }
            TAG_QUBIT => {
                expect_len(24)?;
                Ok(WireMessage::Qubit([f64_at(0), f64_at(8), f64_at(16)]))
            }
            TAG_MEASURE_ACK => {
                expect_len(1)?;
                Ok(WireMessage::MeasureAck(axis_from(p[0])?))
            }
            TAG_ANNOUNCE => {
                expect_len(3)?;
                let ann = match p[0] {
                    KIND_BIT => Announcement::Bit { basis: axis_from(p[1])?, c: bit_from(p[2])? },
                    KIND_RESULT => Announcement::Result {
                        basis: axis_from(p[1])?,
                        m: outcome_from(p[2])?.ok_or_else(|| Error::Transport("result announcement without outcome".into()))?,
                    },
                    KIND_NULL => Announcement::Null,
                    other => return Err(Error::Transport(format!("bad announcement kind {other}"))),
                };
                Ok(WireMessage::Announce(ann))
            }
            TAG_SESSION_END => {
                let count_at = |i: usize| -> Result<usize> {
                    p.get(i..i + 4)
                        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
                        .ok_or_else(|| Error::Transport("truncated debrief".into()))
                };
                match p.first() {
                    Some(0) => {
                        let n = count_at(1)?;
                        expect_len(5 + n)?;
                        let prepared = p[5..]
                            .iter()
                            .map(|&c| PreparedState::from_code(c).map_err(|_| Error::Transport(format!("bad preparation byte {c}"))))
                            .collect::<Result<_>>()?;
                        Ok(WireMessage::SessionEnd(Debrief::Bob { prepared }))
                    }
                    Some(1) => {
                        let message = bit_from(*p.get(1).ok_or_else(|| Error::Transport("truncated debrief".into()))?)?;
                        let n = count_at(2)?;
                        expect_len(6 + n)?;
                        let outcomes = p[6..].iter().map(|&c| outcome_from(c)).collect::<Result<_>>()?;
                        Ok(WireMessage::SessionEnd(Debrief::Alice { message, outcomes }))
                    }
                    _ => Err(Error::Transport("bad debrief role".into())),
                }
            }
            other => Err(Error::Transport(format!("unknown frame type {other}"))),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// Reads exactly one frame. End of stream anywhere, including before the
    /// first byte, is a transport error: every read expects a frame.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; 5];
        read_exact(r, &mut header, "frame header")?;
        let len = u32::from_le_bytes(header[1..5].try_into().expect("4 bytes"));
        if len > MAX_PAYLOAD {
            return Err(Error::Transport(format!("frame payload of {len} bytes exceeds limit")));
        }
        let mut payload = vec![0u8; len as usize];
        read_exact(r, &mut payload, "frame payload")?;
        Self::from_parts(header[0], &payload)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Transport(format!("connection closed inside {what}")),
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Transport(format!("timed out reading {what}")),
        _ => Error::Io(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis() -> impl Strategy<Value = PauliAxis> {
        prop_oneof![Just(PauliAxis::X), Just(PauliAxis::Z)]
    }

    fn outcome() -> impl Strategy<Value = Outcome> {
        prop_oneof![Just(Outcome::Plus), Just(Outcome::Minus)]
    }

    fn bit() -> impl Strategy<Value = Bit> {
        prop_oneof![Just(Bit::Zero), Just(Bit::One)]
    }

    fn announcement() -> impl Strategy<Value = Announcement> {
        prop_oneof![
            (axis(), bit()).prop_map(|(basis, c)| Announcement::Bit { basis, c }),
            (axis(), outcome()).prop_map(|(basis, m)| Announcement::Result { basis, m }),
            Just(Announcement::Null),
        ]
    }

    fn message() -> impl Strategy<Value = WireMessage> {
        prop_oneof![
            (any::<u8>(), -1e3f64..1e3, proptest::option::of(0.0f64..1.0), any::<u32>(), any::<u64>(), 0.0f64..1.0).prop_map(
                |(version, p_a, c_m, shots, seed, loss)| WireMessage::SessionInit(SessionInit { version, p_a, c_m, shots, seed, loss })
            ),
            proptest::array::uniform3(-1.0f64..1.0).prop_map(WireMessage::Qubit),
            axis().prop_map(WireMessage::MeasureAck),
            announcement().prop_map(WireMessage::Announce),
            proptest::collection::vec(0usize..4, 0..50)
                .prop_map(|v| WireMessage::SessionEnd(Debrief::Bob { prepared: v.into_iter().map(|i| PreparedState::ALL[i]).collect() })),
            (bit(), proptest::collection::vec(proptest::option::of(outcome()), 0..50))
                .prop_map(|(message, outcomes)| WireMessage::SessionEnd(Debrief::Alice { message, outcomes })),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(msg in message()) {
            let bytes = msg.encode();
            let (back, used) = WireMessage::decode(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(&back, &msg);
            let mut cursor = std::io::Cursor::new(bytes);
            prop_assert_eq!(WireMessage::read_from(&mut cursor).unwrap(), msg);
        }

        #[test]
        fn any_truncation_is_a_transport_error(msg in message(), cut in 0usize..64) {
            let bytes = msg.encode();
            let cut = cut % bytes.len();
            prop_assert!(matches!(WireMessage::decode(&bytes[..cut]), Err(Error::Transport(_))));
            let mut cursor = std::io::Cursor::new(bytes[..cut].to_vec());
            prop_assert!(matches!(WireMessage::read_from(&mut cursor), Err(Error::Transport(_))));
        }
    }

    #[test]
    fn fixed_payload_sizes() {
        assert_eq!(WireMessage::Qubit([0.0, 0.0, 1.0]).encode().len(), 5 + 24);
        let ann = WireMessage::Announce(Announcement::Result { basis: PauliAxis::Z, m: Outcome::Minus }).encode();
        assert_eq!(ann, vec![TAG_ANNOUNCE, 3, 0, 0, 0, KIND_RESULT, 1, 1]);
    }

    #[test]
    fn malformed_frames_rejected() {
        assert!(matches!(WireMessage::decode(&[9, 0, 0, 0, 0]), Err(Error::Transport(_))));
        assert!(matches!(WireMessage::decode(&[TAG_QUBIT, 1, 0, 0, 0, 0]), Err(Error::Transport(_))));
        assert!(matches!(WireMessage::decode(&[TAG_ANNOUNCE, 3, 0, 0, 0, 7, 0, 0]), Err(Error::Transport(_))));
        assert!(matches!(WireMessage::decode(&[TAG_QUBIT, 0xFF, 0xFF, 0xFF, 0xFF]), Err(Error::Transport(_))));
    }
}
