//! Line-delimited JSON transcripts: a header line with the session
//! parameters and stream layout, then one line per attempted shot.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::SessionTranscript;
use crate::error::{Error, Result};
use crate::protocol::{Announcement, Bit, Outcome, PreparedState, SessionParams, ShotRecord};
use crate::qubit::PauliAxis;

pub const TRANSCRIPT_FORMAT: &str = "qseal-transcript/1";

#[derive(Serialize, Deserialize)]
struct Streams {
    message: u64,
    bob_prepare: u64,
    alice_measure: u64,
    alice_announce: u64,
    eve: u64,
    loss: u64,
}

const STREAMS: Streams = Streams { message: 0, bob_prepare: 1, alice_measure: 2, alice_announce: 3, eve: 4, loss: 5 };

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    params: SessionParams,
    streams: Streams,
    complete: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    index: usize,
    prepared: PreparedState,
    basis: Option<String>,
    m: Option<Outcome>,
    kind: String,
    c: Option<Bit>,
}

fn basis_name(axis: PauliAxis) -> String {
    match axis {
        PauliAxis::X => "x".into(),
        PauliAxis::Z => "z".into(),
    }
}

fn parse_basis(s: &str, line: usize) -> Result<PauliAxis> {
    match s {
        "x" => Ok(PauliAxis::X),
        "z" => Ok(PauliAxis::Z),
        other => Err(Error::Parse(format!("line {line}: unknown basis {other:?}"))),
    }
}

impl Row {
    fn from_record(r: &ShotRecord) -> Self {
        let c = match r.announcement {
            Announcement::Bit { c, .. } => Some(c),
            _ => None,
        };
        Row {
            index: r.index,
            prepared: r.prepared,
            basis: r.basis.map(basis_name),
            m: r.m,
            kind: r.announcement.kind().to_string(),
            c,
        }
    }

    fn into_record(self, line: usize, strict: bool) -> Result<ShotRecord> {
        let basis = self.basis.as_deref().map(|b| parse_basis(b, line)).transpose()?;
        let missing = |what: &str| Error::Parse(format!("line {line}: {} row without {what}", self.kind));
        let announcement = match self.kind.as_str() {
            "bit" => Announcement::Bit {
                basis: basis.ok_or_else(|| missing("basis"))?,
                c: self.c.ok_or_else(|| missing("c"))?,
            },
            "result" => Announcement::Result {
                basis: basis.ok_or_else(|| missing("basis"))?,
                m: self.m.ok_or_else(|| missing("m"))?,
            },
            "null" => Announcement::Null,
            other => return Err(Error::Parse(format!("line {line}: unknown kind {other:?}"))),
        };
        let record = ShotRecord { index: self.index, prepared: self.prepared, basis, m: self.m, announcement };
        if strict && !record.is_consistent() {
            return Err(Error::Parse(format!("line {line}: inconsistent shot record")));
        }
        Ok(record)
    }
}

fn json_err(line: usize, e: serde_json::Error) -> Error {
    Error::Parse(format!("line {line}: {e}"))
}

pub fn write_transcript<W: Write>(t: &SessionTranscript, w: &mut W) -> Result<()> {
    let header = Header { format: TRANSCRIPT_FORMAT.into(), params: t.params, streams: STREAMS, complete: t.complete };
    serde_json::to_writer(&mut *w, &header).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    for r in &t.records {
        serde_json::to_writer(&mut *w, &Row::from_record(r)).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a transcript. Complete transcripts must be internally consistent
/// and hold exactly N non-null shots; partial ones are read as recorded.
pub fn read_transcript<R: BufRead>(r: R) -> Result<SessionTranscript> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| Error::Parse("empty transcript".into()))?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| json_err(1, e))?;
    if header.format != TRANSCRIPT_FORMAT {
        return Err(Error::Parse(format!("unsupported transcript format {:?}", header.format)));
    }
    header.params.validate()?;
    let mut records = Vec::new();
    for (i, line) in lines {
        let row: Row = serde_json::from_str(&line?).map_err(|e| json_err(i + 1, e))?;
        records.push(row.into_record(i + 1, header.complete)?);
    }
    if header.complete {
        let delivered = records.iter().filter(|r| !r.announcement.is_null()).count();
        if delivered != header.params.shots {
            return Err(Error::Parse(format!("transcript holds {delivered} non-null shots, header says {}", header.params.shots)));
        }
    }
    Ok(SessionTranscript { params: header.params, records, complete: header.complete })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{BasisPolicy, Strategy};
    use crate::simnet::run_session;

    fn sample() -> SessionTranscript {
        let params = SessionParams::with_shots(0.3, 25, 11).unwrap().loss(0.2).unwrap();
        run_session(&params, &Strategy::InterceptResend(BasisPolicy::Random)).unwrap()
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let mut buf = Vec::new();
        write_transcript(&t, &mut buf).unwrap();
        let back = read_transcript(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let mut again = Vec::new();
        write_transcript(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn layout() {
        let mut buf = Vec::new();
        write_transcript(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"format":"qseal-transcript/1","params":{"p_a":0.3,"c_m":null,"shots":25,"seed":11"#));
        assert!(first.contains(r#""streams":{"message":0,"bob_prepare":1"#));
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with(r#"{"index":0,"prepared":"#));
    }

    #[test]
    fn rejects_damage() {
        let mut buf = Vec::new();
        write_transcript(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let dropped: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_transcript(dropped.as_bytes()), Err(Error::Parse(_))));
        let garbled = text.replacen(r#""kind":"result""#, r#""kind":"resu1t""#, 1);
        assert!(matches!(read_transcript(garbled.as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_transcript("".as_bytes()), Err(Error::Parse(_))));
    }
}
