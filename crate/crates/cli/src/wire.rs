//! Line-oriented authentication wire format.
//!
//! One message per LF-terminated UTF-8 line, fields separated by single
//! tabs; field values themselves may contain neither tabs nor newlines.
//! Counts are plain integers and challenges ride the hex codec, so the
//! whole exchange is printable and greppable.

use std::io::BufRead;

use spuf_core::error::{Error, Result};

/// Version tag exchanged in HELLO.
pub const PROTOCOL_VERSION: u32 = 1;

/// Every frame the verifier or prover may send.
#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Hello { version: u32 },
    AuthBegin { session_id: String, key_length: usize },
    Challenge { idx: usize, challenge_hex: String },
    Count { idx: usize, count: u64 },
    Result { accept: bool, hd: f64 },
    Error { reason: String },
}

fn check_field(value: &str) -> Result<()> {
    if value.is_empty() {
        return Err(Error::Format("empty wire field".into()));
    }
    if value.contains('\t') || value.contains('\n') || value.contains('\r') {
        return Err(Error::Format("wire field contains framing byte".into()));
    }
    Ok(())
}

/// Renders a message as its LF-terminated line.
pub fn encode(msg: &WireMessage) -> Result<String> {
    let line = match msg {
        WireMessage::Hello { version } => format!("HELLO\t{version}"),
        WireMessage::AuthBegin {
            session_id,
            key_length,
        } => {
            check_field(session_id)?;
            format!("AUTH_BEGIN\t{session_id}\t{key_length}")
        }
        WireMessage::Challenge { idx, challenge_hex } => {
            check_field(challenge_hex)?;
            format!("CHALLENGE\t{idx}\t{challenge_hex}")
        }
        WireMessage::Count { idx, count } => format!("COUNT\t{idx}\t{count}"),
        WireMessage::Result { accept, hd } => {
            if !hd.is_finite() || !(0.0..=1.0).contains(hd) {
                return Err(Error::Format(format!("distance {hd} outside [0, 1]")));
            }
            let verdict = if *accept { "ACCEPT" } else { "REJECT" };
            format!("RESULT\t{verdict}\t{hd}")
        }
        WireMessage::Error { reason } => {
            check_field(reason)?;
            format!("ERROR\t{reason}")
        }
    };
    Ok(line + "\n")
}

/// Parses one line (trailing newline optional). Strict: exact field count,
/// no empty fields, numeric fields must parse completely.
pub fn decode(line: &str) -> Result<WireMessage> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let fields: Vec<&str> = line.split('\t').collect();
    let bad = |what: &str| Error::Format(format!("bad {what} in wire line: {line:?}"));
    let msg = match fields.as_slice() {
        ["HELLO", v] => WireMessage::Hello {
            version: v.parse().map_err(|_| bad("version"))?,
        },
        ["AUTH_BEGIN", sid, l] => WireMessage::AuthBegin {
            session_id: (*sid).to_string(),
            key_length: l.parse().map_err(|_| bad("key length"))?,
        },
        ["CHALLENGE", idx, hex] => WireMessage::Challenge {
            idx: idx.parse().map_err(|_| bad("index"))?,
            challenge_hex: (*hex).to_string(),
        },
        ["COUNT", idx, n] => WireMessage::Count {
            idx: idx.parse().map_err(|_| bad("index"))?,
            count: n.parse().map_err(|_| bad("count"))?,
        },
        ["RESULT", verdict, hd] => {
            let accept = match *verdict {
                "ACCEPT" => true,
                "REJECT" => false,
                _ => return Err(bad("verdict")),
            };
            let hd: f64 = hd.parse().map_err(|_| bad("distance"))?;
            if !hd.is_finite() || !(0.0..=1.0).contains(&hd) {
                return Err(bad("distance"));
            }
            WireMessage::Result { accept, hd }
        }
        ["ERROR", reason] => WireMessage::Error {
            reason: (*reason).to_string(),
        },
        _ => return Err(Error::Format(format!("unrecognized wire line: {line:?}"))),
    };
    // Round-trip the field checks so decode accepts exactly what encode
    // can produce.
    encode(&msg)?;
    Ok(msg)
}

/// Reads the next frame off a buffered stream. EOF is a format error: the
/// peer hung up mid-session.
pub fn read_message<R: BufRead>(reader: &mut R) -> Result<WireMessage> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 {
        return Err(Error::Format("connection closed".into()));
    }
    decode(&line)
}
