//! TCP prover: connects to a verifier, measures the issued challenges on a
//! local PUF, and streams the photon counts back.
//!
//! The scripted misbehaviors (random counts, truncation, stalling) exist so
//! tests can exercise the verifier's rejection and error paths with the
//! same client code path a real prover uses.

use std::io::{BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use rand::Rng as _;

use spuf_core::challenge::decode_challenge;
use spuf_core::error::{Error, Result};
use spuf_core::measurement::{respond, DetectorConfig};
use spuf_core::puf::PufInstance;
use spuf_core::rng;

use crate::wire::{encode, read_message, WireMessage, PROTOCOL_VERSION};

/// How the prover answers the challenge list.
#[derive(Debug, Clone, Copy)]
pub enum ProverBehavior {
    /// Measure every challenge on the PUF.
    Genuine,
    /// Answer uniform garbage in [0, 2 * mean photons).
    RandomCounts,
    /// Answer the first `n` counts genuinely, then drop the connection.
    TruncateAt(usize),
    /// Receive the challenges, send nothing, and wait for the peer to act.
    Stall,
}

/// What came back from one session attempt.
#[derive(Debug, Clone)]
pub struct ProveOutcome {
    pub session_id: String,
    /// Verifier verdict, when the session reached RESULT.
    pub result: Option<(bool, f64)>,
    /// ERROR reason or transport failure, when it did not.
    pub error: Option<String>,
    /// Content-hash ids of every challenge the verifier issued.
    pub challenge_ids: Vec<String>,
}

impl ProveOutcome {
    pub fn accepted(&self) -> bool {
        matches!(self.result, Some((true, _)))
    }
}

/// Runs one session against the verifier at `stream`.
///
/// `puf` may be omitted only for non-genuine behaviors; `seed` fixes the
/// measurement noise so reruns are reproducible.
pub fn prove(
    stream: TcpStream,
    puf: Option<&PufInstance>,
    detector: &DetectorConfig,
    seed: u64,
    behavior: ProverBehavior,
    timeout: Duration,
) -> Result<ProveOutcome> {
    let mut stream = stream;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    let mut reader = BufReader::new(stream.try_clone()?);

    let send = |stream: &mut TcpStream, msg: &WireMessage| -> Result<()> {
        stream.write_all(encode(msg)?.as_bytes())?;
        Ok(())
    };

    send(
        &mut stream,
        &WireMessage::Hello {
            version: PROTOCOL_VERSION,
        },
    )?;
    match read_message(&mut reader)? {
        WireMessage::Hello {
            version: PROTOCOL_VERSION,
        } => {}
        WireMessage::Error { reason } => {
            return Ok(ProveOutcome {
                session_id: String::new(),
                result: None,
                error: Some(reason),
                challenge_ids: Vec::new(),
            })
        }
        other => {
            return Err(Error::Format(format!(
                "expected HELLO from verifier, got {other:?}"
            )))
        }
    }

    let (session_id, key_length) = match read_message(&mut reader)? {
        WireMessage::AuthBegin {
            session_id,
            key_length,
        } => (session_id, key_length),
        WireMessage::Error { reason } => {
            return Ok(ProveOutcome {
                session_id: String::new(),
                result: None,
                error: Some(reason),
                challenge_ids: Vec::new(),
            })
        }
        other => {
            return Err(Error::Format(format!(
                "expected AUTH_BEGIN, got {other:?}"
            )))
        }
    };
    if key_length == 0 {
        return Err(Error::Format("verifier announced an empty session".into()));
    }

    let mut challenges = Vec::with_capacity(key_length);
    let mut challenge_ids = Vec::with_capacity(key_length);
    for expected_idx in 0..key_length {
        match read_message(&mut reader)? {
            WireMessage::Challenge { idx, challenge_hex } if idx == expected_idx => {
                let m = challenge_hex.len() * 4;
                let challenge = decode_challenge(&challenge_hex, m)?;
                if let Some(p) = puf {
                    if p.segment_count() != m {
                        return Err(Error::DimensionMismatch {
                            expected: p.segment_count(),
                            got: m,
                        });
                    }
                }
                challenge_ids.push(challenge.id().to_string());
                challenges.push(challenge);
            }
            other => {
                return Err(Error::Format(format!(
                    "expected CHALLENGE {expected_idx}, got {other:?}"
                )))
            }
        }
    }

    let outcome_err = |session_id: String, ids: Vec<String>, error: String| ProveOutcome {
        session_id,
        result: None,
        error: Some(error),
        challenge_ids: ids,
    };

    let counts: Vec<u64> = match behavior {
        ProverBehavior::Genuine | ProverBehavior::TruncateAt(_) => {
            let puf = puf.ok_or_else(|| Error::invalid("genuine prover needs a PUF"))?;
            challenges
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut r = rng::substream(seed, i as u64);
                    Ok(respond(puf, c, detector, &mut r)?.photon_count)
                })
                .collect::<Result<_>>()?
        }
        ProverBehavior::RandomCounts => {
            let mut r = rng::seeded(seed);
            let hi = (2.0 * detector.mean_photon_target).max(2.0) as u64;
            (0..key_length).map(|_| r.gen_range(0..hi)).collect()
        }
        ProverBehavior::Stall => {
            // Never send counts; surface whatever the verifier does.
            let error = match read_message(&mut reader) {
                Ok(WireMessage::Error { reason }) => reason,
                Ok(other) => format!("unexpected frame while stalling: {other:?}"),
                Err(e) => e.to_string(),
            };
            return Ok(outcome_err(session_id, challenge_ids, error));
        }
    };

    let send_up_to = match behavior {
        ProverBehavior::TruncateAt(n) => n.min(counts.len()),
        _ => counts.len(),
    };
    for (idx, &count) in counts.iter().take(send_up_to).enumerate() {
        send(&mut stream, &WireMessage::Count { idx, count })?;
    }
    if matches!(behavior, ProverBehavior::TruncateAt(_)) {
        // Half-close: the verifier sees EOF where a COUNT should be.
        stream.shutdown(std::net::Shutdown::Write)?;
    }

    match read_message(&mut reader) {
        Ok(WireMessage::Result { accept, hd }) => Ok(ProveOutcome {
            session_id,
            result: Some((accept, hd)),
            error: None,
            challenge_ids,
        }),
        Ok(WireMessage::Error { reason }) => Ok(outcome_err(session_id, challenge_ids, reason)),
        Ok(other) => Err(Error::Format(format!(
            "expected RESULT, got {other:?}"
        ))),
        Err(e) => Ok(outcome_err(session_id, challenge_ids, e.to_string())),
    }
}
