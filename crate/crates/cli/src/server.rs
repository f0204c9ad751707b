//! TCP verifier: one thread per prover connection, all CRP consumption
//! funneled through a single mutex-guarded database.
//!
//! Session lifecycle on the wire: HELLO exchange, `AUTH_BEGIN` + the
//! challenge list, the prover's counts in strict index order, one RESULT.
//! Anything malformed, out of order, or slower than the per-message
//! timeout gets an ERROR and a closed socket; the CRPs issued to that
//! session stay consumed, which is what makes an aborted session useless
//! to an adversary.

use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::SeedableRng as _;

use spuf_core::error::{Error, Result};
use spuf_core::protocol::CrpDatabase;
use spuf_core::rng;
use spuf_core::stats::binom::DecisionRule;

use crate::wire::{encode, read_message, WireMessage, PROTOCOL_VERSION};

/// Verifier-side knobs.
#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub key_length: usize,
    pub rule: DecisionRule,
    /// Per-message read/write timeout.
    pub timeout: Duration,
    /// Session sampling seed; `None` draws from OS entropy.
    pub seed: Option<u64>,
}

/// Shared verifier state handed to each connection thread.
pub struct Verifier {
    db: Mutex<CrpDatabase>,
    rng: Mutex<rng::Rng>,
    opts: ServeOptions,
}

impl Verifier {
    pub fn new(db: CrpDatabase, opts: ServeOptions) -> Self {
        let rng = match opts.seed {
            Some(s) => rng::seeded(s),
            None => rng::Rng::from_entropy(),
        };
        Verifier {
            db: Mutex::new(db),
            rng: Mutex::new(rng),
            opts,
        }
    }

    pub fn unconsumed_len(&self) -> usize {
        self.db.lock().expect("database lock").unconsumed_len()
    }

    /// Accept loop; runs until the listener errors out (or forever).
    pub fn serve(self: &Arc<Self>, listener: TcpListener) -> std::io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let verifier = Arc::clone(self);
            std::thread::spawn(move || {
                let peer = stream
                    .peer_addr()
                    .map(|a| a.to_string())
                    .unwrap_or_else(|_| "?".into());
                if let Err(e) = verifier.handle(stream) {
                    eprintln!("session with {peer}: {e}");
                }
            });
        }
        Ok(())
    }

    fn send(stream: &mut TcpStream, msg: &WireMessage) -> Result<()> {
        stream.write_all(encode(msg)?.as_bytes())?;
        Ok(())
    }

    fn send_error(stream: &mut TcpStream, reason: &str) {
        // Best effort: the peer may already be gone.
        let reason = reason.replace(['\t', '\n', '\r'], " ");
        let _ = Self::send(
            stream,
            &WireMessage::Error {
                reason: if reason.is_empty() {
                    "internal error".into()
                } else {
                    reason
                },
            },
        );
        let _ = stream.shutdown(std::net::Shutdown::Both);
    }

    /// Runs one wire session. The outer error is reported to the peer as an
    /// ERROR frame before the socket drops.
    pub fn handle(&self, mut stream: TcpStream) -> Result<()> {
        stream.set_read_timeout(Some(self.opts.timeout))?;
        stream.set_write_timeout(Some(self.opts.timeout))?;
        let mut reader = BufReader::new(stream.try_clone()?);

        match self.session(&mut stream, &mut reader) {
            Ok(()) => Ok(()),
            Err(e) => {
                let reason = match &e {
                    Error::Io(io)
                        if matches!(
                            io.kind(),
                            std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                        ) =>
                    {
                        "timeout waiting for peer".to_string()
                    }
                    other => other.to_string(),
                };
                Self::send_error(&mut stream, &reason);
                Err(e)
            }
        }
    }

    fn session(&self, stream: &mut TcpStream, reader: &mut BufReader<TcpStream>) -> Result<()> {
        match read_message(reader)? {
            WireMessage::Hello {
                version: PROTOCOL_VERSION,
            } => {}
            WireMessage::Hello { version } => {
                return Err(Error::Format(format!(
                    "unsupported protocol version {version}"
                )))
            }
            other => {
                return Err(Error::Format(format!(
                    "expected HELLO, got {other:?}"
                )))
            }
        }
        Self::send(
            stream,
            &WireMessage::Hello {
                version: PROTOCOL_VERSION,
            },
        )?;

        // Consumption (and its persistence, when the database is bound to a
        // file) happens here, before any challenge goes out.
        let mut session = {
            let mut db = self.db.lock().expect("database lock");
            let mut rng = self.rng.lock().expect("rng lock");
            db.open_session(self.opts.key_length, &mut rng)?
        };

        Self::send(
            stream,
            &WireMessage::AuthBegin {
                session_id: session.session_id().to_string(),
                key_length: session.key_length(),
            },
        )?;
        for (idx, hex) in session.challenges_hex().iter().enumerate() {
            Self::send(
                stream,
                &WireMessage::Challenge {
                    idx,
                    challenge_hex: hex.clone(),
                },
            )?;
        }

        let mut counts = Vec::with_capacity(session.key_length());
        for expected_idx in 0..session.key_length() {
            match read_message(reader)? {
                WireMessage::Count { idx, count } if idx == expected_idx => {
                    counts.push(count as f64);
                }
                WireMessage::Count { idx, .. } => {
                    return Err(Error::Format(format!(
                        "count index {idx} out of order, expected {expected_idx}"
                    )))
                }
                other => {
                    return Err(Error::Format(format!(
                        "expected COUNT, got {other:?}"
                    )))
                }
            }
        }

        let (verdict, hd) = session.verify(&counts, &self.opts.rule)?;
        Self::send(
            stream,
            &WireMessage::Result {
                accept: verdict == spuf_core::protocol::Verdict::Accept,
                hd,
            },
        )?;
        let _ = stream.shutdown(std::net::Shutdown::Both);
        Ok(())
    }
}
