//! Enrollment and verification over a one-time-pad CRP database.
//!
//! Challenge-response pairs are burned the moment a session issues them,
//! before any challenge leaves the verifier, and the consumption is made
//! durable first when the database is bound to a file. An adversary who
//! aborts sessions therefore cannot farm responses, and a verifier crash
//! never resurrects an issued challenge.
//!
//! Verification never reuses the enrollment median: the candidate key is
//! thresholded against the median of its own session counts, which is what
//! makes the comparison immune to intensity drift between enrollment and
//! verification hardware.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::challenge::{decode_challenge, encode_challenge, Challenge};
use crate::error::{Error, Result};
use crate::keygen::{extract_bits, median_threshold, GuardBand, ThresholdSpec};
use crate::rng;
use crate::stats::binom::DecisionRule;
use crate::stats::hamming_bits;

const DB_MAGIC: &str = "SPUF-CRPDB";
const DB_VERSION: &str = "1";

/// One enrolled challenge-response pair.
#[derive(Debug, Clone)]
pub struct CrpRecord {
    pub challenge_id: String,
    pub challenge_hex: String,
    pub response_bit: bool,
    pub consumed: bool,
    pub enrolled_at: String,
}

/// The verifier's store of enrolled pairs.
///
/// Unconsumed records sit in a free list so sampling a session is O(L)
/// regardless of how much of the database is already burned; a scan of
/// millions of records per session would dominate the protocol otherwise.
#[derive(Debug)]
pub struct CrpDatabase {
    segment_count: usize,
    records: Vec<CrpRecord>,
    by_id: HashMap<String, usize>,
    unconsumed: Vec<usize>,
    path: Option<PathBuf>,
}

impl CrpDatabase {
    pub fn new(segment_count: usize) -> Result<Self> {
        if segment_count < 2 || segment_count % 2 != 0 {
            return Err(Error::OddSegmentCount(segment_count));
        }
        Ok(CrpDatabase {
            segment_count,
            records: Vec::new(),
            by_id: HashMap::new(),
            unconsumed: Vec::new(),
            path: None,
        })
    }

    /// Measures `count` distinct challenges through the oracle, thresholds
    /// them at the batch median with the guard band, and stores the kept
    /// pairs. Nothing is stored if any measurement fails.
    ///
    /// Challenges repeating an already-seen id are skipped, not remeasured:
    /// a duplicate would otherwise enroll the same challenge under two
    /// noise draws and hand an impostor a free collision.
    pub fn enroll<M, I>(measure: M, challenges: I, count: usize, guard: GuardBand) -> Result<Self>
    where
        M: FnMut(&Challenge) -> Result<f64>,
        I: IntoIterator<Item = Challenge>,
    {
        if count == 0 {
            return Err(Error::invalid("enrollment count must be at least 1"));
        }
        let mut measure = measure;
        let mut batch: Vec<Challenge> = Vec::with_capacity(count);
        let mut counts: Vec<f64> = Vec::with_capacity(count);
        let mut seen: HashMap<String, ()> = HashMap::with_capacity(count);
        let mut segment_count = None;

        for c in challenges {
            if batch.len() == count {
                break;
            }
            match segment_count {
                None => segment_count = Some(c.len()),
                Some(m) if m != c.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: c.len(),
                    })
                }
                _ => {}
            }
            if seen.insert(c.id().to_string(), ()).is_some() {
                continue;
            }
            counts.push(measure(&c)?);
            batch.push(c);
        }
        if batch.len() < count {
            return Err(Error::StreamExhausted {
                needed: count,
                got: batch.len(),
            });
        }

        let median = median_threshold(&counts)?;
        let spec = ThresholdSpec::new(median, guard.delta_for(median))?;
        let (bits, kept) = extract_bits(&counts, &spec);

        let mut db = CrpDatabase::new(segment_count.expect("count >= 1"))?;
        let stamp = now_utc();
        for i in 0..batch.len() {
            if !kept[i] {
                continue;
            }
            let rec = CrpRecord {
                challenge_id: batch[i].id().to_string(),
                challenge_hex: encode_challenge(&batch[i]),
                response_bit: bits[i],
                consumed: false,
                enrolled_at: stamp.clone(),
            };
            db.push_record(rec)?;
        }
        Ok(db)
    }

    fn push_record(&mut self, rec: CrpRecord) -> Result<()> {
        if self.by_id.contains_key(&rec.challenge_id) {
            return Err(Error::Format(format!(
                "duplicate challenge id {}",
                rec.challenge_id
            )));
        }
        let pos = self.records.len();
        self.by_id.insert(rec.challenge_id.clone(), pos);
        if !rec.consumed {
            self.unconsumed.push(pos);
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn unconsumed_len(&self) -> usize {
        self.unconsumed.len()
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn records(&self) -> &[CrpRecord] {
        &self.records
    }

    pub fn get(&self, challenge_id: &str) -> Option<&CrpRecord> {
        self.by_id.get(challenge_id).map(|&i| &self.records[i])
    }

    /// Binds the database to a file; subsequent consumption is persisted
    /// there before challenges are issued.
    pub fn bind(&mut self, path: impl Into<PathBuf>) {
        self.path = Some(path.into());
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Atomic save: full rewrite into a temp file in the destination
    /// directory, fsync, rename over the target, then best-effort directory
    /// fsync so the rename itself is durable.
    pub fn save(&self) -> Result<()> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| Error::invalid("database is not bound to a file"))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        writeln!(
            tmp,
            "{DB_MAGIC} {DB_VERSION} m={}",
            self.segment_count
        )?;
        for r in &self.records {
            writeln!(
                tmp,
                "{} {} {} {} {}",
                r.challenge_id,
                r.challenge_hex,
                r.response_bit as u8,
                r.consumed as u8,
                r.enrolled_at
            )?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        if let Ok(d) = std::fs::File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    /// Loads and fully validates a database file; every record's id must be
    /// the content hash of its challenge.
    pub fn load(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let text = std::fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty database file".into()))?;
        let fields: Vec<&str> = header.split(' ').collect();
        let m = match fields.as_slice() {
            [DB_MAGIC, DB_VERSION, m_field] => m_field
                .strip_prefix("m=")
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| Error::Format(format!("bad header field {m_field}")))?,
            _ => return Err(Error::Format(format!("bad database header: {header}"))),
        };
        let mut db = CrpDatabase::new(m)?;
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(' ').collect();
            let [id, chex, bit, consumed, stamp] = fields.as_slice() else {
                return Err(Error::Format(format!(
                    "record line {} has {} fields, want 5",
                    lineno + 2,
                    fields.len()
                )));
            };
            let challenge = decode_challenge(chex, m)?;
            if challenge.id() != *id {
                return Err(Error::Format(format!(
                    "challenge id mismatch on line {}",
                    lineno + 2
                )));
            }
            let response_bit = match *bit {
                "0" => false,
                "1" => true,
                other => return Err(Error::Format(format!("bad bit value {other}"))),
            };
            let consumed = match *consumed {
                "0" => false,
                "1" => true,
                other => return Err(Error::Format(format!("bad consumed flag {other}"))),
            };
            if chrono::DateTime::parse_from_rfc3339(stamp).is_err() {
                return Err(Error::Format(format!("bad timestamp {stamp}")));
            }
            db.push_record(CrpRecord {
                challenge_id: id.to_string(),
                challenge_hex: chex.to_string(),
                response_bit,
                consumed,
                enrolled_at: stamp.to_string(),
            })?;
        }
        db.path = Some(path);
        Ok(db)
    }

    /// Draws `key_length` unconsumed records uniformly at random, marks them
    /// consumed, persists (when bound), and only then hands out the session.
    /// The failure path leaves the database exactly as it was.
    pub fn open_session(&mut self, key_length: usize, rng: &mut rng::Rng) -> Result<AuthSession> {
        if key_length == 0 {
            return Err(Error::invalid("session key length must be at least 1"));
        }
        if self.unconsumed.len() < key_length {
            return Err(Error::DatabaseExhausted {
                requested: key_length,
                available: self.unconsumed.len(),
            });
        }
        let mut picks = Vec::with_capacity(key_length);
        for _ in 0..key_length {
            let j = rng.gen_range(0..self.unconsumed.len());
            let pos = self.unconsumed.swap_remove(j);
            self.records[pos].consumed = true;
            picks.push(pos);
        }
        if self.path.is_some() {
            if let Err(e) = self.save() {
                // Roll the consumption back; the session never existed.
                for &pos in &picks {
                    self.records[pos].consumed = false;
                    self.unconsumed.push(pos);
                }
                return Err(e);
            }
        }

        let mut session_id = [0u8; 16];
        rng.fill(&mut session_id);
        Ok(AuthSession {
            session_id: hex::encode(session_id),
            challenge_ids: picks
                .iter()
                .map(|&p| self.records[p].challenge_id.clone())
                .collect(),
            challenges_hex: picks
                .iter()
                .map(|&p| self.records[p].challenge_hex.clone())
                .collect(),
            expected_key: picks.iter().map(|&p| self.records[p].response_bit).collect(),
            verdict: Verdict::Pending,
            measured_hd: None,
        })
    }
}

fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Session outcome; a session decides at most once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pending,
    Accept,
    Reject,
}

/// One authentication attempt: the issued challenges and the enrolled key
/// bits in issue order.
#[derive(Debug, Clone)]
pub struct AuthSession {
    session_id: String,
    challenge_ids: Vec<String>,
    challenges_hex: Vec<String>,
    expected_key: Vec<bool>,
    verdict: Verdict,
    measured_hd: Option<f64>,
}

impl AuthSession {
    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn key_length(&self) -> usize {
        self.expected_key.len()
    }

    pub fn challenge_ids(&self) -> &[String] {
        &self.challenge_ids
    }

    pub fn challenges_hex(&self) -> &[String] {
        &self.challenges_hex
    }

    pub fn expected_key(&self) -> &[bool] {
        &self.expected_key
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    pub fn measured_hd(&self) -> Option<f64> {
        self.measured_hd
    }

    /// Thresholds the prover's counts at their own median, compares against
    /// the enrolled key, and finalizes the verdict. Accepts exactly when the
    /// mismatch count is within the rule's budget.
    pub fn verify(&mut self, counts: &[f64], rule: &DecisionRule) -> Result<(Verdict, f64)> {
        if self.verdict != Verdict::Pending {
            return Err(Error::SessionFinalized);
        }
        if counts.len() != self.expected_key.len() {
            return Err(Error::DimensionMismatch {
                expected: self.expected_key.len(),
                got: counts.len(),
            });
        }
        if rule.key_length() != self.expected_key.len() {
            return Err(Error::invalid(format!(
                "decision rule is for {}-bit keys, session has {}",
                rule.key_length(),
                self.expected_key.len()
            )));
        }
        let median = median_threshold(counts)?;
        let spec = ThresholdSpec::new(median, 0.0)?;
        let (candidate, _) = extract_bits(counts, &spec);
        let mismatches = hamming_bits(&self.expected_key, &candidate)?;
        let hd = mismatches as f64 / self.expected_key.len() as f64;
        self.verdict = if rule.accepts(mismatches) {
            Verdict::Accept
        } else {
            Verdict::Reject
        };
        self.measured_hd = Some(hd);
        Ok((self.verdict, hd))
    }
}
