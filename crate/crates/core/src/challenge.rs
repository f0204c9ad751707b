//! Balanced binary challenges and their hex codec.
//!
//! A challenge is the mirror pattern presented to the PUF: a length-`m`
//! binary vector with exactly `m/2` ones. Keeping the population count fixed
//! pins the total illuminated power, so photon counts differ between
//! challenges only through interference, not through how many segments are
//! lit. Everything downstream treats an unbalanced vector as a hard error.

use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A balanced binary challenge plus its content-derived identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    challenge_id: String,
    bits: Vec<bool>,
}

impl Challenge {
    /// Builds a challenge from bits, enforcing the balance invariant.
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.len() < 2 || bits.len() % 2 != 0 {
            return Err(Error::OddSegmentCount(bits.len()));
        }
        let ones = bits.iter().filter(|&&b| b).count();
        if ones != bits.len() / 2 {
            return Err(Error::invalid(format!(
                "challenge must have exactly {} ones, got {}",
                bits.len() / 2,
                ones
            )));
        }
        Ok(Self::from_bits_unchecked(bits))
    }

    /// Test-only escape hatch that skips the balance check. Needed to probe
    /// detector behavior on degenerate patterns (e.g. the all-dark mirror).
    pub(crate) fn from_bits_unchecked(bits: Vec<bool>) -> Self {
        let challenge_id = hex::encode(Sha256::digest(pack_bits(&bits)));
        Challenge { challenge_id, bits }
    }

    /// Content hash of the packed bits; stable identity for CRP bookkeeping.
    pub fn id(&self) -> &str {
        &self.challenge_id
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Draws a challenge uniformly from all length-`m` vectors with `m/2` ones.
pub fn generate_challenge(rng: &mut crate::rng::Rng, m: usize) -> Result<Challenge> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::OddSegmentCount(m));
    }
    let mut bits = vec![false; m];
    for b in bits.iter_mut().take(m / 2) {
        *b = true;
    }
    // Fisher-Yates; uniform over the C(m, m/2) balanced arrangements.
    for i in (1..m).rev() {
        let j = rng.gen_range(0..=i);
        bits.swap(i, j);
    }
    Ok(Challenge::from_bits_unchecked(bits))
}

/// Per-position Shannon entropy (bits) of the 1-frequency across a set of
/// equally long challenges.
pub fn challenge_bit_entropy(challenges: &[Challenge]) -> Result<Vec<f64>> {
    let first = challenges.first().ok_or(Error::EmptyInput("challenges"))?;
    let m = first.len();
    for c in challenges {
        if c.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: c.len(),
            });
        }
    }
    let n = challenges.len() as f64;
    let mut entropy = Vec::with_capacity(m);
    for k in 0..m {
        let ones = challenges.iter().filter(|c| c.bits[k]).count() as f64;
        entropy.push(binary_entropy(ones / n));
    }
    Ok(entropy)
}

/// H(p) in bits, with H(0) = H(1) = 0.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// log2 of the number of balanced challenges of length `m`, i.e.
/// log2 C(m, m/2). Evaluated through the log-gamma function so it works far
/// beyond what fits in an integer.
pub fn challenge_space_log2(m: usize) -> Result<f64> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::OddSegmentCount(m));
    }
    let ln_c = statrs::function::gamma::ln_gamma(m as f64 + 1.0)
        - 2.0 * statrs::function::gamma::ln_gamma(m as f64 / 2.0 + 1.0);
    Ok(ln_c / std::f64::consts::LN_2)
}

/// Packs bits big-endian within bytes, zero-padded to ceil(len/8) bytes.
pub(crate) fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b {
            bytes[k / 8] |= 1 << (7 - (k % 8));
        }
    }
    bytes
}

pub(crate) fn unpack_bits(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len)
        .map(|k| bytes[k / 8] & (1 << (7 - (k % 8))) != 0)
        .collect()
}

/// Lowercase hex of the packed bits; the wire and CRP-file representation.
pub fn encode_challenge(c: &Challenge) -> String {
    hex::encode(pack_bits(&c.bits))
}

/// Inverse of [`encode_challenge`]. Rejects wrong length, set padding bits,
/// and unbalanced vectors.
pub fn decode_challenge(hex_str: &str, m: usize) -> Result<Challenge> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::OddSegmentCount(m));
    }
    let expected_bytes = m.div_ceil(8);
    let bytes = hex::decode(hex_str)
        .map_err(|e| Error::Format(format!("challenge hex: {e}")))?;
    if bytes.len() != expected_bytes {
        return Err(Error::Format(format!(
            "challenge hex length: expected {} bytes, got {}",
            expected_bytes,
            bytes.len()
        )));
    }
    // Padding bits beyond position m-1 must be zero or the encoding is not
    // canonical (two encodings would map to one challenge).
    for k in m..expected_bytes * 8 {
        if bytes[k / 8] & (1 << (7 - (k % 8))) != 0 {
            return Err(Error::Format("nonzero padding bits".into()));
        }
    }
    Challenge::from_bits(unpack_bits(&bytes, m))
}
