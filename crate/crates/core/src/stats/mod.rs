//! Statistics: Hamming-distance ensembles, the binomial mismatch model and
//! its error rates, reduction sweeps, and a randomness-test battery.

pub mod binom;
pub mod nist;
pub mod sim;
pub mod sweep;

pub use binom::{far_frr, far_frr_at, intersect_xc, DecisionRule};
pub use nist::{battery_blocks, run_battery, BatteryRow, TestOutcome, TestResult};
pub use sim::{
    simulate_inter_ensemble, simulate_inter_same_puf_ensemble, simulate_intra_ensemble,
    SimContext,
};
pub use sweep::{knee_of, reduction_sweep, write_sweep_csv, SweepAxis, SweepPoint};

use crate::error::{Error, Result};
use crate::keygen::BinaryKey;

/// Which comparison produced a Hamming-distance sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdKind {
    /// Repeated measurements of one PUF on one challenge set.
    Intra,
    /// Different PUFs, same challenge set.
    InterSameChallenge,
    /// One PUF, disjoint challenge sets.
    InterSamePuf,
}

/// One normalized Hamming distance between two L-bit keys.
#[derive(Debug, Clone, Copy)]
pub struct HdSample {
    pub normalized_hd: f64,
    pub key_length: usize,
    pub kind: HdKind,
}

impl HdSample {
    pub fn new(normalized_hd: f64, key_length: usize, kind: HdKind) -> Result<Self> {
        if key_length == 0 {
            return Err(Error::ZeroCells);
        }
        let scaled = normalized_hd * key_length as f64;
        if (scaled - scaled.round()).abs() > 1e-9 || !(0.0..=1.0).contains(&normalized_hd) {
            return Err(Error::invalid(format!(
                "normalized HD {normalized_hd} is not a multiple of 1/{key_length}"
            )));
        }
        Ok(HdSample {
            normalized_hd,
            key_length,
            kind,
        })
    }

    pub fn from_mismatches(mismatches: usize, key_length: usize, kind: HdKind) -> Result<Self> {
        if key_length == 0 {
            return Err(Error::ZeroCells);
        }
        if mismatches > key_length {
            return Err(Error::invalid("mismatch count exceeds key length"));
        }
        Ok(HdSample {
            normalized_hd: mismatches as f64 / key_length as f64,
            key_length,
            kind,
        })
    }
}

/// Number of differing positions between two equal-length bit strings.
pub fn hamming_bits(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("hamming distance of empty strings"));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Fraction of differing bits between two keys.
pub fn hamming_normalized(a: &BinaryKey, b: &BinaryKey) -> Result<f64> {
    let d = hamming_bits(a.bits(), b.bits())?;
    Ok(d as f64 / a.len() as f64)
}

/// An HD ensemble with its first two moments (sample variance).
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub samples: Vec<HdSample>,
    pub mean: f64,
    pub variance: f64,
}

impl EnsembleStats {
    fn from_samples(samples: Vec<HdSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("ensemble needs at least 2 HD samples"));
        }
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.normalized_hd).sum::<f64>() / n;
        let variance = samples
            .iter()
            .map(|s| (s.normalized_hd - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        Ok(EnsembleStats {
            samples,
            mean,
            variance,
        })
    }
}

/// All pairwise normalized HDs among the given keys.
pub fn hd_ensemble(keys: &[BinaryKey], kind: HdKind) -> Result<EnsembleStats> {
    if keys.len() < 2 {
        return Err(Error::invalid("ensemble needs at least 2 keys"));
    }
    let l = keys[0].len();
    let mut samples = Vec::with_capacity(keys.len() * (keys.len() - 1) / 2);
    for i in 0..keys.len() {
        for j in (i + 1)..keys.len() {
            let d = hamming_bits(keys[i].bits(), keys[j].bits())?;
            samples.push(HdSample::from_mismatches(d, l, kind)?);
        }
    }
    EnsembleStats::from_samples(samples)
}

/// Binomial model of the mismatch count: Binomial(key_length, p) scaled to
/// normalized distance.
#[derive(Debug, Clone, Copy)]
pub struct BinomialFit {
    pub p: f64,
    pub key_length: usize,
}

impl BinomialFit {
    /// True when the fitted proportion sits on the boundary, where the
    /// binomial model carries no information.
    pub fn is_degenerate(&self) -> bool {
        self.p <= 0.0 || self.p >= 1.0
    }

    /// Decision rule at the crossing between this (genuine) fit and an
    /// impostor fit over the same key length.
    pub fn intersect(&self, impostor: &BinomialFit) -> Result<DecisionRule> {
        if self.key_length != impostor.key_length {
            return Err(Error::DimensionMismatch {
                expected: self.key_length,
                got: impostor.key_length,
            });
        }
        intersect_xc(self.p, impostor.p, self.key_length)
    }
}

/// Proportion-MLE fit: p is the mean normalized distance.
pub fn fit_binomial(samples: &[HdSample]) -> Result<BinomialFit> {
    if samples.len() < 10 {
        return Err(Error::invalid(format!(
            "binomial fit needs >= 10 samples, got {}",
            samples.len()
        )));
    }
    let l = samples[0].key_length;
    if samples.iter().any(|s| s.key_length != l) {
        return Err(Error::invalid("HD samples mix different key lengths"));
    }
    let p = samples.iter().map(|s| s.normalized_hd).sum::<f64>() / samples.len() as f64;
    Ok(BinomialFit { p, key_length: l })
}

/// How many independent bits the observed spread is worth: p(1-p)/var.
/// Near the nominal length means the bits behave independently.
pub fn effective_length(fit: &BinomialFit, variance: f64) -> Result<f64> {
    if fit.is_degenerate() {
        return Err(Error::DegenerateFit(format!(
            "proportion {} admits no length estimate",
            fit.p
        )));
    }
    if !(variance > 0.0) {
        return Err(Error::invalid("variance must be positive"));
    }
    Ok(fit.p * (1.0 - fit.p) / variance)
}
