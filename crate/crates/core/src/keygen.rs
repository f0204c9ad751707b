//! Median-threshold key extraction.
//!
//! A key bit is the comparison of a photon count against the session median,
//! so the key is invariant under any common rescaling of the counts (laser
//! power drift between sessions cancels). An optional guard band discards
//! counts too close to the median at enrollment, trading challenges for bit
//! stability.

use crate::challenge::{pack_bits, Challenge};
use crate::error::{Error, Result};
use crate::measurement::{respond, DetectorConfig};
use crate::puf::PufInstance;
use crate::rng;

/// Comparison threshold plus guard half-width, both in counts.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdSpec {
    threshold: f64,
    guard_delta: f64,
}

impl ThresholdSpec {
    pub fn new(threshold: f64, guard_delta: f64) -> Result<Self> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::invalid("threshold must be positive and finite"));
        }
        if !(0.0..threshold).contains(&guard_delta) {
            return Err(Error::invalid(
                "guard delta must satisfy 0 <= delta < threshold",
            ));
        }
        Ok(ThresholdSpec {
            threshold,
            guard_delta,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn guard_delta(&self) -> f64 {
        self.guard_delta
    }
}

/// Guard-band policy for enrollment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuardBand {
    /// Keep every bit.
    Off,
    /// Discard counts within an absolute distance of the median.
    Counts(f64),
    /// Discard counts within `fraction * median` of the median.
    FractionOfMedian(f64),
}

impl GuardBand {
    /// Guard half-width in counts for a given median.
    pub fn delta_for(&self, median: f64) -> f64 {
        match *self {
            GuardBand::Off => 0.0,
            GuardBand::Counts(d) => d,
            GuardBand::FractionOfMedian(f) => f * median,
        }
    }
}

/// Extracted key material.
#[derive(Debug, Clone)]
pub struct BinaryKey {
    bits: Vec<bool>,
    source_challenge_ids: Vec<String>,
    puf_id: String,
    meta: KeyMeta,
}

/// Bookkeeping recorded alongside a key.
#[derive(Debug, Clone)]
pub struct KeyMeta {
    pub created_at: String,
    pub median_threshold: f64,
    pub guard_delta: f64,
    pub challenges_consumed: usize,
}

impl BinaryKey {
    pub fn new(
        bits: Vec<bool>,
        source_challenge_ids: Vec<String>,
        puf_id: String,
        meta: KeyMeta,
    ) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyInput("key bits"));
        }
        if bits.len() != source_challenge_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: bits.len(),
                got: source_challenge_ids.len(),
            });
        }
        Ok(BinaryKey {
            bits,
            source_challenge_ids,
            puf_id,
            meta,
        })
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

    pub fn source_challenge_ids(&self) -> &[String] {
        &self.source_challenge_ids
    }

    pub fn puf_id(&self) -> &str {
        &self.puf_id
    }

    pub fn meta(&self) -> &KeyMeta {
        &self.meta
    }

    /// Lowercase hex of the bit-packed key, zero-padded in the final byte.
    pub fn to_hex(&self) -> String {
        hex::encode(pack_bits(&self.bits))
    }
}

/// Empirical median; an even-length input takes the mean of the two central
/// order statistics.
pub fn median_threshold(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("median of no samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("counts must not be NaN"));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Thresholds counts into bits.
///
/// A count within the guard band (|N - threshold| <= delta, delta > 0) is
/// discarded: mask false, bit forced to 0. Otherwise bit = (N > threshold);
/// a count exactly at the threshold yields 0, so ties cannot flip between
/// sessions that agree on the threshold.
pub fn extract_bits(counts: &[f64], spec: &ThresholdSpec) -> (Vec<bool>, Vec<bool>) {
    let mut bits = Vec::with_capacity(counts.len());
    let mut kept = Vec::with_capacity(counts.len());
    for &n in counts {
        let in_band = spec.guard_delta > 0.0 && (n - spec.threshold).abs() <= spec.guard_delta;
        if in_band {
            bits.push(false);
            kept.push(false);
        } else {
            bits.push(n > spec.threshold);
            kept.push(true);
        }
    }
    (bits, kept)
}

/// Measures challenges from the stream until `key_length` bits survive the
/// guard band, then returns those bits in measurement order.
///
/// The threshold is the median of every count measured so far, recomputed
/// whenever the batch grows, so the final key is a pure function of
/// (puf, challenge sequence, cfg, guard, seed). Each challenge is measured
/// once on its own RNG substream indexed by stream position.
pub fn build_key<I>(
    puf: &PufInstance,
    challenges: I,
    cfg: &DetectorConfig,
    guard: GuardBand,
    key_length: usize,
    seed: u64,
) -> Result<BinaryKey>
where
    I: IntoIterator<Item = Challenge>,
{
    if key_length == 0 {
        return Err(Error::invalid("key length must be at least 1"));
    }
    if let GuardBand::Counts(d) = guard {
        if d < 0.0 {
            return Err(Error::invalid("guard width must be nonnegative"));
        }
    }
    if let GuardBand::FractionOfMedian(f) = guard {
        if f < 0.0 {
            return Err(Error::invalid("guard fraction must be nonnegative"));
        }
    }

    let mut stream = challenges.into_iter();
    let mut batch: Vec<Challenge> = Vec::with_capacity(key_length);
    let mut counts: Vec<f64> = Vec::with_capacity(key_length);

    let mut pull = |batch: &mut Vec<Challenge>, counts: &mut Vec<f64>, want: usize| -> Result<usize> {
        let mut pulled = 0;
        for _ in 0..want {
            match stream.next() {
                Some(c) => {
                    let idx = batch.len() as u64;
                    let mut r = rng::substream(seed, idx);
                    let sample = respond(puf, &c, cfg, &mut r)?;
                    counts.push(sample.photon_count as f64);
                    batch.push(c);
                    pulled += 1;
                }
                None => break,
            }
        }
        Ok(pulled)
    };

    pull(&mut batch, &mut counts, key_length)?;

    loop {
        if batch.is_empty() {
            return Err(Error::StreamExhausted {
                needed: key_length,
                got: 0,
            });
        }
        let median = median_threshold(&counts)?;
        let spec = ThresholdSpec::new(median, guard.delta_for(median))?;
        let (bits, kept) = extract_bits(&counts, &spec);
        let kept_count = kept.iter().filter(|&&k| k).count();

        if kept_count >= key_length {
            let mut key_bits = Vec::with_capacity(key_length);
            let mut ids = Vec::with_capacity(key_length);
            for i in 0..batch.len() {
                if kept[i] {
                    key_bits.push(bits[i]);
                    ids.push(batch[i].id().to_string());
                    if key_bits.len() == key_length {
                        break;
                    }
                }
            }
            let meta = KeyMeta {
                created_at: chrono::Utc::now()
                    .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                median_threshold: median,
                guard_delta: spec.guard_delta(),
                challenges_consumed: batch.len(),
            };
            return BinaryKey::new(key_bits, ids, puf.id().to_string(), meta);
        }

        // Estimate the in-band fraction from this batch and overshoot a
        // little so most runs converge in one extension.
        let missing = key_length - kept_count;
        let keep_rate = (kept_count as f64 / batch.len() as f64).max(0.1);
        let want = ((missing as f64 / keep_rate).ceil() as usize).max(16);
        if pull(&mut batch, &mut counts, want)? == 0 {
            return Err(Error::StreamExhausted {
                needed: key_length,
                got: kept_count,
            });
        }
    }
}

/// For each candidate threshold: the fraction of bits set and the Shannon
/// entropy of that fraction.
pub fn threshold_sweep(samples: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 1000 {
        return Err(Error::invalid(format!(
            "threshold sweep needs >= 1000 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let ones = samples.iter().filter(|&&x| x > t).count() as f64;
            let p = ones / n;
            (p, crate::challenge::binary_entropy(p))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::challenge::generate_challenge;
    use crate::puf::synthesize_puf;

    #[test]
    fn median_examples() {
        assert_eq!(median_threshold(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median_threshold(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.5);
        assert_eq!(median_threshold(&[7.0]).unwrap(), 7.0);
        assert_eq!(median_threshold(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(
            median_threshold(&[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn extraction_thresholds_and_ties() {
        let spec = ThresholdSpec::new(2435.0, 0.0).unwrap();
        let (bits, kept) = extract_bits(&[2440.0, 2430.0], &spec);
        assert_eq!(bits, vec![true, false]);
        assert_eq!(kept, vec![true, true]);

        // Exact tie with no guard band stays a kept 0.
        let (bits, kept) = extract_bits(&[2435.0], &spec);
        assert_eq!(bits, vec![false]);
        assert_eq!(kept, vec![true]);

        let guarded = ThresholdSpec::new(2435.0, 10.0).unwrap();
        let (bits, kept) = extract_bits(&[2440.0, 2460.0, 2425.0, 2400.0], &guarded);
        assert_eq!(kept, vec![false, true, false, true]);
        assert_eq!(bits, vec![false, true, false, false]);
    }

    #[test]
    fn threshold_spec_rejects_bad_parameters() {
        assert!(ThresholdSpec::new(0.0, 0.0).is_err());
        assert!(ThresholdSpec::new(-5.0, 0.0).is_err());
        assert!(ThresholdSpec::new(100.0, -1.0).is_err());
        assert!(ThresholdSpec::new(100.0, 100.0).is_err());
        assert!(ThresholdSpec::new(100.0, 99.9).is_ok());
    }

    #[test]
    fn key_is_scale_invariant() {
        // Integer counts scaled by 0.5, 3, 10 stay exact in f64, so the
        // rebuilt median splits identically.
        let mut r = rng::seeded(21);
        let counts: Vec<f64> = (0..1500)
            .map(|_| rand::Rng::gen_range(&mut r, 1000..4000) as f64)
            .collect();
        let median = median_threshold(&counts).unwrap();
        let base = extract_bits(&counts, &ThresholdSpec::new(median, 0.0).unwrap());
        for &lambda in &[0.5, 3.0, 10.0] {
            let scaled: Vec<f64> = counts.iter().map(|x| x * lambda).collect();
            let m2 = median_threshold(&scaled).unwrap();
            assert_eq!(m2, median * lambda);
            let got = extract_bits(&scaled, &ThresholdSpec::new(m2, 0.0).unwrap());
            assert_eq!(got, base, "lambda = {lambda}");
        }
    }

    #[test]
    fn widening_the_guard_only_discards() {
        let mut r = rng::seeded(22);
        let counts: Vec<f64> = (0..1000)
            .map(|_| rand::Rng::gen_range(&mut r, 2000..3000) as f64)
            .collect();
        let median = median_threshold(&counts).unwrap();
        let mut prev_kept = vec![true; counts.len()];
        let mut prev_bits = extract_bits(&counts, &ThresholdSpec::new(median, 0.0).unwrap()).0;
        for step in 1..=20 {
            let delta = step as f64 * 10.0;
            let (bits, kept) =
                extract_bits(&counts, &ThresholdSpec::new(median, delta).unwrap());
            for i in 0..counts.len() {
                assert!(
                    !kept[i] || prev_kept[i],
                    "delta {delta} resurrected index {i}"
                );
                if kept[i] {
                    assert_eq!(bits[i], prev_bits[i], "delta {delta} flipped index {i}");
                }
            }
            prev_kept = kept;
            prev_bits = bits;
        }
    }

    #[test]
    fn build_key_consumes_exactly_l_without_guard() {
        let puf = synthesize_puf(30, 600, 302).unwrap();
        let cfg = DetectorConfig::default_calibrated();
        let mut r = rng::seeded(31);
        let challenges: Vec<Challenge> = (0..150)
            .map(|_| generate_challenge(&mut r, 600).unwrap())
            .collect();
        let key = build_key(
            &puf,
            challenges.iter().cloned(),
            &cfg,
            GuardBand::Off,
            150,
            5,
        )
        .unwrap();
        assert_eq!(key.len(), 150);
        assert_eq!(key.meta().challenges_consumed, 150);
        assert_eq!(key.puf_id(), puf.id());
        assert_eq!(key.source_challenge_ids().len(), 150);
        assert_eq!(key.source_challenge_ids()[0], challenges[0].id());

        let again = build_key(
            &puf,
            challenges.iter().cloned(),
            &cfg,
            GuardBand::Off,
            150,
            5,
        )
        .unwrap();
        assert_eq!(key.bits(), again.bits());

        let short = build_key(
            &puf,
            challenges.iter().take(149).cloned(),
            &cfg,
            GuardBand::Off,
            150,
            5,
        );
        assert!(matches!(
            short,
            Err(Error::StreamExhausted { needed: 150, got }) if got <= 149
        ));
    }

    #[test]
    fn build_key_with_guard_extends_the_batch() {
        let puf = synthesize_puf(32, 600, 302).unwrap();
        let cfg = DetectorConfig::default_calibrated();
        let mut r = rng::seeded(33);
        let challenges: Vec<Challenge> = (0..500)
            .map(|_| generate_challenge(&mut r, 600).unwrap())
            .collect();
        let key = build_key(
            &puf,
            challenges.iter().cloned(),
            &cfg,
            GuardBand::FractionOfMedian(0.05),
            150,
            6,
        )
        .unwrap();
        assert_eq!(key.len(), 150);
        let consumed = key.meta().challenges_consumed;
        assert!(consumed > 150 && consumed <= 500, "consumed = {consumed}");
        assert!(key.meta().guard_delta > 0.0);

        // The guard discards counts near the median: every surviving bit's
        // challenge id must come from the measured prefix, in order.
        let prefix_ids: Vec<&str> = challenges[..consumed].iter().map(|c| c.id()).collect();
        let mut cursor = 0;
        for id in key.source_challenge_ids() {
            let pos = prefix_ids[cursor..]
                .iter()
                .position(|p| p == id)
                .expect("kept id must appear in the consumed prefix");
            cursor += pos + 1;
        }
    }

    #[test]
    fn median_split_balances_the_key() {
        let puf = synthesize_puf(34, 600, 302).unwrap();
        let cfg = DetectorConfig::noiseless(1e7);
        for &l in &[150usize, 151] {
            let mut r = rng::seeded(35 + l as u64);
            let challenges: Vec<Challenge> = (0..l)
                .map(|_| generate_challenge(&mut r, 600).unwrap())
                .collect();
            let key = build_key(&puf, challenges, &cfg, GuardBand::Off, l, 7).unwrap();
            let ones = key.bits().iter().filter(|&&b| b).count();
            let zeros = l - ones;
            assert!(
                ones.abs_diff(zeros) <= 1,
                "L = {l}: {ones} ones vs {zeros} zeros"
            );
        }
    }

    #[test]
    fn sweep_entropy_peaks_at_the_median() {
        let mut r = rng::seeded(36);
        let samples: Vec<f64> = (0..5000)
            .map(|_| rand::Rng::gen_range(&mut r, 1000..4000) as f64)
            .collect();
        let median = median_threshold(&samples).unwrap();
        let max = samples.iter().cloned().fold(f64::MIN, f64::max);
        let curve = threshold_sweep(&samples, &[median, 0.0, max]).unwrap();

        let (p_med, h_med) = curve[0];
        assert!((p_med - 0.5).abs() <= 0.02, "P(1) at median = {p_med}");
        assert!(h_med >= 0.999, "H at median = {h_med}");

        assert_eq!(curve[1], (1.0, 0.0));
        assert_eq!(curve[2], (0.0, 0.0));

        assert!(threshold_sweep(&samples[..999], &[median]).is_err());
    }

    #[test]
    fn key_hex_packs_big_endian() {
        let meta = KeyMeta {
            created_at: "2026-08-17T00:00:00Z".into(),
            median_threshold: 2435.0,
            guard_delta: 0.0,
            challenges_consumed: 3,
        };
        let key = BinaryKey::new(
            vec![true, false, true],
            vec!["a".into(), "b".into(), "c".into()],
            "puf-x".into(),
            meta.clone(),
        )
        .unwrap();
        assert_eq!(key.to_hex(), "a0");

        let key = BinaryKey::new(
            vec![true, false, true, true, false, false, false, true],
            vec!["a".to_string(); 8],
            "puf-x".into(),
            meta.clone(),
        )
        .unwrap();
        assert_eq!(key.to_hex(), "b1");

        assert!(BinaryKey::new(vec![], vec![], "p".into(), meta.clone()).is_err());
        assert!(BinaryKey::new(vec![true], vec![], "p".into(), meta).is_err());
    }
}
