//! Ensemble simulation: the Hamming-distance distributions that the error
//! rates are fitted from.
//!
//! Three ensembles matter. Intra: one PUF remeasured many times on the
//! challenges kept at enrollment, quantifying noise. Inter (same challenge):
//! many PUFs keyed on one challenge list, quantifying uniqueness. Inter
//! (same PUF): one PUF keyed on disjoint challenge lists, quantifying
//! challenge sensitivity. Every ensemble is a pure function of its context
//! seed.

use rayon::prelude::*;

use crate::challenge::{generate_challenge, Challenge};
use crate::error::{Error, Result};
use crate::keygen::{
    build_key, extract_bits, median_threshold, BinaryKey, GuardBand, KeyMeta, ThresholdSpec,
};
use crate::measurement::{respond, DetectorConfig};
use crate::puf::{synthesize_puf, PufInstance};
use crate::rng;
use crate::stats::{hd_ensemble, EnsembleStats, HdKind};

/// Everything a simulated ensemble depends on.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub segment_count: usize,
    pub cell_count: usize,
    pub key_length: usize,
    pub detector: DetectorConfig,
    pub guard: GuardBand,
    pub seed: u64,
}

impl SimContext {
    /// The dimensions used throughout the characterization runs: 600
    /// segments, 302 cells, 150-bit keys, shipped noise defaults.
    pub fn reference(seed: u64) -> Self {
        SimContext {
            segment_count: 600,
            cell_count: 302,
            key_length: 150,
            detector: DetectorConfig::default_calibrated(),
            guard: GuardBand::Off,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_count < 2 || self.segment_count % 2 != 0 {
            return Err(Error::OddSegmentCount(self.segment_count));
        }
        if self.cell_count == 0 {
            return Err(Error::ZeroCells);
        }
        if self.key_length < 2 {
            return Err(Error::invalid("key length must be at least 2"));
        }
        self.detector.validate()
    }

    fn challenge_stream(&self, stream: u64) -> impl Iterator<Item = Challenge> + '_ {
        let mut r = rng::substream(self.seed, stream);
        let m = self.segment_count;
        std::iter::from_fn(move || {
            Some(generate_challenge(&mut r, m).expect("validated segment count"))
        })
    }
}

/// Measures each challenge once and splits at the session median with no
/// guard band: the verification-side key construction.
pub fn measure_median_key(
    puf: &PufInstance,
    challenges: &[Challenge],
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<BinaryKey> {
    if challenges.is_empty() {
        return Err(Error::EmptyInput("challenges"));
    }
    let mut counts = Vec::with_capacity(challenges.len());
    for (i, c) in challenges.iter().enumerate() {
        let mut r = rng::substream(seed, i as u64);
        counts.push(respond(puf, c, cfg, &mut r)?.photon_count as f64);
    }
    let median = median_threshold(&counts)?;
    let spec = ThresholdSpec::new(median, 0.0)?;
    let (bits, _) = extract_bits(&counts, &spec);
    BinaryKey::new(
        bits,
        challenges.iter().map(|c| c.id().to_string()).collect(),
        puf.id().to_string(),
        KeyMeta {
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            median_threshold: median,
            guard_delta: 0.0,
            challenges_consumed: challenges.len(),
        },
    )
}

/// Repeated-measurement ensemble of one PUF.
///
/// Enrollment runs once with the context's guard band and selects the kept
/// challenges; each of the `n_copies` remeasurements then keys those same
/// challenges against its own session median. Pairwise HDs over the copies.
pub fn simulate_intra_ensemble(ctx: &SimContext, n_copies: usize) -> Result<EnsembleStats> {
    ctx.validate()?;
    if n_copies < 2 {
        return Err(Error::invalid("intra ensemble needs >= 2 copies"));
    }
    let puf = synthesize_puf(rng::mix(ctx.seed, 1), ctx.segment_count, ctx.cell_count)?;
    let enrolled = build_key(
        &puf,
        ctx.challenge_stream(1),
        &ctx.detector,
        ctx.guard,
        ctx.key_length,
        rng::mix(ctx.seed, 2),
    )?;

    // Recover the kept Challenge values by replaying the stream prefix the
    // enrollment consumed and filtering to the kept ids.
    let consumed: Vec<Challenge> = ctx
        .challenge_stream(1)
        .take(enrolled.meta().challenges_consumed)
        .collect();
    let kept: Vec<Challenge> = {
        let want: std::collections::HashSet<&str> = enrolled
            .source_challenge_ids()
            .iter()
            .map(|s| s.as_str())
            .collect();
        consumed
            .into_iter()
            .filter(|c| want.contains(c.id()))
            .collect()
    };
    debug_assert_eq!(kept.len(), ctx.key_length);

    let copies: Vec<BinaryKey> = (0..n_copies)
        .into_par_iter()
        .map(|j| {
            measure_median_key(
                &puf,
                &kept,
                &ctx.detector,
                rng::mix(ctx.seed, 100 + j as u64),
            )
        })
        .collect::<Result<_>>()?;
    hd_ensemble(&copies, HdKind::Intra)
}

/// Distinct PUFs keyed on one shared challenge list.
pub fn simulate_inter_ensemble(ctx: &SimContext, n_pufs: usize) -> Result<EnsembleStats> {
    ctx.validate()?;
    if n_pufs < 2 {
        return Err(Error::invalid("inter ensemble needs >= 2 PUFs"));
    }
    let challenges: Vec<Challenge> = ctx.challenge_stream(1).take(ctx.key_length).collect();
    let keys: Vec<BinaryKey> = (0..n_pufs)
        .into_par_iter()
        .map(|i| {
            let puf = synthesize_puf(
                rng::mix(ctx.seed, 200 + i as u64),
                ctx.segment_count,
                ctx.cell_count,
            )?;
            measure_median_key(
                &puf,
                &challenges,
                &ctx.detector,
                rng::mix(ctx.seed, 300 + i as u64),
            )
        })
        .collect::<Result<_>>()?;
    hd_ensemble(&keys, HdKind::InterSameChallenge)
}

/// One PUF keyed on disjoint challenge lists.
pub fn simulate_inter_same_puf_ensemble(ctx: &SimContext, n_sets: usize) -> Result<EnsembleStats> {
    ctx.validate()?;
    if n_sets < 2 {
        return Err(Error::invalid("ensemble needs >= 2 challenge sets"));
    }
    let puf = synthesize_puf(rng::mix(ctx.seed, 400), ctx.segment_count, ctx.cell_count)?;
    let all: Vec<Challenge> = ctx
        .challenge_stream(2)
        .take(ctx.key_length * n_sets)
        .collect();
    let keys: Vec<BinaryKey> = (0..n_sets)
        .into_par_iter()
        .map(|i| {
            let set = &all[i * ctx.key_length..(i + 1) * ctx.key_length];
            measure_median_key(&puf, set, &ctx.detector, rng::mix(ctx.seed, 500 + i as u64))
        })
        .collect::<Result<_>>()?;
    hd_ensemble(&keys, HdKind::InterSamePuf)
}
