//! Simulation and authentication stack for single-pixel-readout optical
//! PUFs.
//!
//! A token is a linear scattering medium probed by binary on/off
//! illumination patterns; the readout is a single bucket detector counting
//! photons over a fixed integration window. Keys come from thresholding
//! photon counts at the batch median, so every device yields balanced bits
//! without per-device calibration. The crate covers the full loop:
//!
//! - [`puf`]: synthetic token instances (complex per-segment transfer
//!   amplitudes) and misalignment/decorrelation models.
//! - [`challenge`]: balanced binary illumination patterns and their
//!   content-hash identities.
//! - [`measurement`]: the detector model (intensity formation, gain
//!   jitter, dark counts, optional shot noise) and gamma-statistics
//!   diagnostics.
//! - [`keygen`]: median thresholding with optional guard bands, key
//!   assembly from a challenge stream.
//! - [`stats`]: exact binomial FAR/FRR machinery, Hamming-distance
//!   ensembles, parameter sweeps, and a randomness test battery.
//! - [`protocol`]: enrollment into a one-time-pad CRP database and
//!   challenge-response authentication sessions over it.

// Validation guards are written `!(x > 0.0)` so that NaN fails them; the
// suggested `x <= 0.0` would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod challenge;
pub mod error;
pub mod keygen;
pub mod measurement;
pub mod protocol;
pub mod puf;
pub mod rng;
pub mod stats;

pub use challenge::{
    challenge_bit_entropy, challenge_space_log2, decode_challenge, encode_challenge,
    generate_challenge, Challenge,
};
pub use error::{Error, Result};
pub use keygen::{
    build_key, extract_bits, median_threshold, threshold_sweep, BinaryKey, GuardBand, KeyMeta,
    ThresholdSpec,
};
pub use measurement::{
    fit_gamma, respond, respond_batch, DetectorConfig, GammaFit, ResponseSample,
};
pub use protocol::{AuthSession, CrpDatabase, CrpRecord, Verdict};
pub use puf::{apply_misalignment, synthesize_puf, MisalignmentParams, PufInstance};
pub use stats::binom::{far_frr, far_frr_at, intersect_xc, DecisionRule};
pub use stats::{
    fit_binomial, hamming_bits, hamming_normalized, hd_ensemble, BinomialFit, EnsembleStats,
    HdKind, HdSample,
};
