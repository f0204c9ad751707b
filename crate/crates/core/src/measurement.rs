//! Single-pixel photon-count simulation.
//!
//! The response to a challenge is the speckle intensity summed over the S
//! detector cells, scaled so the challenge-ensemble mean count hits the
//! configured target, then pushed through the noise stack: multiplicative
//! laser intensity jitter, optional Poisson shot noise, and a dark-count
//! rate. With noise off the count is just the rounded scaled intensity.
//!
//! Each cell couples to the challenge through centered reflectances
//! (r_k - mean(r)): the balanced challenge constraint fixes the total lit
//! power, so only the interference term varies between challenges, and the
//! per-cell intensity is exponential. Summing S independent cells gives
//! gamma-distributed counts whose shape parameter IS the cell count, which
//! is what `fit_gamma` recovers.

use rand_distr::Distribution as _;
use rayon::prelude::*;
use std::io::Write;

use crate::challenge::Challenge;
use crate::error::{Error, Result};
use crate::puf::PufInstance;
use crate::rng;

/// Shipped mean photon count per integration window.
pub const DEFAULT_MEAN_PHOTONS: f64 = 2429.0;
/// Shipped relative laser intensity jitter; calibrated so repeated key
/// readouts disagree on roughly 4 to 6% of bits at the default mean count.
pub const DEFAULT_JITTER_REL: f64 = 0.007;
/// Shipped dark counts per window.
pub const DEFAULT_DARK_RATE: f64 = 0.1;

/// Detector and noise configuration.
///
/// The simulation is parameterized directly by the mean photon count; the
/// integration window is bookkeeping so configurations can record the
/// physical settings they stand for.
#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    pub mean_photon_target: f64,
    pub shot_noise: bool,
    pub dark_rate: f64,
    pub intensity_jitter_rel: f64,
    pub integration_window_ms: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_photon_target > 0.0) {
            return Err(Error::invalid("mean photon target must be positive"));
        }
        if self.dark_rate < 0.0 || self.intensity_jitter_rel < 0.0 {
            return Err(Error::invalid("noise rates must be nonnegative"));
        }
        if !(self.integration_window_ms > 0.0) {
            return Err(Error::invalid("integration window must be positive"));
        }
        Ok(())
    }

    /// No noise at all: counts are rounded scaled intensities.
    pub fn noiseless(mean_photon_target: f64) -> Self {
        DetectorConfig {
            mean_photon_target,
            shot_noise: false,
            dark_rate: 0.0,
            intensity_jitter_rel: 0.0,
            integration_window_ms: 1.0,
        }
    }

    /// The shipped default calibration: laser jitter dominates, shot noise
    /// off, a token dark rate. Keeps the intra-key error rate in the
    /// few-percent band at the default mean count.
    pub fn default_calibrated() -> Self {
        DetectorConfig {
            mean_photon_target: DEFAULT_MEAN_PHOTONS,
            shot_noise: false,
            dark_rate: DEFAULT_DARK_RATE,
            intensity_jitter_rel: DEFAULT_JITTER_REL,
            integration_window_ms: 1.0,
        }
    }

    /// Poisson shot noise only; used by the sweep configurations that study
    /// how averaging more photons raises the bit SNR.
    pub fn shot_only(mean_photon_target: f64) -> Self {
        DetectorConfig {
            mean_photon_target,
            shot_noise: true,
            dark_rate: 0.0,
            intensity_jitter_rel: 0.0,
            integration_window_ms: 1.0,
        }
    }
}

/// One measured response.
#[derive(Debug, Clone)]
pub struct ResponseSample {
    pub challenge_id: String,
    pub photon_count: u64,
    /// Scaled intensity before noise; diagnostic only.
    pub noiseless_intensity: f64,
}

/// Scaled noise-free intensity for one challenge.
///
/// The intensity is sum_s |sum_k t[s][k] * (r_k - rho)|^2 with rho the mean
/// reflectance, computed per cell from the lit segments and the cached row
/// total. The scale factor 2<N>/(S*m) maps the analytic ensemble mean of the
/// intensity onto the configured mean count; it depends only on the
/// configuration and dimensions, so amplitude rescaling of the transfer
/// tensor propagates straight into the counts.
fn scaled_intensity(puf: &PufInstance, c: &Challenge, mean_photon_target: f64) -> f64 {
    let m = puf.segment_count();
    let rho = c.popcount() as f64 / m as f64;
    let ones: Vec<usize> = (0..m).filter(|&k| c.bits()[k]).collect();
    let mut intensity = 0.0;
    for s in 0..puf.cell_count() {
        let row = puf.transfer_row(s);
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for &k in &ones {
            acc += row[k];
        }
        let field = acc - rho * puf.row_total(s);
        intensity += field.norm_sqr();
    }
    let kappa = 2.0 * mean_photon_target / (puf.cell_count() * m) as f64;
    kappa * intensity
}

/// Measures one challenge. Pure given the RNG state.
pub fn respond(
    puf: &PufInstance,
    c: &Challenge,
    cfg: &DetectorConfig,
    rng: &mut rng::Rng,
) -> Result<ResponseSample> {
    cfg.validate()?;
    if c.len() != puf.segment_count() {
        return Err(Error::DimensionMismatch {
            expected: puf.segment_count(),
            got: c.len(),
        });
    }
    let scaled = scaled_intensity(puf, c, cfg.mean_photon_target);

    let lit = if cfg.intensity_jitter_rel > 0.0 {
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        (scaled * (1.0 + cfg.intensity_jitter_rel * z)).max(0.0)
    } else {
        scaled
    };
    let rate = lit + cfg.dark_rate;

    let photon_count = if cfg.shot_noise {
        if rate > 0.0 {
            let lambda = rand_distr::Poisson::new(rate)
                .map_err(|e| Error::invalid(format!("poisson rate: {e}")))?;
            lambda.sample(rng) as u64
        } else {
            0
        }
    } else {
        rate.round().max(0.0) as u64
    };

    Ok(ResponseSample {
        challenge_id: c.id().to_string(),
        photon_count,
        noiseless_intensity: scaled,
    })
}

/// Measures a batch, one RNG substream per challenge index, results in
/// challenge order regardless of how the work was scheduled.
pub fn respond_batch(
    puf: &PufInstance,
    challenges: &[Challenge],
    cfg: &DetectorConfig,
    seed: u64,
) -> Result<Vec<ResponseSample>> {
    cfg.validate()?;
    challenges
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut stream = rng::substream(seed, i as u64);
            respond(puf, c, cfg, &mut stream)
        })
        .collect()
}

/// Density of the count law for a detector covered by `shape` speckle cells:
/// p(N) = shape^shape / (Gamma(shape) * mean^shape) * N^(shape-1)
///        * exp(-shape * N / mean),
/// the gamma density with the given mean, evaluated at integer counts. For
/// mean counts well above 1 the discretization error is below 1e-3.
pub fn gamma_count_pmf(n: f64, mean: f64, shape: f64) -> Result<f64> {
    if !(mean > 0.0) || !(shape > 0.0) {
        return Err(Error::invalid("gamma parameters must be positive"));
    }
    if n < 0.0 {
        return Err(Error::invalid("count must be nonnegative"));
    }
    if n == 0.0 {
        // Limit at the origin: finite only at shape = 1.
        return Ok(if shape == 1.0 {
            1.0 / mean
        } else if shape > 1.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    let ln_pdf = shape * (shape / mean).ln() - statrs::function::gamma::ln_gamma(shape)
        + (shape - 1.0) * n.ln()
        - shape * n / mean;
    Ok(ln_pdf.exp())
}

/// Method-of-moments gamma fit of a count sample.
#[derive(Debug, Clone, Copy)]
pub struct GammaFit {
    pub mean: f64,
    pub shape: f64,
}

impl GammaFit {
    /// True when the fitted shape is so large the sample is effectively
    /// constant: the speckle grain is far smaller than the detector and the
    /// count fluctuations carry no challenge information.
    pub fn is_degenerate(&self) -> bool {
        self.shape > 1e4
    }
}

/// Fits (mean, shape) by method of moments: mean = sample mean,
/// shape = mean^2 / variance.
pub fn fit_gamma(samples: &[u64]) -> Result<GammaFit> {
    if samples.len() < 100 {
        return Err(Error::invalid(format!(
            "gamma fit needs >= 100 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    if var == 0.0 {
        return Err(Error::DegenerateFit(
            "zero variance: all counts identical".into(),
        ));
    }
    Ok(GammaFit {
        mean,
        shape: mean * mean / var,
    })
}

/// Writes `challenge_id,N` CSV with a header row.
pub fn write_responses_csv<W: Write>(samples: &[ResponseSample], out: &mut W) -> Result<()> {
    writeln!(out, "challenge_id,N")?;
    for s in samples {
        writeln!(out, "{},{}", s.challenge_id, s.photon_count)?;
    }
    Ok(())
}
