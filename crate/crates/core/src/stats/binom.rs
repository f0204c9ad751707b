//! Exact binomial error rates for the Hamming-distance decision rule.
//!
//! Authentication accepts when the measured mismatch count is at most
//! `max_mismatch`. With genuine remeasurements flipping bits independently
//! with probability p1 and impostor bits agreeing with probability p2, the
//! false-accept rate is the binomial CDF at the threshold under p2 and the
//! false-reject rate is the upper tail under p1. Both are evaluated in
//! log-space so rates down to 1e-300 come out exact to near machine
//! precision instead of underflowing.

use crate::error::{Error, Result};

/// Accept/reject rule: accept iff mismatch count <= max_mismatch.
#[derive(Debug, Clone, Copy)]
pub struct DecisionRule {
    x_c: f64,
    key_length: usize,
    max_mismatch: usize,
}

impl DecisionRule {
    /// `max_mismatch = floor(x_c * L)`; the rule must actually discriminate,
    /// so thresholds that accept nothing or everything are rejected.
    pub fn new(x_c: f64, key_length: usize) -> Result<Self> {
        if !x_c.is_finite() || x_c <= 0.0 {
            return Err(Error::invalid("decision threshold must be positive"));
        }
        let max_mismatch = (x_c * key_length as f64).floor() as usize;
        if max_mismatch == 0 || max_mismatch >= key_length {
            return Err(Error::invalid(format!(
                "max mismatch {max_mismatch} must lie strictly between 0 and {key_length}"
            )));
        }
        Ok(DecisionRule {
            x_c,
            key_length,
            max_mismatch,
        })
    }

    pub fn x_c(&self) -> f64 {
        self.x_c
    }

    pub fn key_length(&self) -> usize {
        self.key_length
    }

    pub fn max_mismatch(&self) -> usize {
        self.max_mismatch
    }

    pub fn accepts(&self, mismatches: usize) -> bool {
        mismatches <= self.max_mismatch
    }
}

/// Prefix table of ln(k!) built with compensated summation; lf[k] = ln k!.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut lf = Vec::with_capacity(n + 1);
    lf.push(0.0);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in 1..=n {
        let term = (k as f64).ln() - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
        lf.push(sum);
    }
    lf
}

/// Sum of binomial probabilities for k in [lo, hi], computed by extracting
/// the largest log-term and compensated-summing the ratios.
fn binom_mass(l: usize, p: f64, lo: usize, hi: usize, lf: &[f64]) -> f64 {
    debug_assert!(lo <= hi && hi <= l);
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mut log_terms = Vec::with_capacity(hi - lo + 1);
    for k in lo..=hi {
        let mut t = lf[l] - lf[k] - lf[l - k];
        if k > 0 {
            t += k as f64 * ln_p;
        }
        if k < l {
            t += (l - k) as f64 * ln_q;
        }
        log_terms.push(t);
    }
    let m = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in log_terms {
        let term = (t - m).exp() - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    (m.exp() * sum).min(1.0)
}

/// Error rates for an explicit mismatch threshold: the false-accept rate is
/// the lower tail at p_inter, the false-reject rate the upper tail at
/// p_intra, both summed directly (the reject rate is never formed as
/// 1 - CDF, which would lose it below ~1e-16).
pub fn far_frr_at(
    key_length: usize,
    max_mismatch: usize,
    p_intra: f64,
    p_inter: f64,
) -> Result<(f64, f64)> {
    if key_length == 0 {
        return Err(Error::invalid("key length must be at least 1"));
    }
    for p in [p_intra, p_inter] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!(
                "flip probabilities must lie in (0, 1), got {p}"
            )));
        }
    }
    if max_mismatch >= key_length {
        return Ok((1.0, 0.0));
    }
    let lf = ln_factorials(key_length);
    let far = binom_mass(key_length, p_inter, 0, max_mismatch, &lf);
    let frr = binom_mass(key_length, p_intra, max_mismatch + 1, key_length, &lf);
    Ok((far, frr))
}

/// Error rates for a fractional threshold x_c; the mismatch budget is
/// floor(x_c * L). x_c at or above 1 is the accept-everything rule.
pub fn far_frr(key_length: usize, x_c: f64, p_intra: f64, p_inter: f64) -> Result<(f64, f64)> {
    if !x_c.is_finite() || x_c < 0.0 {
        return Err(Error::invalid("threshold fraction must be nonnegative"));
    }
    let mm = (x_c * key_length as f64).floor() as usize;
    far_frr_at(key_length, mm, p_intra, p_inter)
}

/// Threshold where the two binomial densities cross:
/// j* = L ln((1-p1)/(1-p2)) / (ln(p2/p1) + ln((1-p1)/(1-p2))).
/// Below j* the genuine density dominates, above it the impostor density
/// does, so flooring j* gives the largest mismatch budget still on the
/// genuine side.
pub fn intersect_xc(p_intra: f64, p_inter: f64, key_length: usize) -> Result<DecisionRule> {
    for p in [p_intra, p_inter] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!(
                "flip probabilities must lie in (0, 1), got {p}"
            )));
        }
    }
    if p_intra >= p_inter {
        return Err(Error::invalid(format!(
            "genuine flip rate {p_intra} must be below impostor rate {p_inter}"
        )));
    }
    let lq = ((1.0 - p_intra) / (1.0 - p_inter)).ln();
    let lp = (p_inter / p_intra).ln();
    let j_star = key_length as f64 * lq / (lp + lq);
    DecisionRule::new(j_star / key_length as f64, key_length)
}
