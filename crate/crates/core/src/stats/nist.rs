//! Randomness-test battery for generated key material.
//!
//! Eight statistical tests are implemented: frequency, block frequency,
//! runs, longest run of ones, cumulative sums in both directions, serial
//! (two P-values), and approximate entropy. Seven further well-known tests
//! are reported as not implemented rather than silently absent. A sequence
//! too short for a test is reported as skipped, never as a pass.
//!
//! Per-block evaluation reports the pass rate at the 0.01 significance
//! level plus a chi-square uniformity P-value over ten bins of the
//! per-block P-values.

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// Outcome of one test on one sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum TestOutcome {
    Pass,
    Fail,
    Skipped(String),
    NotImplemented,
}

/// A test's result: name, its P-values (two for serial), and the verdict.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub name: &'static str,
    pub p_values: Vec<f64>,
    pub outcome: TestOutcome,
}

/// Significance level shared by every test.
pub const SIGNIFICANCE: f64 = 0.01;

const SERIAL_PATTERN_LEN: usize = 5;
const APEN_PATTERN_LEN: usize = 3;
const BLOCK_FREQ_LEN: usize = 128;

/// Implemented tests with the minimum sequence length each needs to be
/// meaningful under its asymptotic reference distribution.
const IMPLEMENTED: [(&str, usize); 8] = [
    ("frequency", 100),
    ("block-frequency", 1280),
    ("runs", 100),
    ("longest-run", 128),
    ("cusum-forward", 100),
    ("cusum-backward", 100),
    ("serial", 1024),
    ("approximate-entropy", 1024),
];

const NOT_IMPLEMENTED: [&str; 7] = [
    "binary-matrix-rank",
    "dft-spectral",
    "template-matching",
    "universal",
    "linear-complexity",
    "random-excursions",
    "random-excursions-variant",
];

fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn igamc(a: f64, x: f64) -> f64 {
    // Q(a, 0) = 1; the library rejects x = 0 outright.
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(a, x)
}

/// Monobit frequency test.
pub fn frequency_test(bits: &[bool]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::EmptyInput("bit sequence"));
    }
    let n = bits.len() as f64;
    let s: i64 = bits.iter().map(|&b| if b { 1 } else { -1 }).sum();
    Ok(erfc((s.abs() as f64 / n.sqrt()) / std::f64::consts::SQRT_2))
}

/// Proportion of ones within fixed-size blocks.
pub fn block_frequency_test(bits: &[bool], block_len: usize) -> Result<f64> {
    if block_len == 0 {
        return Err(Error::invalid("block length must be positive"));
    }
    let n_blocks = bits.len() / block_len;
    if n_blocks == 0 {
        return Err(Error::invalid("sequence shorter than one block"));
    }
    let chi_sq: f64 = (0..n_blocks)
        .map(|i| {
            let block = &bits[i * block_len..(i + 1) * block_len];
            let pi = block.iter().filter(|&&b| b).count() as f64 / block_len as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * block_len as f64;
    Ok(igamc(n_blocks as f64 / 2.0, chi_sq / 2.0))
}

/// Total number of runs, conditioned on the ones proportion being sane.
pub fn runs_test(bits: &[bool]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::EmptyInput("bit sequence"));
    }
    let n = bits.len() as f64;
    let pi = bits.iter().filter(|&&b| b).count() as f64 / n;
    if pi == 0.0 || pi == 1.0 {
        return Ok(0.0);
    }
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return Ok(0.0);
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let num = (v as f64 - 2.0 * n * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi);
    Ok(erfc(num / den))
}

/// Longest run of ones per block, binned against the tabulated asymptotic
/// class probabilities. Block size scales with the sequence length.
pub fn longest_run_test(bits: &[bool]) -> Result<f64> {
    let n = bits.len();
    if n < 128 {
        return Err(Error::invalid("longest-run test needs >= 128 bits"));
    }
    let (block_len, lo, hi, pi): (usize, usize, usize, &[f64]) = if n < 6272 {
        (8, 1, 4, &[0.2148, 0.3672, 0.2305, 0.1875])
    } else if n < 750_000 {
        (128, 4, 9, &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (
            10_000,
            10,
            16,
            &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727],
        )
    };
    let n_blocks = n / block_len;
    let mut freq = vec![0u64; hi - lo + 1];
    for i in 0..n_blocks {
        let block = &bits[i * block_len..(i + 1) * block_len];
        let mut longest = 0usize;
        let mut run = 0usize;
        for &b in block {
            if b {
                run += 1;
                longest = longest.max(run);
            } else {
                run = 0;
            }
        }
        let class = longest.clamp(lo, hi) - lo;
        freq[class] += 1;
    }
    let chi_sq: f64 = freq
        .iter()
        .zip(pi)
        .map(|(&f, &p)| {
            let e = n_blocks as f64 * p;
            (f as f64 - e).powi(2) / e
        })
        .sum();
    let k = (hi - lo) as f64;
    Ok(igamc(k / 2.0, chi_sq / 2.0))
}

/// Maximum cumulative-sum excursion of the +/-1 walk; `forward` selects the
/// direction the sequence is walked.
pub fn cusum_test(bits: &[bool], forward: bool) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::EmptyInput("bit sequence"));
    }
    let n = bits.len();
    let mut s: i64 = 0;
    let mut z: i64 = 0;
    let step = |b: bool| if b { 1i64 } else { -1 };
    if forward {
        for &b in bits {
            s += step(b);
            z = z.max(s.abs());
        }
    } else {
        for &b in bits.iter().rev() {
            s += step(b);
            z = z.max(s.abs());
        }
    }
    if z == 0 {
        // Impossible for odd n; for even n it means a perfectly canceled
        // walk, which the reference distribution sends to 0 anyway.
        return Ok(0.0);
    }
    let nf = n as f64;
    let zf = z as f64;
    let sn = nf.sqrt();
    let term = |k: i64, off: f64| phi(((4 * k) as f64 + off) * zf / sn);

    let lo1 = ((-nf / zf + 1.0) / 4.0).floor() as i64;
    let hi1 = ((nf / zf - 1.0) / 4.0).floor() as i64;
    let mut sum1 = 0.0;
    for k in lo1..=hi1 {
        sum1 += term(k, 1.0) - term(k, -1.0);
    }
    let lo2 = ((-nf / zf - 3.0) / 4.0).floor() as i64;
    let mut sum2 = 0.0;
    for k in lo2..=hi1 {
        sum2 += term(k, 3.0) - term(k, 1.0);
    }
    Ok((1.0 - sum1 + sum2).clamp(0.0, 1.0))
}

/// Overlapping pattern-frequency statistic psi^2_k with wraparound.
fn psi_sq(bits: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let n = bits.len();
    let mask = (1usize << k) - 1;
    let mut counts = vec![0u64; 1 << k];
    let mut idx = 0usize;
    for &b in bits.iter().take(k - 1) {
        idx = (idx << 1 | b as usize) & mask;
    }
    for i in 0..n {
        let b = bits[(i + k - 1) % n];
        idx = (idx << 1 | b as usize) & mask;
        counts[idx] += 1;
    }
    let sum_sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    (1 << k) as f64 / n as f64 * sum_sq - n as f64
}

/// Serial test over overlapping patterns of length `m`; returns both
/// P-values (first and second difference of psi^2).
pub fn serial_test(bits: &[bool], m: usize) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::invalid("serial test needs pattern length >= 2"));
    }
    if bits.len() < m {
        return Err(Error::invalid("sequence shorter than the pattern"));
    }
    let pm = psi_sq(bits, m);
    let pm1 = psi_sq(bits, m - 1);
    let pm2 = psi_sq(bits, m - 2);
    let d1 = pm - pm1;
    let d2 = pm - 2.0 * pm1 + pm2;
    let p1 = igamc(2f64.powi(m as i32 - 2), d1 / 2.0);
    let p2 = igamc(2f64.powi(m as i32 - 3), d2 / 2.0);
    Ok((p1, p2))
}

/// Approximate entropy over overlapping patterns of lengths m and m+1.
pub fn approx_entropy_test(bits: &[bool], m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("pattern length must be positive"));
    }
    if bits.len() < m + 1 {
        return Err(Error::invalid("sequence shorter than the pattern"));
    }
    let n = bits.len();
    let phi_of = |k: usize| -> f64 {
        let mask = (1usize << k) - 1;
        let mut counts = vec![0u64; 1 << k];
        let mut idx = 0usize;
        for &b in bits.iter().take(k - 1) {
            idx = (idx << 1 | b as usize) & mask;
        }
        for i in 0..n {
            let b = bits[(i + k - 1) % n];
            idx = (idx << 1 | b as usize) & mask;
            counts[idx] += 1;
        }
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n as f64;
                p * p.ln()
            })
            .sum()
    };
    let ap_en = phi_of(m) - phi_of(m + 1);
    let chi_sq = 2.0 * n as f64 * (std::f64::consts::LN_2 - ap_en);
    Ok(igamc(2f64.powi(m as i32 - 1), chi_sq / 2.0))
}

fn eval_test(name: &str, bits: &[bool]) -> Result<Vec<f64>> {
    Ok(match name {
        "frequency" => vec![frequency_test(bits)?],
        "block-frequency" => vec![block_frequency_test(bits, BLOCK_FREQ_LEN)?],
        "runs" => vec![runs_test(bits)?],
        "longest-run" => vec![longest_run_test(bits)?],
        "cusum-forward" => vec![cusum_test(bits, true)?],
        "cusum-backward" => vec![cusum_test(bits, false)?],
        "serial" => {
            let (p1, p2) = serial_test(bits, SERIAL_PATTERN_LEN)?;
            vec![p1, p2]
        }
        "approximate-entropy" => vec![approx_entropy_test(bits, APEN_PATTERN_LEN)?],
        other => return Err(Error::invalid(format!("unknown test {other}"))),
    })
}

/// Runs every test once over the whole sequence. Tests the sequence is too
/// short for come back as `Skipped`.
pub fn run_battery(bits: &[bool]) -> Vec<TestResult> {
    let mut results = Vec::with_capacity(IMPLEMENTED.len() + NOT_IMPLEMENTED.len());
    for (name, min_len) in IMPLEMENTED {
        if bits.len() < min_len {
            results.push(TestResult {
                name,
                p_values: Vec::new(),
                outcome: TestOutcome::Skipped(format!(
                    "needs {min_len} bits, sequence has {}",
                    bits.len()
                )),
            });
            continue;
        }
        let p_values = eval_test(name, bits).expect("length was checked");
        let outcome = if p_values.iter().all(|&p| p >= SIGNIFICANCE) {
            TestOutcome::Pass
        } else {
            TestOutcome::Fail
        };
        results.push(TestResult {
            name,
            p_values,
            outcome,
        });
    }
    for name in NOT_IMPLEMENTED {
        results.push(TestResult {
            name,
            p_values: Vec::new(),
            outcome: TestOutcome::NotImplemented,
        });
    }
    results
}

/// Chi-square uniformity of P-values over ten equal bins.
pub fn p_value_uniformity(p_values: &[f64]) -> Result<f64> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput("P-values"));
    }
    let mut bins = [0u64; 10];
    for &p in p_values {
        let idx = ((p * 10.0).floor() as usize).min(9);
        bins[idx] += 1;
    }
    let expected = p_values.len() as f64 / 10.0;
    let chi_sq: f64 = bins
        .iter()
        .map(|&f| (f as f64 - expected).powi(2) / expected)
        .sum();
    Ok(igamc(4.5, chi_sq / 2.0))
}

/// Per-test aggregate over equal-size blocks of a long sequence.
#[derive(Debug, Clone)]
pub struct BatteryRow {
    pub name: &'static str,
    pub implemented: bool,
    pub blocks: usize,
    /// Fraction of blocks where every P-value cleared 0.01.
    pub pass_rate: f64,
    /// Uniformity of the pooled per-block P-values.
    pub uniformity_p: f64,
}

/// Splits the sequence into `block_len`-bit blocks, runs each implemented
/// test on every block, and aggregates pass rates and P-value uniformity.
/// Not-implemented tests appear as rows with `implemented = false`.
pub fn battery_blocks(bits: &[bool], block_len: usize) -> Result<Vec<BatteryRow>> {
    let shortest_ok = IMPLEMENTED.iter().map(|&(_, m)| m).max().unwrap();
    if block_len < shortest_ok {
        return Err(Error::invalid(format!(
            "block length {block_len} below the {shortest_ok}-bit minimum"
        )));
    }
    let n_blocks = bits.len() / block_len;
    if n_blocks == 0 {
        return Err(Error::invalid("sequence shorter than one block"));
    }
    let mut rows = Vec::with_capacity(IMPLEMENTED.len() + NOT_IMPLEMENTED.len());
    for (name, _) in IMPLEMENTED {
        let mut passes = 0usize;
        let mut pooled = Vec::with_capacity(n_blocks * 2);
        for i in 0..n_blocks {
            let block = &bits[i * block_len..(i + 1) * block_len];
            let ps = eval_test(name, block)?;
            if ps.iter().all(|&p| p >= SIGNIFICANCE) {
                passes += 1;
            }
            pooled.extend(ps);
        }
        rows.push(BatteryRow {
            name,
            implemented: true,
            blocks: n_blocks,
            pass_rate: passes as f64 / n_blocks as f64,
            uniformity_p: p_value_uniformity(&pooled)?,
        });
    }
    for name in NOT_IMPLEMENTED {
        rows.push(BatteryRow {
            name,
            implemented: false,
            blocks: 0,
            pass_rate: f64::NAN,
            uniformity_p: f64::NAN,
        });
    }
    Ok(rows)
}
