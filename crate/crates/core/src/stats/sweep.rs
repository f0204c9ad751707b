//! Parameter sweeps: how the error rates respond to key length, photon
//! budget, and the guard band.
//!
//! Each grid point re-simulates both HD ensembles, refits the two binomial
//! proportions, re-derives the crossing threshold, and evaluates the exact
//! error rates there. The analytic evaluation is what reaches regimes like
//! 1e-28 that no sampling run could certify.

use rayon::prelude::*;
use std::io::Write;

use crate::error::{Error, Result};
use crate::keygen::GuardBand;
use crate::rng;
use crate::stats::binom::{far_frr_at, intersect_xc};
use crate::stats::sim::{simulate_inter_ensemble, simulate_intra_ensemble, SimContext};
use crate::stats::fit_binomial;

/// Which knob the sweep turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Key length L.
    KeyLength,
    /// Mean photon count per window.
    MeanPhotons,
    /// Guard half-width as a fraction of the median.
    GuardFraction,
}

/// One sweep row; the CSV column order is the field order.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub p1: f64,
    pub p2: f64,
    pub var1: f64,
    pub var2: f64,
    pub far: f64,
    pub frr: f64,
}

fn apply_axis(ctx: &mut SimContext, axis: SweepAxis, value: f64) -> Result<()> {
    match axis {
        SweepAxis::KeyLength => {
            if value < 4.0 || value.fract() != 0.0 {
                return Err(Error::invalid(format!(
                    "key length grid value {value} must be an integer >= 4"
                )));
            }
            ctx.key_length = value as usize;
        }
        SweepAxis::MeanPhotons => {
            if !(value > 0.0) {
                return Err(Error::invalid("mean photon grid values must be positive"));
            }
            ctx.detector.mean_photon_target = value;
        }
        SweepAxis::GuardFraction => {
            if !(0.0..0.5).contains(&value) {
                return Err(Error::invalid(format!(
                    "guard fraction {value} must lie in [0, 0.5)"
                )));
            }
            ctx.guard = if value == 0.0 {
                GuardBand::Off
            } else {
                GuardBand::FractionOfMedian(value)
            };
        }
    }
    Ok(())
}

/// Simulates ensembles over the grid and evaluates the error rates at each
/// point's own fitted crossing.
///
/// When a point observes zero genuine flips, p1 falls back to the rule of
/// three (3 / compared bits), the standard 95% upper bound for a zero count;
/// the analytic rates stay conservative instead of collapsing to zero.
pub fn reduction_sweep(
    axis: SweepAxis,
    grid: &[f64],
    base: &SimContext,
    n_pufs: usize,
    n_copies: usize,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("sweep grid"));
    }
    base.validate()?;
    grid.par_iter()
        .enumerate()
        .map(|(idx, &value)| {
            let mut ctx = base.clone();
            ctx.seed = rng::mix(base.seed, 7000 + idx as u64);
            apply_axis(&mut ctx, axis, value)?;

            let intra = simulate_intra_ensemble(&ctx, n_copies)?;
            let inter = simulate_inter_ensemble(&ctx, n_pufs)?;
            let l = ctx.key_length;

            let mut p1 = fit_binomial(&intra.samples)?.p;
            if p1 == 0.0 {
                p1 = 3.0 / (intra.samples.len() * l) as f64;
            }
            let p2 = fit_binomial(&inter.samples)?.p;

            let rule = intersect_xc(p1, p2, l)?;
            let (far, frr) = far_frr_at(l, rule.max_mismatch(), p1, p2)?;
            Ok(SweepPoint {
                axis_value: value,
                p1,
                p2,
                var1: intra.variance,
                var2: inter.variance,
                far,
                frr,
            })
        })
        .collect()
}

/// Writes sweep rows as CSV with the fixed header
/// `axis_value,p1,p2,var1,var2,far,frr`.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: &mut W) -> Result<()> {
    writeln!(out, "axis_value,p1,p2,var1,var2,far,frr")?;
    for p in points {
        writeln!(
            out,
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            p.axis_value, p.p1, p.p2, p.var1, p.var2, p.far, p.frr
        )?;
    }
    Ok(())
}

fn segment_sse(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    ys.iter()
        .zip(xs)
        .map(|(y, x)| (y - my - slope * (x - mx)).powi(2))
        .sum()
}

/// Breakpoint of the best two-segment piecewise-linear fit: the x where the
/// decay slope changes. Needs at least 4 strictly increasing x values.
pub fn knee_of(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 4 {
        return Err(Error::invalid("knee fit needs at least 4 points"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("knee fit needs strictly increasing x"));
    }
    let mut best = (f64::INFINITY, xs[1]);
    for i in 1..xs.len() - 1 {
        let sse = segment_sse(&xs[..=i], &ys[..=i]) + segment_sse(&xs[i..], &ys[i..]);
        if sse < best.0 {
            best = (sse, xs[i]);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::DetectorConfig;

    #[test]
    fn knee_finds_an_exact_breakpoint() {
        let xs: Vec<f64> = (0..=6).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| if x <= 3.0 { x } else { 3.0 + 5.0 * (x - 3.0) })
            .collect();
        assert_eq!(knee_of(&xs, &ys).unwrap(), 3.0);
    }

    #[test]
    fn knee_validates_input() {
        assert!(knee_of(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(knee_of(&[1.0, 2.0, 2.0, 3.0], &[1.0; 4]).is_err());
        assert!(knee_of(&[1.0, 2.0, 3.0, 4.0], &[1.0; 3]).is_err());
    }

    #[test]
    fn key_length_sweep_improves_both_rates() {
        let base = SimContext::reference(4100);
        let points =
            reduction_sweep(SweepAxis::KeyLength, &[50.0, 150.0], &base, 14, 14).unwrap();
        assert_eq!(points.len(), 2);
        for p in &points {
            assert!((p.p2 - 0.5).abs() < 0.05, "p2 = {}", p.p2);
            assert!(p.p1 > 0.0 && p.p1 < 0.12, "p1 = {}", p.p1);
            assert!(p.far > 0.0 && p.frr > 0.0);
        }
        assert!(points[1].far < points[0].far);
        assert!(points[1].frr < points[0].frr);
    }

    #[test]
    fn photon_sweep_reduces_genuine_flips() {
        let mut base = SimContext::reference(4200);
        base.detector = DetectorConfig::shot_only(2429.0);
        let points = reduction_sweep(
            SweepAxis::MeanPhotons,
            &[2429.0, 9.0 * 2429.0],
            &base,
            12,
            14,
        )
        .unwrap();
        assert!(
            points[1].p1 < points[0].p1,
            "p1 {} -> {}",
            points[0].p1,
            points[1].p1
        );
    }

    #[test]
    fn csv_round_trips() {
        let points = vec![SweepPoint {
            axis_value: 150.0,
            p1: 0.056,
            p2: 0.496,
            var1: 3.6e-4,
            var2: 1.67e-3,
            far: 3.14e-12,
            frr: 2.43e-12,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "axis_value,p1,p2,var1,var2,far,frr");
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields.len(), 7);
        assert_eq!(fields[0], "150");
        assert!((fields[1].parse::<f64>().unwrap() - 0.056).abs() < 1e-9);
        assert!((fields[5].parse::<f64>().unwrap() - 3.14e-12).abs() < 1e-20);
    }

    #[test]
    fn sweep_rejects_bad_grids() {
        let base = SimContext::reference(1);
        assert!(reduction_sweep(SweepAxis::KeyLength, &[], &base, 4, 4).is_err());
        assert!(reduction_sweep(SweepAxis::KeyLength, &[2.5], &base, 4, 4).is_err());
        assert!(reduction_sweep(SweepAxis::MeanPhotons, &[0.0], &base, 4, 4).is_err());
        assert!(reduction_sweep(SweepAxis::GuardFraction, &[0.6], &base, 4, 4).is_err());
    }
}
