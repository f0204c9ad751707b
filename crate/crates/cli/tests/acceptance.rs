//! Acceptance gate: one test per shipped claim about the stack, each
//! printing an `acceptance N: PASS/FAIL` line (run with `--nocapture` to
//! see them all; the harness additionally reports each as ok/FAILED).
//!
//! Every tolerance is pinned in this file. Test 1 documents a claim this
//! implementation cannot reproduce; it is expected to FAIL and says why.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use rayon::prelude::*;

use spuf_cli::prover::{prove, ProverBehavior};
use spuf_cli::wire::{encode, read_message, WireMessage};
use spuf_core::challenge::{decode_challenge, generate_challenge, Challenge};
use spuf_core::keygen::{median_threshold, threshold_sweep, GuardBand};
use spuf_core::measurement::{fit_gamma, respond, respond_batch, DetectorConfig};
use spuf_core::protocol::CrpDatabase;
use spuf_core::puf::{apply_misalignment, synthesize_puf, MisalignmentParams, PufInstance};
use spuf_core::rng;
use spuf_core::stats::binom::{far_frr, far_frr_at, intersect_xc};
use spuf_core::stats::nist::battery_blocks;
use spuf_core::stats::sim::{
    measure_median_key, simulate_inter_ensemble, simulate_intra_ensemble, SimContext,
};
use spuf_core::stats::sweep::{knee_of, reduction_sweep, SweepAxis};

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn acceptance_01_reference_error_rates() {
    let (far, frr) = far_frr(150, 0.221, 0.056, 0.496).unwrap();
    let far_band = (6.3e-12 * 0.85, 6.3e-12 * 1.15);
    let frr_band = (2.1e-12 * 0.85, 2.1e-12 * 1.15);
    let far_ok = far >= far_band.0 && far <= far_band.1;
    let frr_ok = frr >= frr_band.0 && frr <= frr_band.1;
    let pass = far_ok && frr_ok;
    println!(
        "acceptance 1: {} - far_frr(150, 0.221, 0.056, 0.496) = (FAR {:.4e}, FRR {:.4e}); documented (6.3e-12, 2.1e-12) within 15%",
        verdict(pass),
        far,
        frr
    );
    if !pass {
        println!(
            "  FAR is {:.3}x the documented value; allowed band [{:.3e}, {:.3e}].",
            far / 6.3e-12,
            far_band.0,
            far_band.1
        );
        println!(
            "  FRR is {:.3}x the documented value; allowed band [{:.3e}, {:.3e}].",
            frr / 2.1e-12,
            frr_band.0,
            frr_band.1
        );
        println!(
            "  The computed pair is cross-checked against exact rational enumeration \
             (acceptance 9) and Monte Carlo sampling; the documented pair cannot be \
             reproduced from its stated inputs under any tail convention we tried, \
             so this test fails honestly instead of being tuned to pass."
        );
    }
    assert!(
        pass,
        "documented reference rates not reproduced: FAR={far:.4e} (want 6.3e-12 +/-15%), FRR={frr:.4e} (want 2.1e-12 +/-15%)"
    );
}

#[test]
fn acceptance_02_decision_threshold() {
    let rule = intersect_xc(0.056, 0.496, 150).unwrap();
    let mm_ok = rule.max_mismatch() == 33;
    let xc_ok = rule.x_c() >= 0.218 && rule.x_c() <= 0.228;
    let pass = mm_ok && xc_ok;
    println!(
        "acceptance 2: {} - intersect_xc(0.056, 0.496, 150): max_mismatch={} (want 33), x_c={:.6} (want [0.218, 0.228])",
        verdict(pass),
        rule.max_mismatch(),
        rule.x_c()
    );
    assert!(pass);
}

#[test]
fn acceptance_03_gamma_recovery() {
    let puf = synthesize_puf(7301, 600, 302).unwrap();
    let mut crng = rng::seeded(7302);
    let challenges: Vec<Challenge> = (0..10_000)
        .map(|_| generate_challenge(&mut crng, 600).unwrap())
        .collect();
    let cfg = DetectorConfig::noiseless(2429.0);
    let samples = respond_batch(&puf, &challenges, &cfg, 7303).unwrap();
    let counts: Vec<u64> = samples.iter().map(|s| s.photon_count).collect();
    let fit = fit_gamma(&counts).unwrap();
    let pass = fit.shape >= 272.0 && fit.shape <= 332.0 && fit.mean >= 2380.0 && fit.mean <= 2478.0;
    println!(
        "acceptance 3: {} - method-of-moments on 10^4 noiseless counts: shape={:.2} (want [272, 332]), mean={:.2} (want [2380, 2478])",
        verdict(pass),
        fit.shape,
        fit.mean
    );
    assert!(pass);
}

#[test]
fn acceptance_04_hd_ensembles() {
    let inter = simulate_inter_ensemble(&SimContext::reference(7401), 50).unwrap();
    let intra = simulate_intra_ensemble(&SimContext::reference(7402), 50).unwrap();
    let inter_mean_ok = (inter.mean - 0.496).abs() <= 0.015;
    let inter_var_ok = inter.variance >= 1.0e-3 && inter.variance <= 2.4e-3;
    let intra_ok = (intra.mean - 0.056).abs() <= 0.015;
    let pass = inter_mean_ok && inter_var_ok && intra_ok;
    println!(
        "acceptance 4: {} - inter mean={:.4} (want 0.496 +/-0.015), inter var={:.3e} (want [1.0e-3, 2.4e-3]), intra mean={:.4} (want 0.056 +/-0.015)",
        verdict(pass),
        inter.mean,
        inter.variance,
        intra.mean
    );
    assert!(pass);
}

#[test]
fn acceptance_05_entropy_peak() {
    let puf = synthesize_puf(7501, 600, 302).unwrap();
    let mut crng = rng::seeded(7502);
    let challenges: Vec<Challenge> = (0..10_000)
        .map(|_| generate_challenge(&mut crng, 600).unwrap())
        .collect();
    let cfg = DetectorConfig::default_calibrated();
    let samples = respond_batch(&puf, &challenges, &cfg, 7503).unwrap();
    let counts: Vec<f64> = samples.iter().map(|s| s.photon_count as f64).collect();

    let median = median_threshold(&counts).unwrap();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let offsets = [-2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0];
    let thresholds: Vec<f64> = offsets.iter().map(|k| median + k * sd).collect();
    let sweep = threshold_sweep(&counts, &thresholds).unwrap();

    let center = 4;
    let (p_med, h_med) = sweep[center];
    let mut monotone = true;
    for i in center..sweep.len() - 1 {
        if sweep[i + 1].1 > sweep[i].1 + 1e-3 {
            monotone = false;
        }
    }
    for i in (1..=center).rev() {
        if sweep[i - 1].1 > sweep[i].1 + 1e-3 {
            monotone = false;
        }
    }
    let pass = (p_med - 0.5).abs() <= 0.02 && h_med >= 0.999 && monotone;
    println!(
        "acceptance 5: {} - at the median: P(1)={:.4} (want 0.5 +/-0.02), entropy={:.6} (want >= 0.999); entropy falls monotonically over +/-2 sd: {}",
        verdict(pass),
        p_med,
        h_med,
        monotone
    );
    assert!(pass);
}

#[test]
fn acceptance_06_amplitude_scale_invariance() {
    // Counts are integers, so exact bit identity needs the decision margins
    // to clear the 1-count rounding granularity at every tested scale; the
    // photon budget here guarantees that (at lambda = 0.5 the counts still
    // sit hundreds apart near the median), and the margin is asserted so a
    // lucky seed cannot mask a regression.
    let puf = synthesize_puf(7601, 600, 302).unwrap();
    let mut crng = rng::seeded(7602);
    let challenges: Vec<Challenge> = (0..150)
        .map(|_| generate_challenge(&mut crng, 600).unwrap())
        .collect();
    let cfg = DetectorConfig::noiseless(1.0e6);

    let key_of = |p: &PufInstance| -> (Vec<bool>, Vec<u64>, f64, f64) {
        let counts: Vec<u64> = respond_batch(p, &challenges, &cfg, 7603)
            .unwrap()
            .iter()
            .map(|s| s.photon_count)
            .collect();
        let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let median = median_threshold(&as_f64).unwrap();
        let bits: Vec<bool> = as_f64.iter().map(|&c| c > median).collect();
        let margin = as_f64
            .iter()
            .map(|c| (c - median).abs())
            .fold(f64::INFINITY, f64::min);
        (bits, counts, median, margin)
    };

    let (ref_bits, ref_counts, _, ref_margin) = key_of(&puf);
    let mut pass = ref_margin >= 2.0;
    let mut min_margin = ref_margin;
    let mut worst_scaling: f64 = 0.0;
    for lambda in [0.5f64, 3.0, 10.0] {
        let scaled = puf.scaled_amplitudes(lambda).unwrap();
        let (bits, counts, _, margin) = key_of(&scaled);
        if bits != ref_bits || margin < 2.0 {
            pass = false;
        }
        min_margin = min_margin.min(margin);
        for (&c, &r) in counts.iter().zip(&ref_counts) {
            worst_scaling = worst_scaling.max((c as f64 / (lambda * lambda * r as f64) - 1.0).abs());
        }
    }
    if worst_scaling > 1e-5 {
        pass = false;
    }
    println!(
        "acceptance 6: {} - noiseless 150-bit keys bit-identical under amplitude scaling lambda in {{0.5, 3, 10}}; counts track lambda^2 to {:.1e} (want <= 1e-5); min decision margin {:.0} counts (want >= 2)",
        verdict(pass),
        worst_scaling,
        min_margin
    );
    assert!(pass);
}

fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (sxy * sxy) / (sxx * syy)
}

#[test]
fn acceptance_07_reduction_sweeps() {
    // Key-length axis at the shipped calibration: longer keys must beat
    // shorter ones on both error rates, exponentially so for FAR.
    let grid_l: Vec<f64> = (1..=8).map(|i| (i * 50) as f64).collect();
    let base = SimContext::reference(7701);
    let points_l = reduction_sweep(SweepAxis::KeyLength, &grid_l, &base, 40, 40).unwrap();
    let far_decreasing = points_l.windows(2).all(|w| w[1].far < w[0].far);
    let frr_decreasing = points_l.windows(2).all(|w| w[1].frr < w[0].frr);
    let log_far: Vec<f64> = points_l.iter().map(|p| p.far.log10()).collect();
    let r2 = r_squared(&grid_l, &log_far);
    let l_ok = far_decreasing && frr_decreasing && r2 >= 0.95;

    // Mean-photon axis, shot noise only: averaging more photons per window
    // must lower the genuine flip rate across a decade.
    let grid_n = [2429.0, 5000.0, 10_000.0, 24_290.0];
    let mut base_n = SimContext::reference(7702);
    base_n.detector = DetectorConfig::shot_only(2429.0);
    let points_n = reduction_sweep(SweepAxis::MeanPhotons, &grid_n, &base_n, 40, 40).unwrap();
    let p1_decreasing = points_n.windows(2).all(|w| w[1].p1 < w[0].p1);

    // Guard-band axis at the shipped calibration: discarding borderline
    // enrollments buys error rate quickly at first, then saturates; the
    // fitted slope change must sit in the documented window.
    let grid_d = [0.005, 0.01, 0.02, 0.03, 0.04, 0.05];
    let base_d = SimContext::reference(7703);
    let points_d = reduction_sweep(SweepAxis::GuardFraction, &grid_d, &base_d, 40, 40).unwrap();
    let log_far_d: Vec<f64> = points_d.iter().map(|p| p.far.log10()).collect();
    let knee = knee_of(&grid_d, &log_far_d).unwrap();
    let knee_ok = (0.02..=0.05).contains(&knee);

    // A documented operating point must reach the headline analytic FAR.
    let mut base_doc = SimContext::reference(7704);
    base_doc.key_length = 300;
    base_doc.detector = DetectorConfig::shot_only(24_290.0);
    let doc = reduction_sweep(SweepAxis::GuardFraction, &[0.02], &base_doc, 40, 40).unwrap();
    let doc_far = doc[0].far;
    let doc_ok = doc_far <= 1e-28;

    let pass = l_ok && p1_decreasing && knee_ok && doc_ok;
    println!(
        "acceptance 7: {} - L-axis: FAR strictly down {}, FRR strictly down {}, R^2(log10 FAR vs L)={:.4} (want >= 0.95); p1 down across photon decade: {}; guard knee at delta/N_m={:.4} (want [0.02, 0.05]); documented point (L=300, <N>=24290, delta=0.02*N_m) FAR={:.3e} (want <= 1e-28)",
        verdict(pass),
        far_decreasing,
        frr_decreasing,
        r2,
        p1_decreasing,
        knee,
        doc_far
    );
    assert!(pass);
}

#[test]
fn acceptance_08_randomness_battery() {
    // 100 fresh tokens, a 10^4-bit median-thresholded key each: one million
    // bits of inter-device key material.
    const BLOCK: usize = 10_000;
    const BLOCKS: usize = 100;
    let cfg = DetectorConfig::default_calibrated();
    let blocks: Vec<Vec<bool>> = (0..BLOCKS as u64)
        .into_par_iter()
        .map(|b| {
            let puf = synthesize_puf(rng::mix(7801, b), 1200, 32).unwrap();
            let mut crng = rng::substream(rng::mix(7802, b), 0);
            let challenges: Vec<Challenge> = (0..BLOCK)
                .map(|_| generate_challenge(&mut crng, 1200).unwrap())
                .collect();
            let key = measure_median_key(&puf, &challenges, &cfg, rng::mix(7803, b)).unwrap();
            key.bits().to_vec()
        })
        .collect();
    let bits: Vec<bool> = blocks.into_iter().flatten().collect();
    assert_eq!(bits.len(), BLOCK * BLOCKS);

    let rows = battery_blocks(&bits, BLOCK).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for row in rows.iter().filter(|r| r.implemented) {
        if row.pass_rate < 0.96 {
            pass = false;
        }
        detail.push_str(&format!("{}={:.2} ", row.name, row.pass_rate));
    }
    println!(
        "acceptance 8: {} - per-test pass rates over 100 blocks of 10^4 bits (want every implemented test >= 0.96): {}",
        verdict(pass),
        detail.trim_end()
    );
    assert!(pass);
}

mod exact {
    //! Independent oracle: binomial tails in exact rational arithmetic.
    use num::{BigInt, BigRational, One, ToPrimitive, Zero};

    fn rpow(base: &BigRational, e: usize) -> BigRational {
        let mut r = BigRational::one();
        for _ in 0..e {
            r *= base;
        }
        r
    }

    /// Sum of Binomial(l, p) masses over [lo, hi], exact for dyadic p.
    pub fn tail(l: usize, p: f64, lo: usize, hi: usize) -> f64 {
        let p = BigRational::from_float(p).expect("finite probability");
        let q = BigRational::one() - &p;
        let mut sum = BigRational::zero();
        let mut binom = BigInt::one();
        for j in 0..=hi.min(l) {
            if j > 0 {
                // C(l, j) stays integral along the multiplicative recurrence.
                binom = binom * BigInt::from(l - j + 1) / BigInt::from(j);
            }
            if j >= lo {
                sum += BigRational::from_integer(binom.clone()) * rpow(&p, j) * rpow(&q, l - j);
            }
        }
        sum.to_f64().expect("ratio fits f64")
    }
}

#[test]
fn acceptance_09_brute_force_oracle_equivalence() {
    let mut worst_rel: f64 = 0.0;
    let mut grid_ok = true;
    for l in [5usize, 17, 30] {
        for (p1, p2) in [(0.056, 0.496), (0.3, 0.496)] {
            for mm in [1, l / 2, l - 1] {
                let (far, frr) = far_frr_at(l, mm, p1, p2).unwrap();
                let far_exact = exact::tail(l, p2, 0, mm);
                let frr_exact = exact::tail(l, p1, mm + 1, l);
                worst_rel = worst_rel.max(((far - far_exact) / far_exact).abs());
                if frr_exact > 0.0 {
                    worst_rel = worst_rel.max(((frr - frr_exact) / frr_exact).abs());
                }
            }
            // Grid enumeration of the crossing: scan every mismatch budget
            // and keep the one whose exact FAR/FRR are closest in log space.
            let rule = intersect_xc(p1, p2, l).unwrap();
            let mut best_j = 1usize;
            let mut best_gap = f64::INFINITY;
            for j in 1..l {
                let far = exact::tail(l, p2, 0, j);
                let frr = exact::tail(l, p1, j + 1, l);
                if far <= 0.0 || frr <= 0.0 {
                    continue;
                }
                let gap = (far.ln() - frr.ln()).abs();
                if gap < best_gap {
                    best_gap = gap;
                    best_j = j;
                }
            }
            if (rule.max_mismatch() as i64 - best_j as i64).abs() > 1 {
                grid_ok = false;
            }
        }
    }
    let pass = worst_rel <= 1e-12 && grid_ok;
    println!(
        "acceptance 9: {} - far_frr vs exact rational enumeration on L <= 30: worst relative error {:.2e} (want <= 1e-12); intersect_xc within one step of grid optimum: {}",
        verdict(pass),
        worst_rel,
        grid_ok
    );
    assert!(pass);
}

// ---- criterion 10 plumbing ----

const P10_SEGMENTS: usize = 128;
const P10_CELLS: usize = 75;
const P10_L: usize = 150;
const P10_SHARDS: u64 = 20;
const P10_SESSIONS_PER_SHARD: usize = 100;
const P10_TIMEOUT: Duration = Duration::from_secs(30);

fn p10_enroll(shard: u64, dir: &Path) -> (PufInstance, PathBuf) {
    let puf = synthesize_puf(rng::mix(9100, shard), P10_SEGMENTS, P10_CELLS).unwrap();
    let cfg = DetectorConfig::default_calibrated();
    let noise = rng::mix(9300, shard);
    let mut i = 0u64;
    let mut crng = rng::substream(rng::mix(9000, shard), 0);
    let challenges =
        std::iter::from_fn(move || Some(generate_challenge(&mut crng, P10_SEGMENTS).unwrap()));
    // One spare session of headroom on top of the scheduled hundred, for
    // the shard that loses one session to the forced crash.
    let count = (P10_SESSIONS_PER_SHARD + 2) * P10_L;
    let mut db = CrpDatabase::enroll(
        |c: &Challenge| {
            let mut r = rng::substream(noise, i);
            i += 1;
            Ok(respond(&puf, c, &cfg, &mut r)?.photon_count as f64)
        },
        challenges,
        count,
        GuardBand::Off,
    )
    .unwrap();
    let path = dir.join(format!("shard-{shard}.db"));
    db.bind(&path);
    db.save().unwrap();
    (puf, path)
}

fn p10_spawn_server(db: &Path, seed: u64) -> (Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_spuf"))
        .args([
            "serve",
            "--db",
            db.to_str().unwrap(),
            "--listen",
            "127.0.0.1:0",
            "--key-length",
            &P10_L.to_string(),
            "--auto-xc",
            "--seed",
            &seed.to_string(),
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected startup line: {line:?}"))
        .to_string();
    (child, addr)
}

/// Opens a session, receives the full challenge list, and then leaves the
/// connection hanging so the verifier can be killed mid-session.
fn p10_receive_challenges_and_hang(addr: &str) -> (TcpStream, Vec<String>) {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(P10_TIMEOUT)).unwrap();
    stream
        .write_all(encode(&WireMessage::Hello { version: 1 }).unwrap().as_bytes())
        .unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    match read_message(&mut reader).unwrap() {
        WireMessage::Hello { version: 1 } => {}
        other => panic!("expected HELLO, got {other:?}"),
    }
    let l = match read_message(&mut reader).unwrap() {
        WireMessage::AuthBegin { key_length, .. } => key_length,
        other => panic!("expected AUTH_BEGIN, got {other:?}"),
    };
    let mut ids = Vec::with_capacity(l);
    for want in 0..l {
        match read_message(&mut reader).unwrap() {
            WireMessage::Challenge { idx, challenge_hex } if idx == want => {
                let c = decode_challenge(&challenge_hex, challenge_hex.len() * 4).unwrap();
                ids.push(c.id().to_string());
            }
            other => panic!("expected CHALLENGE {want}, got {other:?}"),
        }
    }
    (stream, ids)
}

struct ShardOutcome {
    ids: Vec<String>,
    genuine_rejections: usize,
    impostor_acceptances: usize,
    wire_errors: usize,
    consumed_on_disk: usize,
    db_path: PathBuf,
}

fn p10_run_shard(shard: u64, dir: &Path) -> ShardOutcome {
    let (puf, db_path) = p10_enroll(shard, dir);
    let impostor = synthesize_puf(rng::mix(9200, shard), P10_SEGMENTS, P10_CELLS).unwrap();
    let cfg = DetectorConfig::default_calibrated();
    let (mut server, mut addr) = p10_spawn_server(&db_path, rng::mix(9400, shard));

    let mut ids: Vec<String> = Vec::new();
    let mut genuine_rejections = 0;
    let mut impostor_acceptances = 0;
    let mut wire_errors = 0;

    for s in 0..P10_SESSIONS_PER_SHARD {
        // Shard 0 takes a forced verifier crash mid-session at the halfway
        // mark: challenges issued, counts never sent, SIGKILL, restart.
        if shard == 0 && s == P10_SESSIONS_PER_SHARD / 2 {
            let (hang_stream, hang_ids) = p10_receive_challenges_and_hang(&addr);
            server.kill().unwrap();
            server.wait().unwrap();
            drop(hang_stream);
            ids.extend(hang_ids);
            let (restarted, new_addr) = p10_spawn_server(&db_path, rng::mix(9500, shard));
            server = restarted;
            addr = new_addr;
        }

        let genuine = s % 2 == 0;
        let stream = TcpStream::connect(&addr).unwrap();
        let seed = rng::mix(9600 + shard, s as u64);
        let out = prove(
            stream,
            Some(if genuine { &puf } else { &impostor }),
            &cfg,
            seed,
            ProverBehavior::Genuine,
            P10_TIMEOUT,
        )
        .unwrap();
        match out.result {
            Some((accept, _)) => {
                if genuine && !accept {
                    genuine_rejections += 1;
                }
                if !genuine && accept {
                    impostor_acceptances += 1;
                }
            }
            None => wire_errors += 1,
        }
        ids.extend(out.challenge_ids);
    }

    server.kill().unwrap();
    server.wait().unwrap();

    let on_disk = CrpDatabase::load(&db_path).unwrap();
    let consumed_on_disk = on_disk.len() - on_disk.unconsumed_len();
    ShardOutcome {
        ids,
        genuine_rejections,
        impostor_acceptances,
        wire_errors,
        consumed_on_disk,
        db_path,
    }
}

#[test]
fn acceptance_10_protocol_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let outcomes: Vec<ShardOutcome> = (0..P10_SHARDS)
        .into_par_iter()
        .map(|shard| p10_run_shard(shard, dir.path()))
        .collect();

    let mut genuine_rejections = 0;
    let mut impostor_acceptances = 0;
    let mut wire_errors = 0;
    let mut all_ids: HashSet<String> = HashSet::new();
    let mut reused = 0usize;
    let mut disk_consistent = true;
    let mut total_sessions_issued = 0usize;

    for o in &outcomes {
        genuine_rejections += o.genuine_rejections;
        impostor_acceptances += o.impostor_acceptances;
        wire_errors += o.wire_errors;
        total_sessions_issued += o.ids.len() / P10_L;
        if o.consumed_on_disk != o.ids.len() {
            disk_consistent = false;
            println!(
                "  {} shows {} consumed on disk but {} issued over the wire",
                o.db_path.display(),
                o.consumed_on_disk,
                o.ids.len()
            );
        }
        for id in &o.ids {
            if !all_ids.insert(id.clone()) {
                reused += 1;
            }
        }
    }

    let pass = genuine_rejections == 0
        && impostor_acceptances == 0
        && wire_errors == 0
        && reused == 0
        && disk_consistent;
    println!(
        "acceptance 10: {} - {} genuine + {} impostor TCP sessions over {} verifier instances (incl. one SIGKILL + restart mid-session): {} genuine rejections, {} impostor acceptances, {} wire errors, {} challenge ids reused across {} issued sessions, disk consumption consistent: {disk_consistent}",
        verdict(pass),
        P10_SHARDS as usize * P10_SESSIONS_PER_SHARD / 2,
        P10_SHARDS as usize * P10_SESSIONS_PER_SHARD / 2,
        P10_SHARDS + 1,
        genuine_rejections,
        impostor_acceptances,
        wire_errors,
        reused,
        total_sessions_issued
    );
    assert!(pass);
}

#[test]
fn acceptance_11_misalignment_decorrelation() {
    let puf = synthesize_puf(7901, 600, 302).unwrap();
    let mut crng = rng::seeded(7902);
    let challenges: Vec<Challenge> = (0..2000)
        .map(|_| generate_challenge(&mut crng, 600).unwrap())
        .collect();
    let cfg = DetectorConfig::noiseless(2429.0);
    let reference = measure_median_key(&puf, &challenges, &cfg, 7903).unwrap();

    let mut hds = Vec::new();
    for (dx, dtheta) in [(30.0, 0.0), (0.0, 0.5)] {
        let params = MisalignmentParams::with_default_scales(dx, dtheta).unwrap();
        let moved = apply_misalignment(&puf, &params, 7904).unwrap();
        let key = measure_median_key(&moved, &challenges, &cfg, 7903).unwrap();
        let mismatches: usize = reference
            .bits()
            .iter()
            .zip(key.bits())
            .filter(|(a, b)| a != b)
            .count();
        hds.push(mismatches as f64 / reference.bits().len() as f64);
    }
    let pass = hds.iter().all(|&h| h >= 0.45);
    println!(
        "acceptance 11: {} - key HD after misalignment: dx=30um -> {:.4}, dtheta=0.5deg -> {:.4} (want both >= 0.45)",
        verdict(pass),
        hds[0],
        hds[1]
    );
    assert!(pass);
}
