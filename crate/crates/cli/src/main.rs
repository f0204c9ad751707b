//! `spuf`: synthesize tokens, enroll challenge-response databases, verify
//! keys locally or over TCP, and run the characterization statistics.

// Validation guards are written `!(x > 0.0)` so that NaN fails them; the
// suggested `x <= 0.0` would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write as _;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore as _;

use spuf_cli::prover::{prove, ProveOutcome, ProverBehavior};
use spuf_cli::server::{ServeOptions, Verifier};
use spuf_core::challenge::{decode_challenge, generate_challenge, Challenge};
use spuf_core::error::{Error, Result};
use spuf_core::keygen::GuardBand;
use spuf_core::measurement::{
    fit_gamma, respond, respond_batch, DetectorConfig, DEFAULT_DARK_RATE, DEFAULT_JITTER_REL,
    DEFAULT_MEAN_PHOTONS,
};
use spuf_core::protocol::{CrpDatabase, Verdict};
use spuf_core::puf::{synthesize_puf, PufInstance};
use spuf_core::rng;
use spuf_core::stats::binom::{far_frr, intersect_xc, DecisionRule};
use spuf_core::stats::nist::battery_blocks;
use spuf_core::stats::sim::{
    measure_median_key, simulate_inter_ensemble, simulate_inter_same_puf_ensemble,
    simulate_intra_ensemble, SimContext,
};
use spuf_core::stats::sweep::{reduction_sweep, write_sweep_csv, SweepAxis};

#[derive(Parser)]
#[command(
    name = "spuf",
    version,
    about = "Single-pixel optical PUF simulator and authentication tools"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a virtual PUF token and write it to a file.
    Synth(SynthArgs),
    /// Measure a PUF and build a challenge-response database.
    Enroll(EnrollArgs),
    /// Run one authentication session against a local database.
    Verify(VerifyArgs),
    /// Characterization statistics and reports.
    Stats {
        #[command(subcommand)]
        cmd: StatsCmd,
    },
    /// Run the verifier daemon.
    Serve(ServeArgs),
    /// Connect to a verifier and prove possession of a PUF.
    Prove(ProveArgs),
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Hamming-distance ensembles (intra, inter, inter-same-puf).
    Hd(HdArgs),
    /// Fit the gamma law to simulated photon counts.
    Fit(FitArgs),
    /// Analytic FAR/FRR at a decision threshold.
    Farfrr(FarfrrArgs),
    /// Error-rate sweeps along one configuration axis.
    Sweep(SweepArgs),
    /// Randomness test battery over simulated key material.
    Battery(BatteryArgs),
    /// Sweep the laser-jitter default against a target intra-key error rate.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Clone, Copy)]
struct DetectorArgs {
    /// Mean photon count per integration window at calibration.
    #[arg(long, default_value_t = DEFAULT_MEAN_PHOTONS)]
    mean_photons: f64,
    /// Enable Poisson shot noise on the photon counts.
    #[arg(long)]
    shot_noise: bool,
    /// Relative laser intensity jitter (standard deviation).
    #[arg(long, default_value_t = DEFAULT_JITTER_REL)]
    jitter: f64,
    /// Dark counts per integration window.
    #[arg(long, default_value_t = DEFAULT_DARK_RATE)]
    dark_rate: f64,
    /// Disable every noise source (overrides the other noise flags).
    #[arg(long)]
    noiseless: bool,
}

impl DetectorArgs {
    fn config(&self) -> Result<DetectorConfig> {
        let cfg = if self.noiseless {
            DetectorConfig::noiseless(self.mean_photons)
        } else {
            DetectorConfig {
                mean_photon_target: self.mean_photons,
                shot_noise: self.shot_noise,
                dark_rate: self.dark_rate,
                intensity_jitter_rel: self.jitter,
                integration_window_ms: 1.0,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RuleArgs {
    /// Normalized decision threshold x_c; accept iff mismatches <= floor(x_c * L).
    #[arg(long, conflicts_with = "auto_xc")]
    xc: Option<f64>,
    /// Place the threshold at the genuine/impostor distribution crossing.
    #[arg(long)]
    auto_xc: bool,
    /// Genuine per-bit error rate assumed by --auto-xc.
    #[arg(long, default_value_t = 0.056)]
    p1: f64,
    /// Impostor per-bit error rate assumed by --auto-xc.
    #[arg(long, default_value_t = 0.496)]
    p2: f64,
}

impl RuleArgs {
    fn rule(&self, key_length: usize) -> Result<DecisionRule> {
        match self.xc {
            Some(xc) => DecisionRule::new(xc, key_length),
            None => intersect_xc(self.p1, self.p2, key_length),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Token seed; the same seed always yields the same PUF.
    #[arg(long)]
    seed: u64,
    /// Number of illumination segments (even).
    #[arg(long, default_value_t = 600)]
    segments: usize,
    /// Number of detector speckle cells.
    #[arg(long, default_value_t = 302)]
    cells: usize,
    /// Output PUF file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnrollArgs {
    /// PUF file to measure.
    #[arg(long)]
    puf: PathBuf,
    /// Output database path.
    #[arg(long, env = "SPUF_DB")]
    db: PathBuf,
    /// Number of challenge-response pairs to measure.
    #[arg(long)]
    count: usize,
    /// Guard half-width in counts; pairs within the band are discarded.
    #[arg(long, conflicts_with = "delta_frac")]
    delta: Option<f64>,
    /// Guard half-width as a fraction of the batch median.
    #[arg(long)]
    delta_frac: Option<f64>,
    /// Seed for the challenge stream and measurement noise.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// PUF file presented by the prover.
    #[arg(long)]
    puf: PathBuf,
    /// Database to draw the session from (consumed pairs are persisted).
    #[arg(long, env = "SPUF_DB")]
    db: PathBuf,
    /// Session key length.
    #[arg(long, default_value_t = 150)]
    key_length: usize,
    #[command(flatten)]
    rule: RuleArgs,
    /// Measurement and session seed; omitted = OS entropy.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct ServeArgs {
    /// Database path; consumption is persisted here before challenges go out.
    #[arg(long, env = "SPUF_DB")]
    db: PathBuf,
    /// Listen address (port 0 picks a free port, printed on startup).
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    /// Session key length.
    #[arg(long, default_value_t = 150)]
    key_length: usize,
    #[command(flatten)]
    rule: RuleArgs,
    /// Per-message timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout_secs: f64,
    /// Session sampling seed; omitted = OS entropy.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ProveArgs {
    /// PUF file to measure challenges on.
    #[arg(long, required_unless_present = "random_counts")]
    puf: Option<PathBuf>,
    /// Verifier address, host:port.
    #[arg(long)]
    connect: String,
    /// Measurement noise seed; omitted = OS entropy.
    #[arg(long)]
    seed: Option<u64>,
    /// Answer uniform random counts instead of measuring.
    #[arg(long)]
    random_counts: bool,
    /// Send only the first N counts, then disconnect.
    #[arg(long, conflicts_with = "random_counts")]
    truncate_at: Option<usize>,
    /// Per-message timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout_secs: f64,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Copy, Clone, ValueEnum)]
enum HdKindArg {
    /// One PUF re-measured on its enrolled challenges.
    Intra,
    /// Distinct PUFs keyed on a common challenge list.
    Inter,
    /// One PUF keyed on disjoint challenge lists.
    InterSamePuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
}

#[derive(Args)]
struct SimShape {
    /// Number of illumination segments (even).
    #[arg(long, default_value_t = 600)]
    segments: usize,
    /// Number of detector speckle cells.
    #[arg(long, default_value_t = 302)]
    cells: usize,
    /// Key length per sample.
    #[arg(long, default_value_t = 150)]
    key_length: usize,
}

#[derive(Args)]
struct HdArgs {
    /// Which ensemble to simulate.
    #[arg(long, value_enum)]
    kind: HdKindArg,
    /// Ensemble size (keys or re-measurements).
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    shape: SimShape,
    /// Enrollment guard band as a fraction of the median (intra only).
    #[arg(long)]
    guard_frac: Option<f64>,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct FitArgs {
    /// Number of challenges to measure.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 600)]
    segments: usize,
    #[arg(long, default_value_t = 302)]
    cells: usize,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct FarfrrArgs {
    /// Key length.
    #[arg(long = "L")]
    l: usize,
    /// Normalized decision threshold.
    #[arg(long)]
    xc: f64,
    /// Genuine per-bit error rate.
    #[arg(long, default_value_t = 0.056)]
    p1: f64,
    /// Impostor per-bit error rate.
    #[arg(long, default_value_t = 0.496)]
    p2: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepAxisArg {
    KeyLength,
    MeanPhotons,
    GuardFraction,
}

#[derive(Args)]
struct SweepArgs {
    /// Configuration axis to sweep.
    #[arg(long, value_enum)]
    axis: SweepAxisArg,
    /// Grid values, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    /// PUFs per grid point (impostor ensemble).
    #[arg(long, default_value_t = 40)]
    n_pufs: usize,
    /// Re-measurements per grid point (genuine ensemble).
    #[arg(long, default_value_t = 40)]
    n_copies: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    shape: SimShape,
    /// Shot-noise-only detector at this mean (default: shipped calibration).
    #[arg(long)]
    shot_only: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct BatteryArgs {
    /// Total number of key bits to simulate.
    #[arg(long, default_value_t = 100_000)]
    bits: usize,
    /// Bits per analysis block (and per simulated key).
    #[arg(long, default_value_t = 10_000)]
    block_len: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of illumination segments (even). Adjacent key bits share a
    /// residual correlation of order 1/(pi * segments), so short challenges
    /// bias the runs statistics; the default keeps that bias negligible.
    #[arg(long, default_value_t = 1200)]
    segments: usize,
    /// Number of detector speckle cells.
    #[arg(long, default_value_t = 32)]
    cells: usize,
    #[command(flatten)]
    detector: DetectorArgs,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Intra-HD mean the default calibration should reproduce.
    #[arg(long, default_value_t = 0.056)]
    target: f64,
    /// Jitter values to sweep, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.005,0.006,0.007,0.008,0.009,0.01,0.011,0.012"
    )]
    grid: Vec<f64>,
    /// Re-measurements per grid point.
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    shape: SimShape,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn entropy_seed() -> u64 {
    rand::rngs::OsRng.next_u64()
}

fn run(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Enroll(a) => enroll(a),
        Cmd::Verify(a) => verify(a),
        Cmd::Stats { cmd } => match cmd {
            StatsCmd::Hd(a) => stats_hd(a),
            StatsCmd::Fit(a) => stats_fit(a),
            StatsCmd::Farfrr(a) => stats_farfrr(a),
            StatsCmd::Sweep(a) => stats_sweep(a),
            StatsCmd::Battery(a) => stats_battery(a),
            StatsCmd::Calibrate(a) => stats_calibrate(a),
        },
        Cmd::Serve(a) => serve(a),
        Cmd::Prove(a) => prove_cmd(a),
    }
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let puf = synthesize_puf(a.seed, a.segments, a.cells)?;
    puf.write_to(&a.out)?;
    println!(
        "wrote {} (segments={}, cells={}) to {}",
        puf.id(),
        a.segments,
        a.cells,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn enroll(a: EnrollArgs) -> Result<ExitCode> {
    let puf = PufInstance::read_from(&a.puf)?;
    let detector = a.detector.config()?;
    let m = puf.segment_count();
    let guard = match (a.delta, a.delta_frac) {
        (Some(d), _) => GuardBand::Counts(d),
        (None, Some(f)) => GuardBand::FractionOfMedian(f),
        (None, None) => GuardBand::Off,
    };

    let mut challenge_rng = rng::substream(a.seed, 0);
    let challenges =
        std::iter::from_fn(move || Some(generate_challenge(&mut challenge_rng, m).expect("even m")));
    let noise_seed = rng::mix(a.seed, 1);
    let mut measured = 0u64;
    let measure = |c: &Challenge| {
        let mut r = rng::substream(noise_seed, measured);
        measured += 1;
        Ok(respond(&puf, c, &detector, &mut r)?.photon_count as f64)
    };

    let mut db = CrpDatabase::enroll(measure, challenges, a.count, guard)?;
    db.bind(&a.db);
    db.save()?;
    println!(
        "enrolled {} pairs (measured {}, segments={}) into {}",
        db.len(),
        a.count,
        m,
        a.db.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    let puf = PufInstance::read_from(&a.puf)?;
    let detector = a.detector.config()?;
    let mut db = CrpDatabase::load(&a.db)?;
    let rule = a.rule.rule(a.key_length)?;
    let seed = a.seed.unwrap_or_else(entropy_seed);

    let mut session_rng = rng::substream(rng::mix(seed, 0), 0);
    let mut session = db.open_session(a.key_length, &mut session_rng)?;
    let noise_seed = rng::mix(seed, 1);
    let counts: Vec<f64> = session
        .challenges_hex()
        .iter()
        .enumerate()
        .map(|(i, hx)| {
            let c = decode_challenge(hx, db.segment_count())?;
            let mut r = rng::substream(noise_seed, i as u64);
            Ok(respond(&puf, &c, &detector, &mut r)?.photon_count as f64)
        })
        .collect::<Result<_>>()?;

    let (verdict, hd) = session.verify(&counts, &rule)?;
    match verdict {
        Verdict::Accept => {
            println!("RESULT ACCEPT hd={hd}");
            Ok(ExitCode::SUCCESS)
        }
        _ => {
            println!("RESULT REJECT hd={hd}");
            Ok(ExitCode::from(1))
        }
    }
}

fn serve(a: ServeArgs) -> Result<ExitCode> {
    let db = CrpDatabase::load(&a.db)?;
    let rule = a.rule.rule(a.key_length)?;
    if !(a.timeout_secs > 0.0) {
        return Err(Error::invalid("timeout must be positive"));
    }
    let listener = TcpListener::bind(&a.listen)?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;

    let verifier = Arc::new(Verifier::new(
        db,
        ServeOptions {
            key_length: a.key_length,
            rule,
            timeout: Duration::from_secs_f64(a.timeout_secs),
            seed: a.seed,
        },
    ));
    verifier.serve(listener)?;
    Ok(ExitCode::SUCCESS)
}

fn prove_cmd(a: ProveArgs) -> Result<ExitCode> {
    let puf = match &a.puf {
        Some(p) => Some(PufInstance::read_from(p)?),
        None => None,
    };
    let detector = a.detector.config()?;
    let behavior = if a.random_counts {
        ProverBehavior::RandomCounts
    } else if let Some(n) = a.truncate_at {
        ProverBehavior::TruncateAt(n)
    } else {
        ProverBehavior::Genuine
    };
    if !(a.timeout_secs > 0.0) {
        return Err(Error::invalid("timeout must be positive"));
    }
    let stream = TcpStream::connect(&a.connect)?;
    let outcome: ProveOutcome = prove(
        stream,
        puf.as_ref(),
        &detector,
        a.seed.unwrap_or_else(entropy_seed),
        behavior,
        Duration::from_secs_f64(a.timeout_secs),
    )?;
    match (outcome.result, outcome.error) {
        (Some((true, hd)), _) => {
            println!("RESULT ACCEPT hd={hd}");
            Ok(ExitCode::SUCCESS)
        }
        (Some((false, hd)), _) => {
            println!("RESULT REJECT hd={hd}");
            Ok(ExitCode::from(1))
        }
        (None, Some(reason)) => {
            println!("ERROR {reason}");
            Ok(ExitCode::from(2))
        }
        (None, None) => {
            println!("ERROR session ended without a result");
            Ok(ExitCode::from(2))
        }
    }
}

fn stats_hd(a: HdArgs) -> Result<ExitCode> {
    let mut ctx = SimContext::reference(a.seed);
    ctx.segment_count = a.shape.segments;
    ctx.cell_count = a.shape.cells;
    ctx.key_length = a.shape.key_length;
    ctx.detector = a.detector.config()?;
    if let Some(f) = a.guard_frac {
        ctx.guard = GuardBand::FractionOfMedian(f);
    }
    let (kind, stats) = match a.kind {
        HdKindArg::Intra => ("intra", simulate_intra_ensemble(&ctx, a.n)?),
        HdKindArg::Inter => ("inter", simulate_inter_ensemble(&ctx, a.n)?),
        HdKindArg::InterSamePuf => (
            "inter-same-puf",
            simulate_inter_same_puf_ensemble(&ctx, a.n)?,
        ),
    };
    let l_eff = stats.mean * (1.0 - stats.mean) / stats.variance;
    match a.format {
        OutputFormat::Text => println!(
            "kind={kind} n={} key_length={} mean={:.6} variance={:.4e} effective_length={:.1}",
            stats.samples.len(),
            ctx.key_length,
            stats.mean,
            stats.variance,
            l_eff
        ),
        OutputFormat::Csv => {
            println!("kind,n,key_length,mean,variance,effective_length");
            println!(
                "{kind},{},{},{:.6},{:.6e},{:.3}",
                stats.samples.len(),
                ctx.key_length,
                stats.mean,
                stats.variance,
                l_eff
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn stats_fit(a: FitArgs) -> Result<ExitCode> {
    let puf = synthesize_puf(rng::mix(a.seed, 1), a.segments, a.cells)?;
    let detector = a.detector.config()?;
    let mut crng = rng::substream(a.seed, 0);
    let challenges: Vec<Challenge> = (0..a.n)
        .map(|_| generate_challenge(&mut crng, a.segments))
        .collect::<Result<_>>()?;
    let samples = respond_batch(&puf, &challenges, &detector, rng::mix(a.seed, 2))?;
    let counts: Vec<u64> = samples.iter().map(|s| s.photon_count).collect();
    let fit = fit_gamma(&counts)?;
    match a.format {
        OutputFormat::Text => println!(
            "samples={} mean={:.3} shape={:.3}",
            counts.len(),
            fit.mean,
            fit.shape
        ),
        OutputFormat::Csv => {
            println!("samples,mean,shape");
            println!("{},{:.6},{:.6}", counts.len(), fit.mean, fit.shape);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn stats_calibrate(a: CalibrateArgs) -> Result<ExitCode> {
    if a.grid.is_empty() {
        return Err(Error::EmptyInput("calibration grid"));
    }
    // One seed for every point: same PUF, challenges, and noise stream, so
    // the intra mean varies smoothly with the jitter magnitude alone.
    let mut rows = Vec::with_capacity(a.grid.len());
    for &jitter in &a.grid {
        let mut ctx = SimContext::reference(a.seed);
        ctx.segment_count = a.shape.segments;
        ctx.cell_count = a.shape.cells;
        ctx.key_length = a.shape.key_length;
        ctx.detector.intensity_jitter_rel = jitter;
        let stats = simulate_intra_ensemble(&ctx, a.n)?;
        rows.push((jitter, stats.mean, stats.variance));
    }
    let best = rows
        .iter()
        .min_by(|x, y| (x.1 - a.target).abs().total_cmp(&(y.1 - a.target).abs()))
        .copied()
        .unwrap();
    match a.format {
        OutputFormat::Text => {
            println!("jitter   intra_mean  intra_variance");
            for (j, m, v) in &rows {
                println!("{j:<8} {m:<11.4} {v:.3e}");
            }
            println!(
                "calibrated jitter = {} (intra mean {:.4}, target {})",
                best.0, best.1, a.target
            );
        }
        OutputFormat::Csv => {
            println!("jitter,intra_mean,intra_variance");
            for (j, m, v) in &rows {
                println!("{j},{m:.6},{v:.6e}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn stats_farfrr(a: FarfrrArgs) -> Result<ExitCode> {
    let (far, frr) = far_frr(a.l, a.xc, a.p1, a.p2)?;
    match a.format {
        OutputFormat::Text => println!("FAR={far:.1e} FRR={frr:.1e}"),
        OutputFormat::Csv => {
            println!("far,frr");
            println!("{far:e},{frr:e}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn stats_sweep(a: SweepArgs) -> Result<ExitCode> {
    let mut base = SimContext::reference(a.seed);
    base.segment_count = a.shape.segments;
    base.cell_count = a.shape.cells;
    base.key_length = a.shape.key_length;
    if a.shot_only {
        base.detector = DetectorConfig::shot_only(base.detector.mean_photon_target);
    }
    let axis = match a.axis {
        SweepAxisArg::KeyLength => SweepAxis::KeyLength,
        SweepAxisArg::MeanPhotons => SweepAxis::MeanPhotons,
        SweepAxisArg::GuardFraction => SweepAxis::GuardFraction,
    };
    let points = reduction_sweep(axis, &a.grid, &base, a.n_pufs, a.n_copies)?;

    if let Some(path) = &a.out {
        let mut file = std::fs::File::create(path)?;
        write_sweep_csv(&points, &mut file)?;
        println!("wrote {} sweep points to {}", points.len(), path.display());
        return Ok(ExitCode::SUCCESS);
    }
    match a.format {
        OutputFormat::Csv => {
            let mut out = std::io::stdout().lock();
            write_sweep_csv(&points, &mut out)?;
        }
        OutputFormat::Text => {
            println!(
                "{:>12} {:>10} {:>10} {:>11} {:>11}",
                "axis", "p1", "p2", "FAR", "FRR"
            );
            for p in &points {
                println!(
                    "{:>12} {:>10.4} {:>10.4} {:>11.3e} {:>11.3e}",
                    p.axis_value, p.p1, p.p2, p.far, p.frr
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn stats_battery(a: BatteryArgs) -> Result<ExitCode> {
    if a.block_len == 0 || a.bits < a.block_len {
        return Err(Error::invalid(
            "need at least one full block of bits",
        ));
    }
    let detector = a.detector.config()?;
    let n_blocks = a.bits / a.block_len;
    // One fresh PUF per block: the battery sees inter-device key material,
    // not one device stretched thin.
    let mut bits = Vec::with_capacity(n_blocks * a.block_len);
    for b in 0..n_blocks as u64 {
        let puf = synthesize_puf(rng::mix(a.seed, 5000 + b), a.segments, a.cells)?;
        let mut crng = rng::substream(rng::mix(a.seed, 6000 + b), 0);
        let challenges: Vec<Challenge> = (0..a.block_len)
            .map(|_| generate_challenge(&mut crng, a.segments))
            .collect::<Result<_>>()?;
        let key = measure_median_key(&puf, &challenges, &detector, rng::mix(a.seed, 7000 + b))?;
        bits.extend_from_slice(key.bits());
    }
    let rows = battery_blocks(&bits, a.block_len)?;

    match a.format {
        OutputFormat::Csv => {
            println!("test,implemented,blocks,pass_rate,uniformity_p");
            for r in &rows {
                if r.implemented {
                    println!(
                        "{},1,{},{:.4},{:.6}",
                        r.name, r.blocks, r.pass_rate, r.uniformity_p
                    );
                } else {
                    println!("{},0,,,", r.name);
                }
            }
        }
        OutputFormat::Text => {
            println!(
                "{:<28} {:>7} {:>10} {:>13}  status",
                "test", "blocks", "pass_rate", "uniformity_P"
            );
            for r in &rows {
                if r.implemented {
                    println!(
                        "{:<28} {:>7} {:>10.3} {:>13.4}  ok",
                        r.name, r.blocks, r.pass_rate, r.uniformity_p
                    );
                } else {
                    println!("{:<28} {:>7} {:>10} {:>13}  not implemented", r.name, "-", "-", "-");
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
