//! `sensecore` command-line front end.
//!
//! Output is JSON on stdout unless `--format csv` is given; `--out` sends it
//! to a file instead. Exit status is 0 on success, 2 on usage errors and 1
//! on runtime errors. SNRs and tone powers are taken in dB and converted to
//! linear units here, nowhere else.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::adaptive::{plan_sensing, OperatingPoint, Targets, ThresholdPlan};
use crate::error::{Error, Result};
use crate::estimator::{estimate_noise_power, estimate_snr, SnrEstimate};
use crate::montecarlo::{db_grid, roc_sweep, samples_vs_snr, MatchedGap, RocPair, RocScenario, SamplesRow};
use crate::scanner::{self, iq, PsdConfig, ScanReport, Window};
use crate::signals::{self, FixtureSpec, IqMetadata, NoiseModel, NoiseRealization, SignalKind, Snr, Tone};

/// Seed used when neither `--seed` nor `SENSECORE_SEED` is set.
pub const DEFAULT_SEED: u64 = 0x5EED;
pub const SEED_ENV: &str = "SENSECORE_SEED";

#[derive(Debug, Parser)]
#[command(name = "sensecore", version, about = "Adaptive energy-detection spectrum sensing toolkit")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Write the output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Cap on parallel worker threads.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize an IQ recording (tones plus noise) and its metadata sidecar.
    GenIq(GenIqArgs),
    /// Estimate the SNR of a recording against a known or calibrated noise floor.
    EstimateSnr(EstimateSnrArgs),
    /// Sample count and threshold for an SNR and (Pf, Pd) targets.
    Plan(PlanArgs),
    /// Monte Carlo ROC: adaptive vs fixed-threshold detection under noise uncertainty.
    Roc(RocArgs),
    /// Required sample count over an SNR grid.
    SamplesVsSnr(SamplesArgs),
    /// Scan an IQ recording for occupied bins, peaks and spectrum holes.
    Scan(ScanArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("length").required(true).args(["duration", "samples"])))]
struct GenIqArgs {
    /// Raw IQ output file (interleaved little-endian f32).
    #[arg(long, value_name = "PATH")]
    iq_out: PathBuf,
    /// Metadata sidecar path [default: IQ path with a .meta extension].
    #[arg(long, value_name = "PATH")]
    meta_out: Option<PathBuf>,
    #[arg(long, value_name = "HZ")]
    sample_rate: f64,
    #[arg(long, value_name = "HZ", default_value_t = 0.0)]
    center_freq: f64,
    /// Tone as OFFSET_HZ:POWER_DB (absolute power in dB); repeatable.
    #[arg(long = "tone", value_name = "OFFSET_HZ:POWER_DB", value_parser = parse_tone)]
    tones: Vec<Tone>,
    /// Noise power, linear.
    #[arg(long, default_value_t = 1.0)]
    noise_power: f64,
    /// Recording length in seconds.
    #[arg(long, value_name = "SECONDS")]
    duration: Option<f64>,
    /// Recording length in samples.
    #[arg(long, value_name = "N")]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("noise").required(true).args(["noise_power", "noise_in"])))]
struct EstimateSnrArgs {
    /// Recording to estimate.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Known noise power, linear.
    #[arg(long, conflicts_with = "noise_in")]
    noise_power: Option<f64>,
    /// Noise-only calibration recording.
    #[arg(long, value_name = "PATH")]
    noise_in: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long, allow_negative_numbers = true)]
    snr_db: f64,
    #[arg(long)]
    pf: f64,
    #[arg(long)]
    pd: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_power: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Realization {
    Nominal,
    Upper,
    Lower,
    Uniform,
}

impl From<Realization> for NoiseRealization {
    fn from(r: Realization) -> Self {
        match r {
            Realization::Nominal => NoiseRealization::Nominal,
            Realization::Upper => NoiseRealization::Upper,
            Realization::Lower => NoiseRealization::Lower,
            Realization::Uniform => NoiseRealization::UniformDraw,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Signal {
    Gaussian,
    ConstantModulus,
}

impl From<Signal> for SignalKind {
    fn from(s: Signal) -> Self {
        match s {
            Signal::Gaussian => SignalKind::Gaussian,
            Signal::ConstantModulus => SignalKind::ConstantModulus,
        }
    }
}

#[derive(Debug, Args)]
struct RocArgs {
    #[arg(long, allow_negative_numbers = true, default_value_t = -12.0)]
    snr_db: f64,
    /// Noise uncertainty ρ in dB.
    #[arg(long, default_value_t = 1.0)]
    uncertainty_db: f64,
    #[arg(long, value_enum, default_value_t = Realization::Uniform)]
    realization: Realization,
    #[arg(long, default_value_t = 1.0)]
    noise_power: f64,
    /// Sensing block length; planned from --design-pf/--design-pd when omitted.
    #[arg(long, value_name = "N", conflicts_with_all = ["design_pf", "design_pd"])]
    samples: Option<usize>,
    #[arg(long)]
    design_pf: Option<f64>,
    #[arg(long)]
    design_pd: Option<f64>,
    /// Calibration block length [default: the sensing block length].
    #[arg(long, value_name = "N")]
    calibration_len: Option<usize>,
    /// Comma-separated false-alarm targets, strictly increasing.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2,0.3,0.5")]
    pf_grid: Vec<f64>,
    /// Trials per hypothesis.
    #[arg(long, default_value_t = 2000)]
    trials: u64,
    #[arg(long, value_enum, default_value_t = Signal::Gaussian)]
    signal: Signal,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SamplesArgs {
    #[arg(long, allow_negative_numbers = true)]
    from_db: f64,
    #[arg(long, allow_negative_numbers = true)]
    to_db: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long)]
    pf: f64,
    #[arg(long)]
    pd: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WindowArg {
    Rect,
    Hann,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("metadata").required(true).args(["meta", "sample_rate"])))]
struct ScanArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Metadata sidecar (sample_rate_hz, center_freq_hz).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["sample_rate", "center_freq"])]
    meta: Option<PathBuf>,
    #[arg(long, value_name = "HZ", requires = "center_freq")]
    sample_rate: Option<f64>,
    #[arg(long, value_name = "HZ")]
    center_freq: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pf: f64,
    #[arg(long, default_value_t = 0.9)]
    pd: f64,
    #[arg(long, default_value_t = 1024)]
    nfft: usize,
    /// Periodograms averaged per frame.
    #[arg(long, default_value_t = 64)]
    segments: usize,
    #[arg(long, value_enum, default_value_t = WindowArg::Rect)]
    window: WindowArg,
    #[arg(long, default_value_t = 0.0)]
    uncertainty_db: f64,
    /// Also write the averaged PSD as frequency_hz,power_db CSV.
    #[arg(long, value_name = "PATH")]
    psd_csv: Option<PathBuf>,
}

fn parse_tone(s: &str) -> std::result::Result<Tone, String> {
    let (offset, db) = s
        .split_once(':')
        .ok_or_else(|| format!("expected OFFSET_HZ:POWER_DB, got {s:?}"))?;
    let offset_hz: f64 = offset.trim().parse().map_err(|e| format!("tone offset: {e}"))?;
    let db: f64 = db.trim().parse().map_err(|e| format!("tone power: {e}"))?;
    Ok(Tone {
        offset_hz,
        power: signals::db_to_linear(db),
    })
}

/// `--seed`, then `SENSECORE_SEED`, then [`DEFAULT_SEED`].
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| Error::domain(format!("{SEED_ENV}={v:?}: {e}"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

#[derive(Serialize)]
struct GenIqOutput {
    iq_path: PathBuf,
    meta_path: PathBuf,
    samples: usize,
    sample_rate_hz: f64,
    center_freq_hz: f64,
    noise_power: f64,
    tones: Vec<Tone>,
    seed: u64,
}

#[derive(Serialize)]
struct EstimateOutput {
    #[serde(flatten)]
    estimate: SnrEstimate,
    gamma_db: f64,
}

#[derive(Serialize)]
struct PlanOutput {
    #[serde(flatten)]
    plan: ThresholdPlan,
    snr_db: f64,
    closed_form: OperatingPoint,
}

#[derive(Serialize)]
struct RocOutput {
    scenario: RocScenario,
    pf_grid: Vec<f64>,
    trials: u64,
    seed: u64,
    #[serde(flatten)]
    curves: RocPair,
    matched_gap: Option<MatchedGap>,
}

#[derive(Serialize)]
struct SamplesOutput {
    targets: Targets,
    rows: Vec<SamplesRow>,
}

/// Rendered command output.
struct Rendered {
    json: String,
    csv: String,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::domain(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_from<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::domain(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::domain(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn default_meta_path(iq_path: &Path) -> PathBuf {
    iq_path.with_extension("meta")
}

fn run_gen_iq(args: &GenIqArgs) -> Result<Rendered> {
    let seed = resolve_seed(args.seed)?;
    let duration_s = match (args.duration, args.samples) {
        (Some(d), _) => d,
        (None, Some(n)) => n as f64 / args.sample_rate,
        (None, None) => unreachable!("clap enforces one of --duration/--samples"),
    };
    let spec = FixtureSpec {
        sample_rate_hz: args.sample_rate,
        center_freq_hz: args.center_freq,
        tones: args.tones.clone(),
        noise_power: args.noise_power,
        duration_s,
    };
    let fx = signals::gen_iq_fixture(&spec, seed)?;
    let meta_path = args
        .meta_out
        .clone()
        .unwrap_or_else(|| default_meta_path(&args.iq_out));
    iq::write_iq(&args.iq_out, &fx.block)?;
    iq::write_metadata(&meta_path, &fx.metadata)?;
    let out = GenIqOutput {
        iq_path: args.iq_out.clone(),
        meta_path,
        samples: fx.block.len(),
        sample_rate_hz: fx.metadata.sample_rate_hz,
        center_freq_hz: fx.metadata.center_freq_hz,
        noise_power: spec.noise_power,
        tones: spec.tones,
        seed,
    };
    Ok(Rendered {
        json: json(&out)?,
        csv: csv_from([(
            out.iq_path.display().to_string(),
            out.meta_path.display().to_string(),
            out.samples,
            out.sample_rate_hz,
            out.center_freq_hz,
            out.seed,
        )])
        .map(|body| format!("iq_path,meta_path,samples,sample_rate_hz,center_freq_hz,seed\n{body}"))?,
    })
}

fn read_samples(path: &Path) -> Result<signals::SampleBlock> {
    let bytes = fs::read(path)?;
    signals::SampleBlock::new(iq::decode_cf32(&bytes, path)?)
}

fn run_estimate(args: &EstimateSnrArgs) -> Result<Rendered> {
    let block = read_samples(&args.input)?;
    let noise_power = match (&args.noise_in, args.noise_power) {
        (Some(path), _) => estimate_noise_power(&read_samples(path)?),
        (None, Some(p)) => p,
        (None, None) => unreachable!("clap enforces one noise source"),
    };
    let estimate = estimate_snr(&block, noise_power)?;
    let out = EstimateOutput {
        gamma_db: estimate.gamma_db(),
        estimate,
    };
    Ok(Rendered {
        json: json(&out)?,
        csv: format!(
            "gamma_hat,gamma_db,n_used,noise_power_used\n{}",
            csv_from([(estimate.gamma_hat, out.gamma_db, estimate.n_used, estimate.noise_power_used)])?
        ),
    })
}

fn run_plan(args: &PlanArgs) -> Result<Rendered> {
    let targets = Targets::new(args.pf, args.pd)?;
    let snr = Snr::from_db(args.snr_db)?;
    let estimate = SnrEstimate::new(snr.linear(), 1, args.noise_power)?;
    let plan = plan_sensing(&estimate, &targets)?;
    let out = PlanOutput {
        closed_form: plan.closed_form()?,
        snr_db: args.snr_db,
        plan,
    };
    Ok(Rendered {
        json: json(&out)?,
        csv: format!(
            "snr_db,n_samples,threshold,noise_power,pf_target,pd_target,pf_closed_form,pd_closed_form\n{}",
            csv_from([(
                args.snr_db,
                plan.n_samples,
                plan.threshold,
                plan.noise_power_used,
                targets.pf(),
                targets.pd(),
                out.closed_form.pf,
                out.closed_form.pd,
            )])?
        ),
    })
}

fn run_roc(args: &RocArgs) -> Result<Rendered> {
    let seed = resolve_seed(args.seed)?;
    let noise = NoiseModel::new(args.noise_power, args.uncertainty_db, args.realization.into())?;
    let snr = Snr::from_db(args.snr_db)?;
    let mut scenario = RocScenario {
        snr,
        noise,
        n_samples: args.samples.unwrap_or(1),
        calibration_len: 1,
        signal: args.signal.into(),
    };
    if args.samples.is_none() {
        let targets = Targets::new(args.design_pf.unwrap_or(0.1), args.design_pd.unwrap_or(0.7))?;
        scenario = scenario.with_planned_samples(&targets)?;
    }
    scenario.calibration_len = args.calibration_len.unwrap_or(scenario.n_samples);
    let pair = roc_sweep(&scenario, &args.pf_grid, args.trials, seed)?;
    let out = RocOutput {
        matched_gap: pair.best_gap(0.1),
        scenario,
        pf_grid: args.pf_grid.clone(),
        trials: args.trials,
        seed,
        curves: pair,
    };
    #[derive(Serialize)]
    struct Row<'a> {
        label: &'a str,
        pf_target: f64,
        pf: f64,
        pd: f64,
        pf_half_width: f64,
        pd_half_width: f64,
        trials: u64,
    }
    let rows = [&out.curves.adaptive, &out.curves.conventional]
        .into_iter()
        .flat_map(|c| {
            c.points.iter().map(move |p| Row {
                label: &c.label,
                pf_target: p.pf_target,
                pf: p.pf,
                pd: p.pd,
                pf_half_width: p.pf_half_width,
                pd_half_width: p.pd_half_width,
                trials: p.trials,
            })
        });
    Ok(Rendered {
        csv: csv_from(rows)?,
        json: json(&out)?,
    })
}

fn run_samples(args: &SamplesArgs) -> Result<Rendered> {
    let targets = Targets::new(args.pf, args.pd)?;
    let rows = samples_vs_snr(&db_grid(args.from_db, args.to_db, args.step)?, &targets)?;
    #[derive(Serialize)]
    struct Row {
        snr_db: f64,
        n_samples: Option<usize>,
    }
    let csv = csv_from(rows.iter().map(|r| Row {
        snr_db: r.snr_db,
        n_samples: r.n_samples,
    }))?;
    Ok(Rendered {
        json: json(&SamplesOutput { targets, rows })?,
        csv,
    })
}

fn run_scan(args: &ScanArgs) -> Result<Rendered> {
    let meta = match (&args.meta, args.sample_rate, args.center_freq) {
        (Some(path), _, _) => iq::read_metadata(path)?,
        (None, Some(sample_rate_hz), Some(center_freq_hz)) => IqMetadata {
            sample_rate_hz,
            center_freq_hz,
        },
        _ => unreachable!("clap enforces --meta or --sample-rate with --center-freq"),
    };
    let rec = scanner::read_iq(&args.input, meta)?;
    let targets = Targets::new(args.pf, args.pd)?;
    let config = PsdConfig {
        nfft: args.nfft,
        segments: args.segments,
        window: match args.window {
            WindowArg::Rect => Window::Rectangular,
            WindowArg::Hann => Window::Hann,
        },
    };
    let (psd, report): (_, ScanReport) = scanner::scan_recording(&rec, &config, &targets, args.uncertainty_db)?;
    let csv = psd.to_csv();
    if let Some(path) = &args.psd_csv {
        fs::write(path, &csv)?;
    }
    Ok(Rendered {
        json: json(&report)?,
        csv,
    })
}

fn execute(cli: &Cli) -> Result<String> {
    let rendered = match &cli.command {
        Command::GenIq(a) => run_gen_iq(a),
        Command::EstimateSnr(a) => run_estimate(a),
        Command::Plan(a) => run_plan(a),
        Command::Roc(a) => run_roc(a),
        Command::SamplesVsSnr(a) => run_samples(a),
        Command::Scan(a) => run_scan(a),
    }?;
    Ok(match cli.format {
        Format::Json => rendered.json,
        Format::Csv => rendered.csv,
    })
}

/// Parses `argv` (program name first), runs it and returns the exit code.
pub fn dispatch<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
            } else {
                let _ = stdout.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| Error::domain(e.to_string()))
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    let written = result.and_then(|text| match &cli.out {
        Some(path) => fs::write(path, text).map_err(Error::from),
        None => stdout.write_all(text.as_bytes()).map_err(Error::from),
    });
    match written {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("sensecore").chain(args.iter().copied());
        let code = dispatch(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn plan_json() {
        let (code, out, _) = run(&["plan", "--snr-db", "0", "--pf", "0.1", "--pd", "0.7", "--noise-power", "1"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["n_samples"], 5);
        assert!((v["threshold"].as_f64().unwrap() - 1.5732).abs() < 1e-4);
    }

    #[test]
    fn usage_errors_exit_two() {
        let (code, _, err) = run(&["plan", "--snr-db", "0", "--pf", "0.1", "--pd", "0.7", "--bogus"]);
        assert_eq!(code, 2);
        assert!(err.contains("--bogus"), "{err}");
        let (code, _, _) = run(&["estimate-snr", "--in", "x.iq", "--noise-power", "1", "--noise-in", "y.iq"]);
        assert_eq!(code, 2);
        let (code, _, _) = run(&[]);
        assert_eq!(code, 2);
    }

    #[test]
    fn runtime_errors_exit_one() {
        let (code, _, err) = run(&["plan", "--snr-db", "0", "--pf", "0.8", "--pd", "0.7"]);
        assert_eq!(code, 1);
        assert!(err.contains("targets"), "{err}");
        let (code, _, _) = run(&["scan", "--in", "/nonexistent.iq", "--sample-rate", "1", "--center-freq", "0"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn tone_parser() {
        let t = parse_tone("-3e6:-10").unwrap();
        assert_eq!(t.offset_hz, -3e6);
        assert!((t.power - 0.1).abs() < 1e-15);
        assert!(parse_tone("nope").is_err());
    }

    #[test]
    fn samples_csv_columns() {
        let (code, out, _) = run(&[
            "samples-vs-snr", "--from-db", "-2", "--to-db", "0", "--step", "1", "--pf", "0.1", "--pd", "0.7",
            "--format", "csv",
        ]);
        assert_eq!(code, 0);
        let mut lines = out.lines();
        assert_eq!(lines.next(), Some("snr_db,n_samples"));
        assert_eq!(out.lines().count(), 4);
        assert!(out.ends_with("0.0,5\n"), "{out}");
    }
}
