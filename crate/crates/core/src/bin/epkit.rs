//! Command-line front end for the evoked-potential analysis chain.
//!
//! Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epkit::conduction::{self, ConductionEstimate};
use epkit::error::{Error, ExitClass};
use epkit::manifest;
use epkit::pipeline::{self, PipelineConfig};
use epkit::report::{self, Table};
use epkit::signal::{Session, StimTrain};
use epkit::stats::{self, TTestMode, Tails};
use epkit::synth::{self, NoiseSpec};

/// Environment variable naming the default output directory for commands
/// that write session directories.
const OUT_DIR_ENV: &str = "EPKIT_OUT";

#[derive(Parser)]
#[command(
    name = "epkit",
    about = "Analysis chain for stimulation-evoked cortical potentials",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session with a ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Artifact excision, 50 Hz template subtraction and band-pass.
    Preprocess(PreprocessArgs),
    /// Extract, baseline-correct and average epochs for one channel/train.
    Epochs(EpochsArgs),
    /// Waveform metrics for every accepted averaged EP.
    Metrics(MetricsArgs),
    /// Baseline-normalized time-frequency map and gamma summary.
    Tfr(TfrArgs),
    /// Onset delays and conduction velocities from two metrics tables.
    Velocity(VelocityArgs),
    /// Statistical comparison of metric tables.
    Compare(CompareArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML pipeline config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Band-pass low edge, Hz.
    #[arg(long)]
    band_lo: Option<f64>,
    /// Band-pass high edge, Hz.
    #[arg(long)]
    band_hi: Option<f64>,
    /// Band-pass prototype order.
    #[arg(long)]
    band_order: Option<usize>,
    /// Excision tail after the pulse, ms.
    #[arg(long)]
    extra_ms: Option<f64>,
    /// Epoch window as "lo,hi" in ms.
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    window_ms: Option<(f64, f64)>,
    /// Amplitude gate threshold, uV.
    #[arg(long)]
    threshold_uv: Option<f64>,
    /// Flip reversed-polarity traces before metrics.
    #[arg(long)]
    invert: bool,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected \"lo,hi\"")?;
    let lo: f64 = a.trim().parse().map_err(|_| "bad low bound")?;
    let hi: f64 = b.trim().parse().map_err(|_| "bad high bound")?;
    Ok((lo, hi))
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.band_lo {
            cfg.band_lo_hz = v;
        }
        if let Some(v) = self.band_hi {
            cfg.band_hi_hz = v;
        }
        if let Some(v) = self.band_order {
            cfg.band_order = v;
        }
        if let Some(v) = self.extra_ms {
            cfg.excision_extra_ms = v;
        }
        if let Some(v) = self.window_ms {
            cfg.epoch_window_ms = v;
        }
        if let Some(v) = self.threshold_uv {
            cfg.amplitude_threshold_uv = v;
        }
        if self.invert {
            cfg.invert = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Dcr,
    Acep,
}

#[derive(Args)]
struct SimulateArgs {
    /// Response kernel preset.
    #[arg(long, value_enum)]
    preset: PresetArg,
    /// Conduction delay override, ms.
    #[arg(long)]
    delay_ms: Option<f64>,
    /// Pulses in the train.
    #[arg(long, default_value_t = 30)]
    pulses: usize,
    /// Stimulation frequency, Hz.
    #[arg(long, default_value_t = 9.0)]
    f_des: f64,
    /// Pulse width, ms.
    #[arg(long, default_value_t = 1.0)]
    pulse_width_ms: f64,
    /// Sampling rate, Hz.
    #[arg(long, default_value_t = 19200.0)]
    fs: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// White-noise sigma, uV.
    #[arg(long, default_value_t = 20.0)]
    white_uv: f64,
    /// 50 Hz hum amplitude, uV.
    #[arg(long, default_value_t = 50.0)]
    line_uv: f64,
    /// Stimulation-artifact stub amplitude, uV.
    #[arg(long, default_value_t = 2000.0)]
    artifact_uv: f64,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Recording length, s (computed from the train when omitted).
    #[arg(long)]
    duration_s: Option<f64>,
    /// Output directory (defaults to $EPKIT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Session directory or manifest path.
    #[arg(long)]
    session: PathBuf,
    /// Output directory (defaults to $EPKIT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EpochsArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long)]
    channel: String,
    #[arg(long, default_value_t = 0)]
    train: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    session: PathBuf,
    /// Restrict to one channel.
    #[arg(long)]
    channel: Option<String>,
    /// Restrict to one train index.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TfrArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long)]
    channel: String,
    #[arg(long, default_value_t = 0)]
    train: usize,
    /// Run even when the session carries no line-noise removal step.
    #[arg(long)]
    allow_dirty: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct VelocityArgs {
    /// Metrics table of the reference (cortical) responses.
    #[arg(long)]
    dcr: PathBuf,
    /// Metrics table of the delayed (axonal) responses.
    #[arg(long)]
    acep: PathBuf,
    /// Straight-line stimulation-to-recording distance, mm.
    #[arg(long)]
    distance_mm: f64,
    /// Also report the predicted delay for this fiber diameter, um.
    #[arg(long)]
    diameter_um: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    /// Paired Student t on a vs b.
    PairedT,
    /// One-sample Student t of a against zero.
    TVsZero,
    /// Wilcoxon-Mann-Whitney rank test.
    RankSum,
    /// Shapiro-Wilk normality (of a - b when b is given, else of a).
    Shapiro,
    /// Least squares of --field-y on --field-x.
    Regression,
}

#[derive(Clone, Copy, ValueEnum)]
enum TailsArg {
    Two,
    Less,
    Greater,
    /// One-sided in the direction of the observed effect.
    One,
}

#[derive(Args)]
struct CompareArgs {
    /// First metrics table.
    #[arg(long)]
    a: PathBuf,
    /// Second metrics table (t-vs-zero, regression and single-sample
    /// shapiro run on --a alone).
    #[arg(long)]
    b: Option<PathBuf>,
    /// Column to compare.
    #[arg(long)]
    field: Option<String>,
    /// Regression abscissa column.
    #[arg(long)]
    field_x: Option<String>,
    /// Regression ordinate column.
    #[arg(long)]
    field_y: Option<String>,
    #[arg(long, value_enum)]
    test: TestArg,
    #[arg(long, value_enum, default_value = "two")]
    tails: TailsArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(ExitClass::Usage as u8)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_class() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Preprocess(args) => preprocess(args),
        Command::Epochs(args) => epochs_cmd(args),
        Command::Metrics(args) => metrics_cmd(args),
        Command::Tfr(args) => tfr_cmd(args),
        Command::Velocity(args) => velocity_cmd(args),
        Command::Compare(args) => compare_cmd(args),
    }
}

fn out_dir(arg: Option<PathBuf>) -> Result<PathBuf, Error> {
    arg.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| {
            Error::Config(format!(
                "no output directory: pass --out or set ${OUT_DIR_ENV}"
            ))
        })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load(session_arg: &Path) -> Result<Session, Error> {
    manifest::load_session(&manifest::resolve_manifest_path(session_arg))
}

fn simulate(args: SimulateArgs) -> Result<(), Error> {
    let dir = out_dir(args.out)?;
    let mut spec = match args.preset {
        PresetArg::Dcr => synth::dcr_preset(),
        PresetArg::Acep => synth::acep_preset(),
    };
    if let Some(delay) = args.delay_ms {
        spec.conduction_delay_ms = delay;
    }
    let noise = NoiseSpec {
        white_sigma_uv: args.white_uv,
        line_50hz_amp_uv: args.line_uv,
        line_phase_rad: 0.0,
        artifact_amp_uv: args.artifact_uv,
        rng_seed: args.seed,
    };
    let start = (0.5 * args.fs) as usize;
    let train = StimTrain::regular(
        spec.kind,
        args.f_des,
        args.pulses,
        args.pulse_width_ms,
        args.fs,
        start,
        [0.0; 3],
    );
    let duration = args
        .duration_s
        .unwrap_or_else(|| 0.5 + args.pulses as f64 / args.f_des + 0.3);
    let (mut session, truth) =
        synth::synth_recording(&spec, &train, &noise, args.fs, duration, args.channels)?;
    session.patient_label = format!("sim-{}-seed{}", spec.kind, args.seed);

    manifest::save_session(&session, &dir)?;
    fs::write(
        dir.join("truth.txt"),
        report::write_truth_sidecar(&spec, &noise, &truth, args.pulses, args.f_des),
    )?;
    eprintln!(
        "wrote session ({} pulses, {} channel(s), {:.2} s) to {}",
        args.pulses,
        args.channels,
        duration,
        dir.display()
    );
    Ok(())
}

fn preprocess(args: PreprocessArgs) -> Result<(), Error> {
    let cfg = args.config.build()?;
    let dir = out_dir(args.out)?;
    let session = load(&args.session)?;
    let (clean, rep) = pipeline::preprocess_session(&session, &cfg)?;
    manifest::save_session(&clean, &dir)?;
    // carry the ground truth along when present
    let src_truth = manifest::resolve_manifest_path(&args.session)
        .parent()
        .map(|p| p.join("truth.txt"))
        .filter(|p| p.is_file());
    if let Some(truth) = src_truth {
        fs::copy(&truth, dir.join("truth.txt"))?;
    }
    eprintln!(
        "preprocessed {} channel(s): noisiest {}, {} excision window(s), line rate exact: {}",
        clean.buffer.n_channels(),
        rep.noisiest_channel,
        rep.n_excision_windows,
        rep.line_rate_exact
    );
    if !rep.line_rate_exact {
        eprintln!("warning: fs/50 is not an integer; line templates were resampled");
    }
    Ok(())
}

fn epochs_cmd(args: EpochsArgs) -> Result<(), Error> {
    let cfg = args.config.build()?;
    let session = load(&args.session)?;
    let (set, ep) = pipeline::extract_and_average(&session, &args.channel, args.train, &cfg)?;
    if set.n_dropped > 0 {
        eprintln!(
            "warning: dropped {} pulse(s) whose window left the buffer",
            set.n_dropped
        );
    }
    let stability = if set.epochs.len() >= 4 {
        Some(epkit::epochs::stability_check(
            &set,
            cfg.stability_threshold,
        )?)
    } else {
        None
    };
    emit(
        args.out.as_deref(),
        &report::write_evoked(&ep, stability.as_ref()),
    )
}

fn metrics_cmd(args: MetricsArgs) -> Result<(), Error> {
    let cfg = args.config.build()?;
    let session = load(&args.session)?;
    let (rows, rejected) =
        pipeline::metrics_for_session(&session, args.channel.as_deref(), args.train, &cfg)?;
    if rejected > 0 {
        eprintln!(
            "note: {rejected} averaged EP(s) under the {} uV gate",
            cfg.amplitude_threshold_uv
        );
    }
    emit(args.out.as_deref(), &report::write_metrics_table(&rows))
}

fn tfr_cmd(args: TfrArgs) -> Result<(), Error> {
    let cfg = args.config.build()?;
    let session = load(&args.session)?;
    let (map, gamma) =
        pipeline::tfr_for_session(&session, &args.channel, args.train, &cfg, args.allow_dirty)?;
    emit(
        args.out.as_deref(),
        &report::write_tf_map(&map, &cfg.gamma_centers_ms, gamma),
    )
}

fn velocity_cmd(args: VelocityArgs) -> Result<(), Error> {
    let dcr = Table::parse(&fs::read_to_string(&args.dcr)?)?;
    let acep = Table::parse(&fs::read_to_string(&args.acep)?)?;
    let a = dcr.column_f64("t_zc1_ms")?;
    let b = acep.column_f64("t_zc1_ms")?;
    // pair row-wise; a single-row table broadcasts against the other side
    let pairs: Vec<(f64, f64)> = if a.len() == 1 {
        b.iter().filter_map(|y| Some((a[0]?, (*y)?))).collect()
    } else if b.len() == 1 {
        a.iter().filter_map(|x| Some(((*x)?, b[0]?))).collect()
    } else if a.len() == b.len() {
        a.iter()
            .zip(b.iter())
            .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
            .collect()
    } else {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    };
    if pairs.is_empty() {
        return Err(Error::UndefinedOnset);
    }
    let estimates: Vec<ConductionEstimate> = pairs
        .iter()
        .map(|&(d, ac)| ConductionEstimate::new(args.distance_mm, ac - d))
        .collect::<Result<_, _>>()?;
    let agg = conduction::aggregate(&estimates);
    let hursh = match args.diameter_um {
        Some(d) => Some((d, conduction::hursh_predicted_delay(d, args.distance_mm)?)),
        None => None,
    };
    emit(
        args.out.as_deref(),
        &report::write_velocity_report(&estimates, &agg, hursh),
    )
}

fn required_field(args: &CompareArgs) -> Result<&str, Error> {
    args.field
        .as_deref()
        .ok_or_else(|| Error::Config("--field is required for this test".into()))
}

fn paired_columns(args: &CompareArgs) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let field = required_field(args)?;
    let a_table = Table::parse(&fs::read_to_string(&args.a)?)?;
    let b_path = args
        .b
        .as_ref()
        .ok_or_else(|| Error::Config("--b is required for this test".into()))?;
    let b_table = Table::parse(&fs::read_to_string(b_path)?)?;
    let a = a_table.column_f64(field)?;
    let b = b_table.column_f64(field)?;
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for (x, y) in a.iter().zip(b.iter()) {
        match (x, y) {
            (Some(x), Some(y)) => {
                xs.push(*x);
                ys.push(*y);
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        eprintln!("note: dropped {dropped} pair(s) with missing values");
    }
    Ok((xs, ys))
}

fn single_column(path: &Path, field: &str) -> Result<Vec<f64>, Error> {
    let table = Table::parse(&fs::read_to_string(path)?)?;
    Ok(table.column_f64(field)?.into_iter().flatten().collect())
}

fn compare_cmd(args: CompareArgs) -> Result<(), Error> {
    let resolve_tails = |observed: f64| match args.tails {
        TailsArg::Two => Tails::Two,
        TailsArg::Less => Tails::Less,
        TailsArg::Greater => Tails::Greater,
        TailsArg::One => {
            if observed < 0.0 {
                Tails::Less
            } else {
                Tails::Greater
            }
        }
    };
    let text = match args.test {
        TestArg::PairedT => {
            let (a, b) = paired_columns(&args)?;
            let two = stats::t_test(&a, Some(&b), TTestMode::Paired, Tails::Two)?;
            let result = stats::t_test(
                &a,
                Some(&b),
                TTestMode::Paired,
                resolve_tails(two.statistic),
            )?;
            // the comparison protocol checks normality of the differences
            // before the paired test; report it alongside
            let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
            let mut text = report::write_test_result(&result);
            match stats::shapiro_wilk(&diffs) {
                Ok(sw) => text.push_str(&format!(
                    "shapiro_w = {}\nshapiro_p = {:.6e}\n",
                    report::fmt_f64(sw.statistic),
                    sw.p_value
                )),
                Err(e) => text.push_str(&format!("shapiro_w = NA ({e})\n")),
            }
            text
        }
        TestArg::TVsZero => {
            let a = single_column(&args.a, required_field(&args)?)?;
            let two = stats::t_test(&a, None, TTestMode::OneSampleVsZero, Tails::Two)?;
            let result = stats::t_test(
                &a,
                None,
                TTestMode::OneSampleVsZero,
                resolve_tails(two.statistic),
            )?;
            report::write_test_result(&result)
        }
        TestArg::RankSum => {
            let field = required_field(&args)?;
            let b_path = args
                .b
                .as_ref()
                .ok_or_else(|| Error::Config("--b is required for this test".into()))?;
            let a = single_column(&args.a, field)?;
            let b = single_column(b_path, field)?;
            let two = stats::rank_sum(&a, &b, Tails::Two)?;
            let centered = two.statistic - (a.len() * b.len()) as f64 / 2.0;
            let result = stats::rank_sum(&a, &b, resolve_tails(centered))?;
            report::write_test_result(&result)
        }
        TestArg::Shapiro => {
            let sample: Vec<f64> = match &args.b {
                Some(_) => {
                    let (a, b) = paired_columns(&args)?;
                    a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
                }
                None => single_column(&args.a, required_field(&args)?)?,
            };
            report::write_test_result(&stats::shapiro_wilk(&sample)?)
        }
        TestArg::Regression => {
            let fx = args
                .field_x
                .as_deref()
                .ok_or_else(|| Error::Config("--field-x is required for regression".into()))?;
            let fy = args
                .field_y
                .as_deref()
                .ok_or_else(|| Error::Config("--field-y is required for regression".into()))?;
            let table = Table::parse(&fs::read_to_string(&args.a)?)?;
            let xs = table.column_f64(fx)?;
            let ys = table.column_f64(fy)?;
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for (a, b) in xs.iter().zip(ys.iter()) {
                if let (Some(a), Some(b)) = (a, b) {
                    x.push(*a);
                    y.push(*b);
                }
            }
            report::write_regression_result(&stats::linear_regression(&x, &y)?)
        }
    };
    emit(args.out.as_deref(), &text)
}
