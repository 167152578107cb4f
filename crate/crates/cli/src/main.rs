//! `fprdo` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation or
//! numeric failure. Diagnostics go to stderr; summaries and requested
//! machine output go to files or stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fprdo::codec::{decode, Bitstream, Transforms};
use fprdo::eval::csv::{curves_to_csv, curves_to_dat, read_curves_csv, write_decisions_csv};
use fprdo::eval::{bd_rate, flop_estimate, sweep, QualityAxis, RdCurve};
use fprdo::featnet::{Activation, FeatNet, FeatNetSpec};
use fprdo::jacobian::{SketchedJacobian, TauPolicy};
use fprdo::rdo::{encode_image, LambdaNorm, Metric, RdoConfig, DEFAULT_LAMBDA_C};
use fprdo::sketch::{SketchKind, SketchParams};
use fprdo::{Error, ImagePlane};

type Net = FeatNet<f64>;

#[derive(Parser, Debug)]
#[command(name = "fprdo", version, about = "Feature-preserving RDO for a simple intra codec")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a PGM image into a bitstream.
    Encode(EncodeArgs),
    /// Decode a bitstream into a PGM image. Needs no weights or sketch.
    Decode(DecodeArgs),
    /// Encode at several QPs and write the rate-distortion curve.
    Sweep(SweepArgs),
    /// BD-rate of one curve file against another.
    Bdrate(BdrateArgs),
    /// Write the per-pixel importance map diag(JᵀSᵀSJ) as a PGM.
    Importance(ImportanceArgs),
    /// Write a seeded random weight file for the toy extractor.
    GenWeights(GenWeightsArgs),
    /// Analytic FD versus IDSE cost ratio.
    Flops(FlopsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Sse,
    Idse,
    Fd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SketchArg {
    Rademacher,
    Gaussian,
    Dcttop16,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TauPolicyArg {
    MeanFrobenius,
    RmsFrobenius,
    MeanDiagonal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LambdaNormArg {
    None,
    Trace,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    Psnr,
    NegIdse,
    NegFeatdist,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchArg {
    Relu,
    Softplus,
}

#[derive(Args, Debug)]
struct SketchOpts {
    /// Sketch rows.
    #[arg(long, default_value_t = 8)]
    ell: usize,
    #[arg(long, value_enum, default_value_t = SketchArg::Rademacher)]
    sketch: SketchArg,
    /// Sketch seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extractor weight file (required for idse and fd).
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RdoOpts {
    #[arg(long, value_enum, default_value_t = MetricArg::Sse)]
    metric: MetricArg,
    /// Lagrange constant in lambda = c 2^((QP-12)/3).
    #[arg(long, default_value_t = DEFAULT_LAMBDA_C)]
    c: f64,
    /// Explicit tau; overrides --tau-policy.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = TauPolicyArg::MeanFrobenius)]
    tau_policy: TauPolicyArg,
    /// Multiplier applied to tau.
    #[arg(long, default_value_t = 1.0)]
    tau_scale: f64,
    #[arg(long, value_enum, default_value_t = LambdaNormArg::Trace)]
    lambda_norm: LambdaNormArg,
    /// SSE weight of the FD metric.
    #[arg(long, default_value_t = 1.0)]
    fd_blend: f64,
    #[command(flatten)]
    sketch: SketchOpts,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Input PGM.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output bitstream.
    #[arg(long)]
    out: PathBuf,
    /// Quantization parameter, 0..=51.
    #[arg(long, default_value_t = 30)]
    qp: i32,
    #[command(flatten)]
    rdo: RdoOpts,
    /// Per-block decision log.
    #[arg(long)]
    decisions_csv: Option<PathBuf>,
    /// Also write the encoder reconstruction.
    #[arg(long)]
    recon: Option<PathBuf>,
    /// Dump the block sketches (idse only).
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Input bitstream.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PGM.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Input PGM.
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [26, 28, 30, 32, 34, 36])]
    qps: Vec<i32>,
    #[command(flatten)]
    rdo: RdoOpts,
    /// Curve label (default: metric name).
    #[arg(long)]
    label: Option<String>,
    /// Curve CSV output (default: stdout).
    #[arg(long)]
    curve_csv: Option<PathBuf>,
    /// Gnuplot data output.
    #[arg(long)]
    dat: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BdrateArgs {
    /// Anchor curve CSV.
    #[arg(long)]
    anchor: PathBuf,
    /// Test curve CSV.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum, default_value_t = AxisArg::Psnr)]
    axis: AxisArg,
    /// Curve to use from the anchor file (default: its first curve).
    #[arg(long)]
    anchor_label: Option<String>,
    /// Curve to use from the test file (default: its first curve).
    #[arg(long)]
    test_label: Option<String>,
}

#[derive(Args, Debug)]
struct ImportanceArgs {
    /// Input PGM.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PGM, scaled to 0..255.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sketch: SketchOpts,
}

#[derive(Args, Debug)]
struct GenWeightsArgs {
    /// Output weight file.
    #[arg(long)]
    out: PathBuf,
    /// Initialization seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ArchArg::Relu)]
    arch: ArchArg,
    /// Conv channel counts.
    #[arg(long, value_delimiter = ',', default_values_t = [8, 16])]
    channels: Vec<usize>,
}

#[derive(Args, Debug)]
struct FlopsArgs {
    /// Image height.
    #[arg(long)]
    h: u64,
    /// Image width.
    #[arg(long)]
    w: u64,
    /// Extractor input height.
    #[arg(long)]
    hr: u64,
    /// Extractor input width.
    #[arg(long)]
    wr: u64,
    /// Candidates per block.
    #[arg(long, default_value_t = 2)]
    nr: u64,
    #[arg(long, default_value_t = 2)]
    ell: u64,
    /// Per-pixel forward cost.
    #[arg(long, default_value_t = 1.0)]
    cost: f64,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult = Result<(), Failure>;

fn sketch_params(o: &SketchOpts) -> SketchParams {
    let kind = match o.sketch {
        SketchArg::Rademacher => SketchKind::Rademacher,
        SketchArg::Gaussian => SketchKind::Gaussian,
        SketchArg::Dcttop16 => SketchKind::DctTop16,
    };
    SketchParams::new(kind, o.ell, o.seed)
}

fn rdo_config(o: &RdoOpts, qp: i32) -> Result<RdoConfig, Failure> {
    let tau_policy = match (o.tau, o.tau_policy) {
        (Some(t), _) => TauPolicy::Explicit(t),
        (None, TauPolicyArg::MeanFrobenius) => TauPolicy::MeanFrobenius,
        (None, TauPolicyArg::RmsFrobenius) => TauPolicy::RmsFrobenius,
        (None, TauPolicyArg::MeanDiagonal) => TauPolicy::MeanDiagonal,
    };
    let cfg = RdoConfig {
        metric: match o.metric {
            MetricArg::Sse => Metric::Sse,
            MetricArg::Idse => Metric::Idse,
            MetricArg::Fd => Metric::Fd,
        },
        qp,
        c: o.c,
        tau_policy,
        tau_scale: o.tau_scale,
        lambda_norm: match o.lambda_norm {
            LambdaNormArg::None => LambdaNorm::None,
            LambdaNormArg::Trace => LambdaNorm::Trace,
        },
        sketch: sketch_params(&o.sketch),
        fd_blend: o.fd_blend,
        lambda_override: None,
        forced_mode: None,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_net(path: Option<&Path>, needed: bool) -> Result<Option<Net>, Failure> {
    match path {
        Some(p) => Ok(Some(Net::load_weights(p)?)),
        None if needed => Err(Failure::Usage("this metric needs --weights".into())),
        None => Ok(None),
    }
}

fn encode(a: EncodeArgs) -> CliResult {
    let cfg = rdo_config(&a.rdo, a.qp)?;
    let net = load_net(a.rdo.sketch.weights.as_deref(), cfg.metric != Metric::Sse)?;
    let plane = ImagePlane::load_pgm(&a.input)?;
    let sj = match &net {
        Some(n) if cfg.metric == Metric::Idse => Some(SketchedJacobian::compute(n, &plane, cfg.sketch, &Transforms::new())?),
        _ => None,
    };
    if let Some(p) = &a.sidecar {
        match &sj {
            Some(sj) => sj.write_sidecar(p)?,
            None => return Err(Failure::Usage("--sidecar needs --metric idse".into())),
        }
    }
    let enc = encode_image(&plane, &cfg, net.as_ref(), sj.as_ref())?;
    enc.bitstream.save(&a.out)?;
    if let Some(p) = &a.decisions_csv {
        write_decisions_csv(&enc.decisions, p)?;
    }
    if let Some(p) = &a.recon {
        enc.reconstruction.save_pgm(p)?;
    }
    let tau = enc.tau.map(|t| format!("{t:.6e}")).unwrap_or_else(|| "-".into());
    println!(
        "metric={} qp={} bits={} bpp={:.6} psnr_db={:.4} lambda={:.6e} tau={} t4_blocks={}/{}",
        cfg.metric,
        cfg.qp,
        enc.totals.bits,
        enc.totals.bpp,
        enc.totals.psnr_db,
        enc.lambda,
        tau,
        enc.t4_count(),
        enc.decisions.len()
    );
    Ok(())
}

fn decode_cmd(a: DecodeArgs) -> CliResult {
    let bs = Bitstream::load(&a.input)?;
    decode::<f64>(&bs)?.save_pgm(&a.out)?;
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> CliResult {
    let first = *a.qps.first().ok_or_else(|| Failure::Usage("--qps is empty".into()))?;
    let cfg = rdo_config(&a.rdo, first)?;
    let net = load_net(a.rdo.sketch.weights.as_deref(), cfg.metric != Metric::Sse)?;
    let plane = ImagePlane::load_pgm(&a.input)?;
    let label = a.label.clone().unwrap_or_else(|| cfg.metric.to_string());
    let s = sweep(&plane, &cfg, &a.qps, net.as_ref(), &label)?;
    let csv = curves_to_csv(std::slice::from_ref(&s.curve))?;
    match &a.curve_csv {
        Some(p) => fs::write(p, csv).map_err(Error::from)?,
        None => print!("{}", String::from_utf8_lossy(&csv)),
    }
    if let Some(p) = &a.dat {
        fs::write(p, curves_to_dat(std::slice::from_ref(&s.curve))).map_err(Error::from)?;
    }
    Ok(())
}

fn pick(path: &Path, label: Option<&str>) -> Result<RdCurve, Failure> {
    let curves = read_curves_csv(path)?;
    let found = match label {
        Some(l) => curves.into_iter().find(|c| c.label == l),
        None => curves.into_iter().next(),
    };
    found.ok_or_else(|| {
        Failure::Lib(Error::Invalid(format!(
            "{}: no curve{}",
            path.display(),
            label.map(|l| format!(" labelled {l:?}")).unwrap_or_default()
        )))
    })
}

fn bdrate_cmd(a: BdrateArgs) -> CliResult {
    let anchor = pick(&a.anchor, a.anchor_label.as_deref())?;
    let test = pick(&a.test, a.test_label.as_deref())?;
    let axis = match a.axis {
        AxisArg::Psnr => QualityAxis::Psnr,
        AxisArg::NegIdse => QualityAxis::NegIdse,
        AxisArg::NegFeatdist => QualityAxis::NegFeatDist,
    };
    let v = bd_rate(&anchor, &test, axis)?;
    println!("bd_rate_percent={v:.4} axis={axis} anchor={} test={}", anchor.label, test.label);
    Ok(())
}

fn importance(a: ImportanceArgs) -> CliResult {
    let net = load_net(a.sketch.weights.as_deref(), true)?.expect("required");
    let plane = ImagePlane::load_pgm(&a.input)?;
    let sj = SketchedJacobian::compute(&net, &plane, sketch_params(&a.sketch), &Transforms::new())?;
    sj.importance_map()
        .to_plane(plane.orig_width(), plane.orig_height())?
        .save_pgm(&a.out)?;
    Ok(())
}

fn gen_weights(a: GenWeightsArgs) -> CliResult {
    let spec = match a.arch {
        ArchArg::Relu => FeatNetSpec::stack(&a.channels, Activation::Relu),
        ArchArg::Softplus => FeatNetSpec::softplus(&a.channels),
    };
    spec.validate()?;
    Net::init_random(spec, a.seed)?.save_weights(&a.out)?;
    Ok(())
}

fn flops(a: FlopsArgs) -> CliResult {
    let e = flop_estimate(a.h, a.w, a.hr, a.wr, a.nr, a.ell, a.cost)?;
    println!("fd_flops={:.6e} idse_flops={:.6e} ratio={:.4}", e.fd_flops, e.idse_flops, e.ratio);
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Lib(Error::Invalid(e.to_string())))?;
    }
    match cli.command {
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Bdrate(a) => bdrate_cmd(a),
        Command::Importance(a) => importance(a),
        Command::GenWeights(a) => gen_weights(a),
        Command::Flops(a) => flops(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 3 })
        }
    }
}
