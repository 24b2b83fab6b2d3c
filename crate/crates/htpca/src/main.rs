use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use htpca::config::{
    parse_methods, parse_subordinator, subordinator_label, ExperimentConfig, MethodName,
    MethodResources, DEFAULT_LUT_ORDER, DEFAULT_LUT_STEP,
};
use htpca::denoise::{
    denoise, synthetic_digit_stack, DenoiseConfig, ImageStack, NoiseSpec, Pipeline,
    FRAME_NOISE_VARIANCE, MNIST_NOISE_VARIANCE,
};
use htpca::experiments::{run_bias_rmse, run_pc_recovery, run_rho_sweep};
use htpca::io::{read_matrix, read_pgm, write_matrix, write_pgm, write_text};
use htpca::manifest::Manifest;
use htpca_core::linalg::Matrix;
use htpca_core::pca::fit_heavy_pca;
use htpca_core::robust::{location_vector, marginal_scales, EstimatorMode};
use htpca_core::sampling::{sample_superstatistical, GaussianSpec, RngSeed, Subordinator};
use htpca_core::shape::{
    build_log_lut, estimate_shape_method3, subordinator_log_moments, LogLut,
    SubordinatorLogMoments, MIN_LOG_MOMENT_DRAWS,
};
use htpca_core::{Error, Result};

/// Heavy-tailed PCA: data generation, shape estimation, experiments.
#[derive(Parser)]
#[command(name = "htpca", version)]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample superstatistical data X = A^{1/2} G.
    Generate(GenerateArgs),
    /// Estimate the shape matrix of a data file.
    Estimate(EstimateArgs),
    /// Fit heavy-tailed PCA and write the model bundle.
    Pca(PcaArgs),
    /// Correlation sweep over [[16, 8 rho], [8 rho, 4]].
    RhoSweep(SweepArgs),
    /// First principal direction recovery on R D R.
    PcRecovery(ExperimentArgs),
    /// Entrywise bias and RMSE on the 3 x 3 test matrix.
    BiasRmse(ExperimentArgs),
    /// Denoise an image stack with classical and heavy-tailed PCA.
    Denoise(DenoiseArgs),
    /// Tabulate the Gaussian log-correlation.
    BuildLut(BuildLutArgs),
    /// Subordinator log-moments (Monte Carlo or closed form).
    LogMoments(LogMomentsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// stable, student or gauss
    #[arg(long)]
    model: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    /// Covariance matrix file (CSV or .bin).
    #[arg(long)]
    sigma: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// m1a, m1b, m1c, m2, m3, tyler or empirical (needed for shape)
    #[arg(long)]
    method: Option<String>,
    /// shape, location (per-row) or scale (per-row marginal scale)
    #[arg(long, default_value = "shape")]
    what: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Lookup table for m2 (built with defaults when absent).
    #[arg(long)]
    lut: Option<PathBuf>,
    /// Log-moments file for m2.
    #[arg(long)]
    logmoments: Option<PathBuf>,
    /// Take the m2 log-moments from the closed form of this subordinator.
    #[arg(long)]
    subordinator: Option<String>,
    #[arg(long, default_value = "ml")]
    mode: String,
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    method: String,
    #[arg(long = "m")]
    m: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lut: Option<PathBuf>,
    #[arg(long)]
    logmoments: Option<PathBuf>,
    #[arg(long)]
    subordinator: Option<String>,
    #[arg(long, default_value = "ml")]
    mode: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// cauchy, gaussian, stable:<alpha>, student:<nu> or degenerate:<a>
    #[arg(long)]
    subordinator: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Comma-separated method list.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value = "ml")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Comma-separated rho values.
    #[arg(long)]
    rho_grid: Option<String>,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Directory of PGM images (sorted by name).
    #[arg(long, conflicts_with = "synthetic")]
    stack: Option<PathBuf>,
    /// Use the built-in synthetic 40-image digit-like stack.
    #[arg(long)]
    synthetic: bool,
    /// Noise subordinator.
    #[arg(long, default_value = "cauchy")]
    noise: String,
    /// mnist (variance 10) or frame (variance 0.02).
    #[arg(long, default_value = "mnist")]
    preset: String,
    /// Noise variance, overriding the preset (0 disables noise).
    #[arg(long)]
    variance: Option<f64>,
    #[arg(long, default_value = "m1c")]
    method: String,
    /// Number of components kept.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "ml")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildLutArgs {
    #[arg(long, default_value_t = DEFAULT_LUT_STEP)]
    step: f64,
    #[arg(long, default_value_t = DEFAULT_LUT_ORDER)]
    order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LogMomentsArgs {
    #[arg(long)]
    subordinator: String,
    #[arg(long, default_value_t = MIN_LOG_MOMENT_DRAWS)]
    n_mc: usize,
    /// Use the closed form instead of Monte Carlo.
    #[arg(long)]
    analytic: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Input(_)
        | Error::Dimension(_)
        | Error::Domain(_)
        | Error::TooFewSamples { .. }
        | Error::DimensionTooSmall { .. }
        | Error::NonMonotoneTable { .. } => 2,
        _ => 3,
    }
}

fn parse_mode(s: &str) -> Result<EstimatorMode> {
    s.parse::<EstimatorMode>().map_err(|e| Error::Config(e.to_string()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.txt");
    path.with_file_name(name)
}

fn write_file_manifest(out: &Path, manifest: &Manifest, start: Instant) -> Result<()> {
    write_text(&sidecar(out), &manifest.render(start.elapsed()))
}

/// LUT and log-moments from files or defaults, for the given methods.
fn resources(
    methods: &[MethodName],
    lut: Option<&Path>,
    logmoments: Option<&Path>,
    subordinator: Option<&str>,
) -> Result<MethodResources> {
    let mut res = MethodResources::default();
    if !methods.contains(&MethodName::M2) {
        return Ok(res);
    }
    if let Some(p) = lut {
        let f = fs::File::open(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
        res.lut = Some(Arc::new(LogLut::read_csv(std::io::BufReader::new(f))?));
    } else {
        res.lut = Some(Arc::new(build_log_lut(DEFAULT_LUT_STEP, DEFAULT_LUT_ORDER)?));
    }
    res.moments = match (logmoments, subordinator) {
        (Some(p), _) => {
            let f = fs::File::open(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
            Some(SubordinatorLogMoments::read_csv(std::io::BufReader::new(f))?)
        }
        (None, Some(s)) => Some(SubordinatorLogMoments::analytic(parse_subordinator(s)?)?),
        (None, None) => {
            return Err(Error::Config(
                "m2 needs --logmoments FILE or --subordinator SPEC".into(),
            ))
        }
    };
    Ok(res)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let start = Instant::now();
    let sub = match a.model.as_str() {
        "stable" => Subordinator::Stable {
            alpha: a.alpha.ok_or_else(|| Error::Config("--alpha is required for stable".into()))?,
        },
        "student" => Subordinator::Student {
            nu: a.nu.ok_or_else(|| Error::Config("--nu is required for student".into()))?,
        },
        "gauss" => Subordinator::gaussian(),
        other => return Err(Error::Config(format!("unknown model `{other}`"))),
    };
    sub.validate().map_err(|e| Error::Config(e.to_string()))?;
    let sigma = read_matrix(&a.sigma)?;
    let spec = GaussianSpec::new(sigma)?;
    let x = sample_superstatistical(&spec, sub, a.n, RngSeed::new(a.seed))?;
    write_matrix(&a.out, &x)?;
    let m = Manifest::new("generate")
        .with("subordinator", subordinator_label(sub))
        .with("sigma", a.sigma.display())
        .with("n", a.n)
        .with("seed", a.seed);
    write_file_manifest(&a.out, &m, start)
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let start = Instant::now();
    let mode = parse_mode(&a.mode)?;
    if a.what != "shape" {
        let x = read_matrix(&a.input)?;
        let values = match a.what.as_str() {
            "location" => location_vector(&x, mode)?,
            "scale" => marginal_scales(&x, mode)?,
            other => return Err(Error::Config(format!("unknown --what `{other}`"))),
        };
        write_matrix(&a.out, &Matrix::from_columns(&[values]))?;
        let m = Manifest::new("estimate")
            .with("what", &a.what)
            .with("mode", mode)
            .with("input", a.input.display());
        return write_file_manifest(&a.out, &m, start);
    }
    let name: MethodName = a
        .method
        .as_deref()
        .ok_or_else(|| Error::Config("--method is required for --what shape".into()))?
        .parse()?;
    let res = resources(&[name], a.lut.as_deref(), a.logmoments.as_deref(), a.subordinator.as_deref())?;
    let x = read_matrix(&a.input)?;
    let mut m = Manifest::new("estimate")
        .with("method", name)
        .with("mode", mode)
        .with("input", a.input.display());
    let est = if name == MethodName::M3 {
        let out = estimate_shape_method3(&x, mode)?;
        let a_path = a.out.with_extension("a_hat.csv");
        write_matrix(&a_path, &Matrix::from_rows(&[out.a_hat.clone()]))?;
        m = m.with("a_hat", a_path.display());
        out.estimate
    } else {
        res.method(name)?.estimate(&x, mode)?
    };
    for w in &est.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    write_matrix(&a.out, est.shape.matrix())?;
    let d = &est.diagnostics;
    m = m
        .with("pairs", d.pairs)
        .with("clamped", d.clamped)
        .with("domain_violations", d.domain_violations)
        .with("ml_fallbacks", d.ml_fallbacks)
        .with("unreliable_pairs", d.unreliable_pairs)
        .with("regularized", d.regularized);
    write_file_manifest(&a.out, &m, start)
}

fn cmd_pca(a: &PcaArgs) -> Result<()> {
    let start = Instant::now();
    let name: MethodName = a.method.parse()?;
    let mode = parse_mode(&a.mode)?;
    let res = resources(&[name], a.lut.as_deref(), a.logmoments.as_deref(), a.subordinator.as_deref())?;
    let x = read_matrix(&a.input)?;
    let model = if name.is_heavy_tailed() {
        fit_heavy_pca(&x, &res.method(name)?, a.m, mode)?.model
    } else {
        htpca_core::pca::fit_classical_pca(&x, a.m)?
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::Input(format!("{}: {e}", a.out.display())))?;
    write_matrix(&a.out.join("components.csv"), &model.components)?;
    write_matrix(
        &a.out.join("eigenvalues.csv"),
        &Matrix::from_columns(&[model.eigenvalues.clone()]),
    )?;
    write_matrix(
        &a.out.join("location.csv"),
        &Matrix::from_columns(&[model.location.clone()]),
    )?;
    Manifest::new("pca")
        .with("method", name)
        .with("m", a.m)
        .with("mode", mode)
        .with("input", a.input.display())
        .write(&a.out, start.elapsed())
}

fn apply_common(cfg: &mut ExperimentConfig, a: &ExperimentArgs) -> Result<()> {
    if let Some(s) = &a.subordinator {
        cfg.subordinator = parse_subordinator(s)?;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(r) = a.runs {
        cfg.n_runs = r;
    }
    if let Some(m) = &a.methods {
        cfg.methods = parse_methods(m)?;
    }
    cfg.mode = parse_mode(&a.mode)?;
    cfg.seed = a.seed;
    cfg.out = Some(a.out.clone());
    cfg.validate()
}

fn finish_experiment(
    cfg: &ExperimentConfig,
    files: &[(&str, String)],
    notes: &[String],
    start: Instant,
) -> Result<()> {
    let dir = cfg.out.as_ref().expect("output directory is set");
    for (name, body) in files {
        write_text(&dir.join(name), body)?;
    }
    let mut m = Manifest::new(cfg.kind.as_str()).extend(cfg.describe());
    for (k, n) in notes.iter().enumerate() {
        m = m.with(format!("note_{k}"), n);
    }
    m.write(dir, start.elapsed())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::rho_sweep(Subordinator::cauchy());
    if let Some(g) = &a.rho_grid {
        cfg.rho_grid = g
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad rho value `{t}`"))))
            .collect::<Result<_>>()?;
    }
    apply_common(&mut cfg, &a.common)?;
    let res = MethodResources::default().prepare(&cfg.methods, cfg.subordinator)?;
    let out = run_rho_sweep(&cfg, &res)?;
    finish_experiment(&cfg, &[("sweep.csv", out.to_csv())], &out.notes, start)
}

fn cmd_pc_recovery(a: &ExperimentArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::pc_recovery();
    apply_common(&mut cfg, a)?;
    let res = MethodResources::default().prepare(&cfg.methods, cfg.subordinator)?;
    let out = run_pc_recovery(&cfg, &res)?;
    finish_experiment(
        &cfg,
        &[("pc_recovery_runs.csv", out.runs_csv()), ("pc_recovery_summary.csv", out.summary_csv())],
        &out.notes,
        start,
    )
}

fn cmd_bias_rmse(a: &ExperimentArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::bias_rmse();
    apply_common(&mut cfg, a)?;
    let res = MethodResources::default().prepare(&cfg.methods, cfg.subordinator)?;
    let out = run_bias_rmse(&cfg, &res)?;
    finish_experiment(&cfg, &[("bias_rmse.csv", out.to_csv())], &out.notes, start)
}

fn read_stack(dir: &Path) -> Result<ImageStack> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    let images = paths.iter().map(|p| read_pgm(p)).collect::<Result<Vec<_>>>()?;
    ImageStack::from_images(&images)
}

fn cmd_denoise(a: &DenoiseArgs) -> Result<()> {
    let start = Instant::now();
    let clean = match (&a.stack, a.synthetic) {
        (Some(dir), _) => read_stack(dir)?,
        (None, true) => synthetic_digit_stack(40, 28, a.seed)?,
        (None, false) => return Err(Error::Config("pass --stack DIR or --synthetic".into())),
    };
    let variance = match (a.variance, a.preset.as_str()) {
        (Some(v), _) if v >= 0.0 => v,
        (Some(v), _) => return Err(Error::Config(format!("noise variance must be >= 0, got {v}"))),
        (None, "mnist") => MNIST_NOISE_VARIANCE,
        (None, "frame") => FRAME_NOISE_VARIANCE,
        (None, other) => return Err(Error::Config(format!("unknown preset `{other}`"))),
    };
    let sub = parse_subordinator(&a.noise)?;
    let method: MethodName = a.method.parse()?;
    let mode = parse_mode(&a.mode)?;
    let res = MethodResources::default().prepare(&[method], sub)?;
    let cfg = DenoiseConfig {
        noise: NoiseSpec {
            subordinator: sub,
            variance,
        },
        method,
        rank: a.k,
        mode,
        seed: a.seed,
    };
    let out = denoise(&clean, &cfg, &res)?;
    let heavy_label = Pipeline::Heavy(method).label();
    write_text(&a.out.join("metrics.csv"), &out.metrics_csv(&heavy_label))?;
    for k in 0..clean.len() {
        for (prefix, stack) in [
            ("clean", &clean),
            ("noisy", &out.noisy),
            ("classical", &out.classical),
            (heavy_label.as_str(), &out.heavy),
        ] {
            write_pgm(&a.out.join(format!("{prefix}_{k:03}.pgm")), &stack.image(k))?;
        }
    }
    Manifest::new("denoise")
        .with("stack", a.stack.as_ref().map_or("synthetic".into(), |p| p.display().to_string()))
        .with("images", clean.len())
        .with("width", clean.width)
        .with("height", clean.height)
        .with("noise", subordinator_label(sub))
        .with("noise_variance", variance)
        .with("pixel_range", "[0, 1]")
        .with("method", method)
        .with("k", a.k)
        .with("mode", mode)
        .with("seed", a.seed)
        .write(&a.out, start.elapsed())
}

fn cmd_build_lut(a: &BuildLutArgs) -> Result<()> {
    let start = Instant::now();
    let lut = build_log_lut::<f64>(a.step, a.order)?;
    let mut buf = Vec::new();
    lut.write_csv(&mut buf).map_err(|e| Error::Input(e.to_string()))?;
    htpca::io::write_bytes(&a.out, &buf)?;
    let m = Manifest::new("build-lut").with("step", a.step).with("order", a.order);
    write_file_manifest(&a.out, &m, start)
}

fn cmd_log_moments(a: &LogMomentsArgs) -> Result<()> {
    let start = Instant::now();
    let sub = parse_subordinator(&a.subordinator)?;
    let lm = if a.analytic {
        SubordinatorLogMoments::analytic(sub)?
    } else {
        subordinator_log_moments(sub, a.n_mc, RngSeed::new(a.seed))?
    };
    let mut buf = Vec::new();
    lm.write_csv(&mut buf).map_err(|e| Error::Input(e.to_string()))?;
    htpca::io::write_bytes(&a.out, &buf)?;
    let m = Manifest::new("log-moments")
        .with("subordinator", subordinator_label(sub))
        .with("analytic", a.analytic)
        .with("n_mc", a.n_mc)
        .with("seed", a.seed);
    write_file_manifest(&a.out, &m, start)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Pca(a) => cmd_pca(a),
        Command::RhoSweep(a) => cmd_sweep(a),
        Command::PcRecovery(a) => cmd_pc_recovery(a),
        Command::BiasRmse(a) => cmd_bias_rmse(a),
        Command::Denoise(a) => cmd_denoise(a),
        Command::BuildLut(a) => cmd_build_lut(a),
        Command::LogMoments(a) => cmd_log_moments(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(Error::Config("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
            .and_then(|pool| pool.install(|| run(&cli))),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
