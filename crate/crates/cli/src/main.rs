//! `cgne`: simulate snow-crystal growth, build datasets, extract morphology
//! features, and compare feature tables by expected Wasserstein distance.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use cgne_core::bench::{bench_lca, summarize};
use cgne_core::dataset::{self, DatasetManifest, GenerateRequest, MANIFEST_FILE};
use cgne_core::grid::{raster_extent, reconstruct_full, render_cartesian};
use cgne_core::morphology::{self, MorphologyError};
use cgne_core::params::{parse_kv, BoundaryMode, Defaults, RHO_RANGE};
use cgne_core::transport::{self, bootstrap_ci, default_edges, density_grids, EwdOptions};
use cgne_core::{lca, WedgeSymmetry};

#[derive(Parser, Debug)]
#[command(name = "cgne", version, about = "Snow-crystal growth simulation and emulator evaluation")]
struct Cli {
    /// `key = value` file overriding the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads [default: 1].
    #[arg(long, global = true, env = "CGNE_WORKERS")]
    workers: Option<usize>,
    /// Where to write the run log [default: next to the command's output].
    #[arg(long, global = true)]
    run_log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trajectory.
    Simulate(SimulateArgs),
    /// Run a batch of trajectories with ρ drawn uniformly.
    Generate(GenerateArgs),
    /// Morphology CSV for every trajectory in a dataset.
    Features(FeaturesArgs),
    /// Expected Wasserstein distance between two morphology CSVs.
    Evaluate(EvaluateArgs),
    /// Time full trajectories.
    Bench(BenchArgs),
}

/// Overrides for parameters and run configuration.
#[derive(Args, Debug, Default, Clone)]
struct ModelArgs {
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    beta_attach: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta_vapor: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma_melt: Option<f64>,
    #[arg(long)]
    sigma_noise: Option<f64>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    snapshot_every: Option<u32>,
    #[arg(long)]
    halt_margin: Option<usize>,
    #[arg(long)]
    boundary_mode: Option<BoundaryMode>,
    #[arg(long)]
    symmetry: Option<WedgeSymmetry>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Accept ρ outside [0.35, 0.65].
    #[arg(long)]
    allow_out_of_range: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also render every frame as a PGM image into this directory.
    #[arg(long)]
    pgm_dir: Option<PathBuf>,
    /// Pixels per lattice spacing in rendered frames.
    #[arg(long, default_value_t = 2.0)]
    pgm_scale: f64,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(short = 'n', long, default_value_t = 1000)]
    n: usize,
    /// Master seed for ρ draws and per-run seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = RHO_RANGE.0)]
    rho_min: f64,
    #[arg(long, default_value_t = RHO_RANGE.1)]
    rho_max: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    /// Manifest file or the dataset directory holding it.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = transport::DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = transport::DEFAULT_MIN_COUNT)]
    min_count: usize,
    /// z-score features by the pooled reference statistics.
    #[arg(long)]
    standardize: bool,
    /// Bootstrap resamples for a 95% interval (at least 100).
    #[arg(long)]
    ci_resamples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    ci_seed: u64,
    /// Write per-bin density grids of both tables to this JSON file.
    #[arg(long)]
    density_out: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    density_resolution: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(short = 'm', long, default_value_t = 5)]
    m: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV with a `time_ms` column of emulator trajectory timings.
    #[arg(long)]
    emulator_log: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// Everything a command runs with, after flags > config file > defaults.
#[derive(Debug, Clone, Serialize)]
struct Resolved {
    defaults: Defaults,
    workers: usize,
}

fn resolve(cli: &Cli, model: Option<&ModelArgs>, seed: Option<u64>) -> Outcome<Resolved> {
    let mut defaults = Defaults::shipped();
    let mut workers = 1;
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
        let mut kv = parse_kv(&text).map_err(usage)?;
        if let Some(w) = kv.remove("workers") {
            workers = w.parse().map_err(|_| usage(anyhow!("workers: cannot parse {w:?}")))?;
        }
        defaults.apply(&kv).map_err(usage)?;
    }
    if let Some(w) = cli.workers {
        workers = w;
    }
    if workers == 0 {
        return Err(usage(anyhow!("workers must be >= 1")));
    }
    if let Some(m) = model {
        let p = &mut defaults.params;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.rho, m.rho);
        set(&mut p.beta_attach, m.beta_attach);
        set(&mut p.alpha, m.alpha);
        set(&mut p.theta_vapor, m.theta_vapor);
        set(&mut p.kappa, m.kappa);
        set(&mut p.mu, m.mu);
        set(&mut p.gamma_melt, m.gamma_melt);
        set(&mut p.sigma_noise, m.sigma_noise);
        let r = &mut defaults.run;
        r.side = m.side.unwrap_or(r.side);
        r.max_steps = m.max_steps.unwrap_or(r.max_steps);
        r.snapshot_every = m.snapshot_every.unwrap_or(r.snapshot_every);
        r.halt_margin = m.halt_margin.unwrap_or(r.halt_margin);
        r.boundary_mode = m.boundary_mode.unwrap_or(r.boundary_mode);
        r.symmetry = m.symmetry.unwrap_or(r.symmetry);
    }
    if let Some(s) = seed {
        defaults.run.seed = s;
    }
    defaults.params.validate().map_err(usage)?;
    defaults.run.validate().map_err(usage)?;
    Ok(Resolved { defaults, workers })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

fn write_run_log(cli: &Cli, default: PathBuf, command: &str, config: Value, outputs: Value) -> Outcome<()> {
    let path = cli.run_log.clone().unwrap_or(default);
    let log = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "outputs": outputs,
    });
    write_json(&path, &log)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Outcome<()> {
    let r = resolve(cli, Some(&a.model), a.seed)?;
    let params = r.defaults.params;
    if !a.allow_out_of_range {
        params.check_reference_range().map_err(usage)?;
    }
    if !(a.pgm_scale > 0.0 && a.pgm_scale.is_finite()) {
        return Err(usage(anyhow!("pgm-scale must be positive")));
    }
    let out = lca::run_with_workers(params, &r.defaults.run, r.workers).map_err(runtime)?;
    let t = &out.trajectory;
    dataset::write_trajectory(t, &a.out).with_context(|| format!("writing {}", a.out.display())).map_err(runtime)?;
    let mut frames_written = 0;
    if let Some(dir) = &a.pgm_dir {
        fs::create_dir_all(dir).map_err(runtime)?;
        let px = raster_extent(t.side, a.pgm_scale);
        for (k, f) in t.frames.iter().enumerate() {
            let mask = reconstruct_full(f, r.defaults.run.symmetry).map_err(runtime)?;
            let img = render_cartesian(&mask, a.pgm_scale, px, px).map_err(runtime)?;
            fs::write(dir.join(format!("frame_{k:05}.pgm")), img.to_pgm()).map_err(runtime)?;
            frames_written += 1;
        }
    }
    write_run_log(
        cli,
        sibling(&a.out, ".run.json"),
        "simulate",
        json!({ "resolved": r, "allow_out_of_range": a.allow_out_of_range, "pgm_scale": a.pgm_scale }),
        json!({
            "trajectory": a.out,
            "frames": t.len(),
            "steps": out.steps,
            "reached_edge": out.reached_edge,
            "pgm_dir": a.pgm_dir,
            "pgm_frames": frames_written,
        }),
    )
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Outcome<()> {
    if a.n == 0 {
        return Err(usage(anyhow!("-n must be at least 1")));
    }
    if !(a.rho_min.is_finite() && a.rho_max.is_finite() && a.rho_min < a.rho_max && a.rho_min >= 0.0) {
        return Err(usage(anyhow!("need 0 <= rho-min < rho-max")));
    }
    let r = resolve(cli, Some(&a.model), a.seed)?;
    let req = GenerateRequest {
        n: a.n,
        run: r.defaults.run,
        fixed: r.defaults.params,
        rho_range: (a.rho_min, a.rho_max),
        master_seed: r.defaults.run.seed,
        workers: r.workers,
        out_dir: a.out.clone(),
    };
    let m = dataset::generate_dataset(&req).map_err(runtime)?;
    for f in &m.failures {
        eprintln!("warning: run {} (rho {:.4}, seed {}) failed: {}", f.index, f.rho, f.seed, f.error);
    }
    write_run_log(
        cli,
        a.out.join("run-log.json"),
        "generate",
        json!({ "resolved": r, "n": a.n, "rho_range": [a.rho_min, a.rho_max] }),
        json!({ "manifest": a.out.join(MANIFEST_FILE), "entries": m.entries.len(), "failures": m.failures.len() }),
    )
}

fn features(cli: &Cli, a: &FeaturesArgs) -> Outcome<()> {
    let r = resolve(cli, None, None)?;
    let (path, dir) = if a.manifest.is_dir() {
        (a.manifest.join(MANIFEST_FILE), a.manifest.clone())
    } else {
        (a.manifest.clone(), a.manifest.parent().map(Path::to_path_buf).unwrap_or_default())
    };
    let m = DatasetManifest::load(&path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    if m.entries.is_empty() {
        return Err(usage(anyhow!("manifest {} lists no trajectories", path.display())));
    }
    let trajs = m.load_trajectories(&dir).map_err(runtime)?;
    let samples = trajs
        .iter()
        .map(|t| morphology::features_with_symmetry(t, m.run.symmetry))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display())).map_err(runtime)?;
    morphology::write_csv(&samples, file).map_err(runtime)?;
    write_run_log(
        cli,
        sibling(&a.out, ".run.json"),
        "features",
        json!({ "resolved": r, "manifest": path, "symmetry": m.run.symmetry }),
        json!({ "csv": a.out, "rows": samples.len() }),
    )
}

fn read_samples(path: &Path) -> Outcome<Vec<morphology::MorphologySample>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display())).map_err(runtime)?;
    morphology::read_csv(file).map_err(|e| match e {
        MorphologyError::MissingColumn(_) | MorphologyError::Csv(_) => usage(anyhow!("{}: {e}", path.display())),
        other => runtime(other),
    })
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Outcome<()> {
    let r = resolve(cli, None, None)?;
    if a.bins == 0 {
        return Err(usage(anyhow!("bins must be at least 1")));
    }
    if matches!(a.ci_resamples, Some(n) if n < 100) {
        return Err(usage(anyhow!("ci-resamples must be at least 100")));
    }
    let model = read_samples(&a.model)?;
    let reference = read_samples(&a.reference)?;
    let opts = EwdOptions { edges: default_edges(a.bins), min_count: a.min_count, standardize: a.standardize };
    let mut report = transport::ewd(&model, &reference, &opts).map_err(runtime)?;
    if let Some(n) = a.ci_resamples {
        report.ci = Some(bootstrap_ci(&model, &reference, &opts, n, a.ci_seed).map_err(runtime)?);
    }
    write_json(&a.out, &report)?;
    if let Some(path) = &a.density_out {
        let grids = json!({
            "model": density_grids(&model, &opts.edges, a.density_resolution).map_err(runtime)?,
            "reference": density_grids(&reference, &opts.edges, a.density_resolution).map_err(runtime)?,
        });
        write_json(path, &grids)?;
    }
    write_run_log(
        cli,
        sibling(&a.out, ".run.json"),
        "evaluate",
        json!({
            "resolved": r,
            "model": a.model,
            "reference": a.reference,
            "bins": a.bins,
            "min_count": a.min_count,
            "standardize": a.standardize,
            "ci_resamples": a.ci_resamples,
            "ci_seed": a.ci_seed,
        }),
        json!({ "report": a.out, "ewd": report.ewd, "density": a.density_out }),
    )
}

fn read_timing_log(path: &Path) -> Outcome<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = header
        .iter()
        .position(|h| *h == "time_ms")
        .ok_or_else(|| usage(anyhow!("{}: missing column `time_ms`", path.display())))?;
    lines
        .map(|l| {
            l.split(',')
                .nth(col)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| usage(anyhow!("{}: bad row {l:?}", path.display())))
        })
        .collect()
}

fn bench(cli: &Cli, a: &BenchArgs) -> Outcome<()> {
    if a.m == 0 {
        return Err(usage(anyhow!("-m must be at least 1")));
    }
    let r = resolve(cli, Some(&a.model), a.seed)?;
    let emulator = a.emulator_log.as_deref().map(read_timing_log).transpose()?;
    let lca = bench_lca(a.m, r.defaults.params, &r.defaults.run, r.workers).map_err(runtime)?;
    let mut report = BTreeMap::new();
    report.insert("median_ms", json!(lca.summary.median_ms));
    report.insert("iqr_ms", json!(lca.summary.iqr_ms));
    report.insert("lca", json!(lca));
    if let Some(times) = &emulator {
        let s = summarize(times).ok_or_else(|| usage(anyhow!("emulator timing log is empty")))?;
        report.insert("emulator", json!({ "runs": times.len(), "summary": s }));
        report.insert("median_ratio_lca_over_emulator", json!(lca.summary.median_ms / s.median_ms));
    }
    write_json(&a.out, &report)?;
    write_run_log(
        cli,
        sibling(&a.out, ".run.json"),
        "bench",
        json!({ "resolved": r, "m": a.m, "emulator_log": a.emulator_log }),
        json!({ "report": a.out, "median_ms": lca.summary.median_ms }),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Generate(a) => generate(&cli, a),
        Command::Features(a) => features(&cli, a),
        Command::Evaluate(a) => evaluate(&cli, a),
        Command::Bench(a) => bench(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
