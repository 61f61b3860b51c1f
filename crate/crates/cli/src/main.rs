//! `wsindy` command-line driver.
//!
//! Exit codes: 0 on success, 1 when a simulation or identification fails
//! numerically, 2 for usage errors (bad flags, unreadable inputs, invalid
//! configuration).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use wsindy::experiments::{monte_carlo, reproduce, summarize, write_cells, write_rows, Benchmark, Cell, FigureId, Summary, TrajectoryCheck};
use wsindy::grid::adaptive::AdaptiveGridConfig;
use wsindy::grid::uniform::{DegreeSpec, UniformGridConfig};
use wsindy::io::{metadata_path, read_json, read_trajectory_file, write_json, write_trajectory_file, TrajectoryMetadata};
use wsindy::metrics::RecoveryReport;
use wsindy::pipeline::{identify, GridConfig, IdentifyConfig, LibraryConfig, Model, SCHEMA_VERSION};
use wsindy::simulate::{add_noise, IntegratorConfig, NoiseSpec, SystemSpec};
use wsindy::solver::SolverConfig;

#[derive(Parser)]
#[command(name = "wsindy", version, about = "Weak-form sparse identification of ODE models from trajectory data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark system, optionally with noise, and write a trajectory CSV
    Simulate(SimulateArgs),
    /// Identify a sparse model from a trajectory CSV
    Identify(IdentifyArgs),
    /// Monte Carlo recovery study over noise realizations and grid settings
    Experiment(ExperimentArgs),
    /// Run a standard reproduction protocol and write plot-ready CSVs
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
enum SystemName {
    Duffing,
    #[value(name = "van_der_pol", alias = "vdp")]
    VanDerPol,
    #[value(name = "lotka_volterra", alias = "lv")]
    LotkaVolterra,
    Lorenz,
}

impl SystemName {
    fn as_str(self) -> &'static str {
        match self {
            SystemName::Duffing => "duffing",
            SystemName::VanDerPol => "van_der_pol",
            SystemName::LotkaVolterra => "lotka_volterra",
            SystemName::Lorenz => "lorenz",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GridKind {
    Uniform,
    Adaptive,
    Square,
}

#[derive(Args, Clone, Debug, Default)]
struct SystemArgs {
    #[arg(long, value_enum)]
    system: Option<SystemName>,
    /// Parameter variant 1-4 of a planar system [default: 3]
    #[arg(long)]
    variant: Option<usize>,
    /// Initial state, comma separated (Lorenz default: -8,7,27)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    /// Noise level relative to the RMS of the clean trajectory [default: 0]
    #[arg(long)]
    snr: Option<f64>,
    /// Noise seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Debug, Default)]
struct GridArgs {
    /// Test-function placement [default: uniform]
    #[arg(long, value_enum)]
    grid: Option<GridKind>,
    /// Uniform/square: ratio max|phi'| / max|phi| that fixes the degree [uniform default: 5]
    #[arg(long)]
    rho: Option<f64>,
    /// Uniform: height at which neighbouring test functions intersect [default: 0.5]
    #[arg(long)]
    s: Option<f64>,
    /// Uniform/square: support length in samples instead of the spectral estimate
    #[arg(long = "L-override", alias = "l-override")]
    l_override: Option<usize>,
    /// Square: number of test functions [default: library size]
    #[arg(long = "J")]
    j: Option<usize>,
    /// Square: test-function degree [default: 16]
    #[arg(long)]
    degree: Option<u32>,
    /// Adaptive: number of test functions [default: 100]
    #[arg(long = "K")]
    k: Option<usize>,
    /// Adaptive: samples from a center to where its function drops to 1/2 [default: 30]
    #[arg(long)]
    r_whm: Option<f64>,
    /// Adaptive: degree of the differentiation kernel [default: 2]
    #[arg(long)]
    p_deriv: Option<u32>,
    /// Adaptive: support of the differentiation kernel, in samples [default: 16]
    #[arg(long)]
    s_deriv: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
struct ModelArgs {
    /// Sparsity threshold on coefficient magnitudes [default: 0.001]
    #[arg(long)]
    lambda: Option<f64>,
    /// Ridge regularization weight [default: 0]
    #[arg(long)]
    gamma: Option<f64>,
    /// Solve with unit-norm library columns
    #[arg(long)]
    normalize_columns: bool,
    /// Thresholding iterations before giving up [default: 25]
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Maximum total degree of the polynomial library [default: 5]
    #[arg(long)]
    library_degree: Option<u32>,
    /// Add sin and cos of each coordinate (frequencies 1 and 2) to the library
    #[arg(long)]
    trig: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Noise stream (realization index) for the given seed
    #[arg(long, default_value_t = 0)]
    realization: u64,
    /// Absolute and relative integrator tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// JSON configuration; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; metadata goes next to it as <name>.meta.json
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Trajectory CSV: a time column followed by one column per coordinate
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// JSON configuration; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for model.json and report.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Noise realizations per cell [default: 20]
    #[arg(long)]
    realizations: Option<usize>,
    /// Uniform grid: comma-separated rho values to sweep
    #[arg(long, value_delimiter = ',')]
    rhos: Option<Vec<f64>>,
    /// Uniform grid: comma-separated s values to sweep
    #[arg(long, value_delimiter = ',')]
    ss: Option<Vec<f64>>,
    /// Also score learned trajectories over the first this many samples (0: all)
    #[arg(long)]
    traj_window: Option<usize>,
    /// JSON configuration; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "experiment")]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    /// One of: oz, lownz-duff, lownz-vdp, duff-hnz, vp-hnz, lv-hnz, lorenz-hnz
    #[arg(value_parser = parse_figure)]
    figure: FigureId,
    /// Noise realizations (figure-specific default)
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory [default: figures/<figure>]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_figure(s: &str) -> Result<FigureId, String> {
    s.parse().map_err(|e: wsindy::error::Error| e.to_string())
}

/// JSON configuration file. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    system: Option<SystemName>,
    variant: Option<usize>,
    x0: Option<Vec<f64>>,
    snr: Option<f64>,
    seed: Option<u64>,
    grid: Option<GridConfig>,
    library: Option<LibraryConfig>,
    solver: Option<SolverConfig>,
    realizations: Option<usize>,
    rhos: Option<Vec<f64>>,
    ss: Option<Vec<f64>>,
}

enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

type CliResult<T> = Result<T, Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn numerical(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => read_json(p)
            .with_context(|| format!("reading configuration {}", p.display()))
            .map_err(usage),
    }
}

fn resolve_system(file: &ConfigFile, args: &SystemArgs) -> CliResult<SystemSpec> {
    let name = args
        .system
        .or(file.system)
        .ok_or_else(|| usage(anyhow!("--system is required")))?;
    let variant = args.variant.or(file.variant);
    let mut spec = match name {
        SystemName::Lorenz => {
            if variant.is_some() {
                return Err(usage(anyhow!("lorenz has no variants; set --x0 instead")));
            }
            SystemSpec::lorenz([-8.0, 7.0, 27.0])
        }
        other => SystemSpec::variant(other.as_str(), variant.unwrap_or(3)).map_err(usage)?,
    };
    if let Some(x0) = args.x0.clone().or_else(|| file.x0.clone()) {
        spec.x0 = x0;
    }
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn resolve_noise(file: &ConfigFile, args: &SystemArgs) -> CliResult<NoiseSpec> {
    let noise = NoiseSpec {
        sigma_snr: args.snr.or(file.snr).unwrap_or(0.0),
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    noise.validate().map_err(usage)?;
    Ok(noise)
}

fn grid_kind(grid: &GridConfig) -> GridKind {
    match grid {
        GridConfig::Uniform(_) => GridKind::Uniform,
        GridConfig::Adaptive(_) => GridKind::Adaptive,
        GridConfig::Square { .. } => GridKind::Square,
    }
}

fn reject(flags: &[(&str, bool)], kind: GridKind) -> CliResult<()> {
    let bad: Vec<&str> = flags.iter().filter(|(_, set)| *set).map(|(name, _)| *name).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(usage(anyhow!("{} not applicable to the {kind:?} grid", bad.join(", ")).context("conflicting grid options")))
    }
}

fn resolve_grid(file: &ConfigFile, args: &GridArgs) -> CliResult<GridConfig> {
    let kind = args
        .grid
        .or_else(|| file.grid.as_ref().map(grid_kind))
        .unwrap_or(GridKind::Uniform);
    let base = file.grid.clone().filter(|g| grid_kind(g) == kind);
    let grid = match kind {
        GridKind::Uniform => {
            reject(
                &[
                    ("--J", args.j.is_some()),
                    ("--degree", args.degree.is_some()),
                    ("--K", args.k.is_some()),
                    ("--r-whm", args.r_whm.is_some()),
                    ("--p-deriv", args.p_deriv.is_some()),
                    ("--s-deriv", args.s_deriv.is_some()),
                ],
                kind,
            )?;
            let mut cfg = match base {
                Some(GridConfig::Uniform(c)) => c,
                _ => UniformGridConfig::default(),
            };
            cfg.rho = args.rho.unwrap_or(cfg.rho);
            cfg.s = args.s.unwrap_or(cfg.s);
            cfg.l_override = args.l_override.or(cfg.l_override);
            cfg.validate().map_err(usage)?;
            GridConfig::Uniform(cfg)
        }
        GridKind::Adaptive => {
            reject(
                &[
                    ("--rho", args.rho.is_some()),
                    ("--s", args.s.is_some()),
                    ("--L-override", args.l_override.is_some()),
                    ("--J", args.j.is_some()),
                    ("--degree", args.degree.is_some()),
                ],
                kind,
            )?;
            let mut cfg = match base {
                Some(GridConfig::Adaptive(c)) => c,
                _ => AdaptiveGridConfig::default(),
            };
            cfg.k = args.k.unwrap_or(cfg.k);
            cfg.r_whm = args.r_whm.unwrap_or(cfg.r_whm);
            cfg.p_deriv = args.p_deriv.unwrap_or(cfg.p_deriv);
            cfg.s_deriv = args.s_deriv.unwrap_or(cfg.s_deriv);
            cfg.validate().map_err(usage)?;
            GridConfig::Adaptive(cfg)
        }
        GridKind::Square => {
            reject(
                &[
                    ("--s", args.s.is_some()),
                    ("--K", args.k.is_some()),
                    ("--r-whm", args.r_whm.is_some()),
                    ("--p-deriv", args.p_deriv.is_some()),
                    ("--s-deriv", args.s_deriv.is_some()),
                ],
                kind,
            )?;
            if args.rho.is_some() && args.degree.is_some() {
                return Err(usage(anyhow!("give either --rho or --degree for the square grid, not both")));
            }
            let (mut j, mut degree, mut l_override) = match base {
                Some(GridConfig::Square { j, degree, l_override }) => (j, degree, l_override),
                _ => (None, DegreeSpec::Degree(16), None),
            };
            j = args.j.or(j);
            l_override = args.l_override.or(l_override);
            if let Some(p) = args.degree {
                degree = DegreeSpec::Degree(p);
            }
            if let Some(rho) = args.rho {
                degree = DegreeSpec::Rho(rho);
            }
            match degree {
                DegreeSpec::Degree(0) => return Err(usage(anyhow!("--degree must be at least 1"))),
                DegreeSpec::Rho(r) if !(r > 0.0 && r.is_finite()) => {
                    return Err(usage(anyhow!("--rho must be positive")))
                }
                _ => {}
            }
            if j == Some(0) {
                return Err(usage(anyhow!("--J must be at least 1")));
            }
            GridConfig::Square { j, degree, l_override }
        }
    };
    Ok(grid)
}

fn resolve_model(file: &ConfigFile, args: &ModelArgs) -> CliResult<(LibraryConfig, SolverConfig)> {
    let mut library = file.library.clone().unwrap_or_default();
    library.max_degree = args.library_degree.unwrap_or(library.max_degree);
    library.trig |= args.trig;
    let mut solver = file.solver.clone().unwrap_or_default();
    solver.lambda = args.lambda.unwrap_or(solver.lambda);
    solver.gamma = args.gamma.unwrap_or(solver.gamma);
    solver.normalize_columns |= args.normalize_columns;
    solver.max_iterations = args.max_iterations.unwrap_or(solver.max_iterations);
    solver.validate().map_err(usage)?;
    Ok((library, solver))
}

fn resolve_identify(file: &ConfigFile, grid: &GridArgs, model: &ModelArgs) -> CliResult<IdentifyConfig> {
    let (library, solver) = resolve_model(file, model)?;
    Ok(IdentifyConfig {
        grid: resolve_grid(file, grid)?,
        library,
        solver,
    })
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(numerical)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let file = load_config(args.config.as_deref())?;
    let spec = resolve_system(&file, &args.system)?;
    let noise = resolve_noise(&file, &args.system)?;
    let integrator = match args.tol {
        Some(tol) => IntegratorConfig::with_tol(tol),
        None => IntegratorConfig::default(),
    };
    integrator.validate().map_err(usage)?;

    let clean = spec.integrate(&integrator).map_err(numerical)?;
    let data = add_noise(&clean, &noise, args.realization).map_err(numerical)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_trajectory_file(&data, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(numerical)?;
    let meta = TrajectoryMetadata {
        schema_version: SCHEMA_VERSION,
        x0: spec.x0.clone(),
        system: spec,
        integrator,
        noise: (noise.sigma_snr > 0.0).then_some(noise),
        realization: args.realization,
    };
    let meta_path = metadata_path(&args.out);
    write_json(&meta, &meta_path).map_err(numerical)?;
    println!(
        "wrote {} ({} samples, {} coordinates) and {}",
        args.out.display(),
        data.len(),
        data.dim(),
        meta_path.display()
    );
    Ok(())
}

fn format_model(model: &Model) -> String {
    let mut out = String::new();
    for eq in &model.equations {
        let rhs = if eq.terms.is_empty() {
            "0".to_string()
        } else {
            eq.terms
                .iter()
                .map(|t| format!("{:+.6e} {}", t.coefficient, t.term))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "x{}' = {rhs}", eq.state);
    }
    out
}

fn cmd_identify(args: IdentifyArgs) -> CliResult<()> {
    let file = load_config(args.config.as_deref())?;
    let cfg = resolve_identify(&file, &args.grid, &args.model)?;
    let data = read_trajectory_file(&args.data)
        .with_context(|| format!("reading {}", args.data.display()))
        .map_err(usage)?;

    let id = identify(&data, &cfg).map_err(numerical)?;
    let model = id.model();
    let mut report = serde_json::to_value(id.report()).map_err(numerical)?;
    report["config"] = serde_json::to_value(&cfg).map_err(numerical)?;

    // Ground truth is known when the data came from `simulate`.
    let meta_path = metadata_path(&args.data);
    if meta_path.exists() {
        let meta: TrajectoryMetadata = read_json(&meta_path)
            .with_context(|| format!("reading {}", meta_path.display()))
            .map_err(usage)?;
        if let Ok(w_star) = meta.system.dynamics.true_weights(&id.library) {
            let recovery = RecoveryReport::new(id.weights.weights(), &w_star, id.residual_norm(), None).map_err(numerical)?;
            report["recovery"] = serde_json::to_value(recovery).map_err(numerical)?;
        }
    }

    ensure_dir(&args.out)?;
    write_json(&model, &args.out.join("model.json")).map_err(numerical)?;
    write_json(&report, &args.out.join("report.json")).map_err(numerical)?;
    print!("{}", format_model(&model));
    if let Some(e) = report.get("recovery").and_then(|r| r.get("coeff_error")) {
        println!("relative coefficient error vs. generating system: {e}");
    }
    if !model.converged {
        println!("note: thresholding did not converge for every coordinate");
    }
    Ok(())
}

#[derive(Serialize)]
struct ExperimentSummary<'a> {
    schema_version: u32,
    system: &'a SystemSpec,
    noise: &'a NoiseSpec,
    identify: &'a IdentifyConfig,
    realizations: usize,
    cells: Vec<CellSummary<'a>>,
}

#[derive(Serialize)]
struct CellSummary<'a> {
    rho: Option<f64>,
    s: Option<f64>,
    summary: &'a Summary,
}

fn cmd_experiment(args: ExperimentArgs) -> CliResult<()> {
    let file = load_config(args.config.as_deref())?;
    let spec = resolve_system(&file, &args.system)?;
    let noise = resolve_noise(&file, &args.system)?;
    let cfg = resolve_identify(&file, &args.grid, &args.model)?;
    let n = args.realizations.or(file.realizations).unwrap_or(20);
    if n == 0 {
        return Err(usage(anyhow!("--realizations must be at least 1")));
    }
    let rhos = args.rhos.clone().or_else(|| file.rhos.clone());
    let ss = args.ss.clone().or_else(|| file.ss.clone());
    let traj = args.traj_window.map(|w| TrajectoryCheck {
        window: (w > 0).then_some(w),
    });

    let bench = Benchmark::new(spec.dynamics.name(), spec.clone(), &cfg.library).map_err(numerical)?;
    ensure_dir(&args.out)?;
    let aggregate = args.out.join("aggregate.csv");
    let per_realization = args.out.join("realizations.csv");

    let cells: Vec<Cell>;
    let summaries: Vec<CellSummary>;
    match &cfg.grid {
        GridConfig::Uniform(base) => {
            let rhos = rhos.unwrap_or_else(|| vec![base.rho]);
            let ss = ss.unwrap_or_else(|| vec![base.s]);
            let mut out = Vec::with_capacity(rhos.len() * ss.len());
            for &s in &ss {
                for &rho in &rhos {
                    let grid = UniformGridConfig { rho, s, ..base.clone() };
                    grid.validate().map_err(usage)?;
                    let results = monte_carlo(&bench, &GridConfig::Uniform(grid), &cfg.solver, &noise, n, traj);
                    out.push(Cell {
                        rho,
                        s,
                        summary: summarize(&results),
                        results,
                    });
                }
            }
            cells = out;
            write_cells(noise.sigma_snr, &cells, &aggregate, &per_realization).map_err(numerical)?;
            summaries = cells
                .iter()
                .map(|c| CellSummary {
                    rho: Some(c.rho),
                    s: Some(c.s),
                    summary: &c.summary,
                })
                .collect();
        }
        grid => {
            if rhos.is_some() || ss.is_some() {
                return Err(usage(anyhow!("--rhos and --ss sweeps need the uniform grid")));
            }
            let results = monte_carlo(&bench, grid, &cfg.solver, &noise, n, traj);
            let summary = summarize(&results);
            write_rows([&summary], &aggregate).map_err(numerical)?;
            write_rows(results.iter(), &per_realization).map_err(numerical)?;
            cells = vec![Cell {
                rho: f64::NAN,
                s: f64::NAN,
                summary,
                results,
            }];
            summaries = vec![CellSummary {
                rho: None,
                s: None,
                summary: &cells[0].summary,
            }];
        }
    }

    for c in &summaries {
        let label = match (c.rho, c.s) {
            (Some(rho), Some(s)) => format!("rho={rho} s={s}"),
            _ => "grid".to_string(),
        };
        let med = c
            .summary
            .median_error
            .map(|e| format!("{e:.3e}"))
            .unwrap_or_else(|| "n/a".into());
        println!(
            "{label}: median error {med}, exact support {:.0}%, failed runs {}/{}",
            100.0 * c.summary.support_rate,
            c.summary.failures,
            c.summary.realizations
        );
    }
    let summary = ExperimentSummary {
        schema_version: SCHEMA_VERSION,
        system: &spec,
        noise: &noise,
        identify: &cfg,
        realizations: n,
        cells: summaries,
    };
    write_json(&summary, &args.out.join("summary.json")).map_err(numerical)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_reproduce(args: ReproduceArgs) -> CliResult<()> {
    let n = args.realizations.unwrap_or_else(|| args.figure.default_realizations());
    if n == 0 {
        return Err(usage(anyhow!("--realizations must be at least 1")));
    }
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from("figures").join(args.figure.as_str()));
    let manifest = reproduce(args.figure, n, args.seed, &out).map_err(numerical)?;
    for f in &manifest.files {
        println!("{}", f.display());
    }
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
