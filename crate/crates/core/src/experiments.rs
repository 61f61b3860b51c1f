//! Experiment protocols: noise-free degree sweeps, Monte Carlo recovery
//! studies, and the standard benchmark configurations.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::adaptive::AdaptiveGridConfig;
use crate::grid::uniform::{DegreeSpec, UniformGridConfig};
use crate::io::{write_json, write_trajectory_file};
use crate::library::TrialLibrary;
use crate::metrics::{coeff_error, support_metrics, traj_error};
use crate::pipeline::{identify_with_library, GridConfig, IdentifyConfig, LibraryConfig};
use crate::series::TimeSeries;
use crate::simulate::{
    add_noise, benchmark_suite, extended_times, simulate_learned, IntegratorConfig, NoiseSpec, SystemSpec,
};
use crate::solver::{default_lambda, SolverConfig};

pub const NOISE_FREE_DEGREES: [u32; 6] = [2, 4, 8, 16, 32, 64];

/// A system with its clean trajectory and reference weights.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub label: String,
    pub spec: SystemSpec,
    pub clean: TimeSeries,
    pub library: TrialLibrary,
    pub w_star: DMatrix<f64>,
}

impl Benchmark {
    pub fn new(label: impl Into<String>, spec: SystemSpec, library: &LibraryConfig) -> Result<Self> {
        let clean = spec.integrate(&IntegratorConfig::default())?;
        let library = library.build(spec.dynamics.dim())?;
        let w_star = spec.dynamics.true_weights(&library)?;
        Ok(Self {
            label: label.into(),
            spec,
            clean,
            library,
            w_star,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub degree: u32,
    pub coeff_error: Option<f64>,
    pub support_exact: bool,
    pub error: Option<String>,
}

/// Square-system recovery from clean data for each test-function degree.
pub fn noise_free_sweep(bench: &Benchmark, degrees: &[u32], solver: &SolverConfig) -> Vec<SweepPoint> {
    degrees
        .par_iter()
        .map(|&p| {
            let grid = GridConfig::Square {
                j: None,
                degree: DegreeSpec::Degree(p),
                l_override: None,
            };
            match identify_with_library(&bench.clean, bench.library.clone(), &grid, solver) {
                Ok(id) => {
                    let w = id.weights.weights();
                    SweepPoint {
                        degree: p,
                        coeff_error: coeff_error(w, &bench.w_star).ok(),
                        support_exact: support_metrics(w, &bench.w_star).map(|s| s.exact).unwrap_or(false),
                        error: None,
                    }
                }
                Err(e) => SweepPoint {
                    degree: p,
                    coeff_error: None,
                    support_exact: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Outcome of one noisy realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub realization: u64,
    pub coeff_error: Option<f64>,
    pub support_exact: bool,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub k: usize,
    pub degree: u32,
    pub traj_error: Option<f64>,
    pub error: Option<String>,
}

/// Trajectory comparison settings for learned models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCheck {
    /// Compare only the first this many samples.
    pub window: Option<usize>,
}

fn run_one(
    bench: &Benchmark,
    grid: &GridConfig,
    solver: &SolverConfig,
    noise: &NoiseSpec,
    realization: u64,
    traj: Option<TrajectoryCheck>,
) -> RealizationResult {
    let mut out = RealizationResult {
        realization,
        coeff_error: None,
        support_exact: false,
        false_positives: 0,
        false_negatives: 0,
        k: 0,
        degree: 0,
        traj_error: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let noisy = add_noise(&bench.clean, noise, realization)?;
        let id = identify_with_library(&noisy, bench.library.clone(), grid, solver)?;
        let w = id.weights.weights();
        let s = support_metrics(w, &bench.w_star)?;
        out.coeff_error = Some(coeff_error(w, &bench.w_star)?);
        out.support_exact = s.exact;
        out.false_positives = s.false_positives;
        out.false_negatives = s.false_negatives;
        out.k = id.grid.k;
        out.degree = id.grid.degree;
        if let Some(check) = traj {
            let x_dd = simulate_learned(
                w,
                &bench.library,
                &bench.spec.x0,
                bench.spec.t0,
                bench.clean.times(),
                &IntegratorConfig::default(),
            )?;
            out.traj_error = Some(traj_error(&x_dd, &bench.clean, check.window)?);
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

/// `n` noisy realizations (noise streams `0..n`), identified in parallel.
/// Results are in realization order regardless of scheduling.
pub fn monte_carlo(
    bench: &Benchmark,
    grid: &GridConfig,
    solver: &SolverConfig,
    noise: &NoiseSpec,
    n: usize,
    traj: Option<TrajectoryCheck>,
) -> Vec<RealizationResult> {
    (0..n as u64)
        .into_par_iter()
        .map(|r| run_one(bench, grid, solver, noise, r, traj))
        .collect()
}

/// Aggregate statistics of a set of realizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub realizations: usize,
    pub failures: usize,
    pub median_error: Option<f64>,
    pub mean_log10_error: Option<f64>,
    pub std_log10_error: Option<f64>,
    pub support_rate: f64,
    pub median_traj_error: Option<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn summarize(results: &[RealizationResult]) -> Summary {
    let errors: Vec<f64> = results.iter().filter_map(|r| r.coeff_error).collect();
    let logs: Vec<f64> = errors.iter().map(|e| e.max(1e-300).log10()).collect();
    let mean = (!logs.is_empty()).then(|| logs.iter().sum::<f64>() / logs.len() as f64);
    let std = mean.filter(|_| logs.len() > 1).map(|m| {
        (logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64).sqrt()
    });
    let trajs: Vec<f64> = results.iter().filter_map(|r| r.traj_error).collect();
    Summary {
        realizations: results.len(),
        failures: results.iter().filter(|r| r.error.is_some()).count(),
        median_error: median(&errors),
        mean_log10_error: mean,
        std_log10_error: std,
        support_rate: if results.is_empty() {
            0.0
        } else {
            results.iter().filter(|r| r.support_exact).count() as f64 / results.len() as f64
        },
        median_traj_error: median(&trajs),
    }
}

/// One `(rho, s)` cell of a uniform-grid sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub rho: f64,
    pub s: f64,
    pub summary: Summary,
    pub results: Vec<RealizationResult>,
}

/// Monte Carlo over every `(rho, s)` pair. All cells see the same noise
/// realizations.
pub fn rho_s_sweep(
    bench: &Benchmark,
    rhos: &[f64],
    ss: &[f64],
    solver: &SolverConfig,
    noise: &NoiseSpec,
    n: usize,
) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(rhos.len() * ss.len());
    for &s in ss {
        for &rho in rhos {
            let grid = GridConfig::Uniform(UniformGridConfig { rho, s, l_override: None });
            let results = monte_carlo(bench, &grid, solver, noise, n, None);
            cells.push(Cell {
                rho,
                s,
                summary: summarize(&results),
                results,
            });
        }
    }
    cells
}

/// A complete noisy-recovery configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub name: String,
    pub system: SystemSpec,
    pub sigma_snr: f64,
    pub identify: IdentifyConfig,
    /// Samples compared when scoring the learned trajectory.
    pub traj_window: Option<usize>,
}

impl Setup {
    pub fn benchmark(&self) -> Result<Benchmark> {
        Benchmark::new(self.name.clone(), self.system.clone(), &self.identify.library)
    }
}

fn quarter_min_lambda(spec: &SystemSpec, library: &LibraryConfig) -> Result<f64> {
    let lib = library.build(spec.dynamics.dim())?;
    default_lambda(&spec.dynamics.true_weights(&lib)?)
}

/// Uniform-grid low-noise setup at `rho`, `s`.
pub fn low_noise_setup(system: &str, sigma_snr: f64, rho: f64, s: f64) -> Result<Setup> {
    let spec = match system {
        "duffing" => SystemSpec::duffing(1.0),
        "van_der_pol" => SystemSpec::van_der_pol(4.0),
        other => return Err(Error::InvalidArgument(format!("no low-noise setup for {other:?}"))),
    };
    let library = LibraryConfig { max_degree: 5, trig: false };
    let lambda = quarter_min_lambda(&spec, &library)?;
    Ok(Setup {
        name: format!("{system}/low-noise"),
        system: spec,
        sigma_snr,
        identify: IdentifyConfig {
            grid: GridConfig::Uniform(UniformGridConfig { rho, s, l_override: None }),
            library,
            solver: SolverConfig { lambda, ..Default::default() },
        },
        traj_window: None,
    })
}

/// Adaptive-grid large-noise setup for one of the four benchmarks.
pub fn large_noise_setup(system: &str) -> Result<Setup> {
    let library = LibraryConfig { max_degree: 5, trig: false };
    let (spec, sigma, k_factor, gamma, normalize, window) = match system {
        "duffing" => (SystemSpec::duffing(1.0), 0.1, 6, 0.0, false, None),
        "van_der_pol" => (SystemSpec::van_der_pol(4.0), 0.1, 6, 0.0, false, None),
        "lotka_volterra" => (SystemSpec::lotka_volterra(10.0), 0.05, 6, 0.01, true, None),
        "lorenz" => (SystemSpec::lorenz([-8.0, 7.0, 27.0]), 0.1, 4, 0.0, false, Some(3000)),
        other => return Err(Error::InvalidArgument(format!("unknown system {other:?}"))),
    };
    let j = library.build(spec.dynamics.dim())?.len();
    let lambda = quarter_min_lambda(&spec, &library)?;
    Ok(Setup {
        name: format!("{system}/large-noise"),
        system: spec,
        sigma_snr: sigma,
        identify: IdentifyConfig {
            grid: GridConfig::Adaptive(AdaptiveGridConfig {
                k: k_factor * j,
                ..Default::default()
            }),
            library,
            solver: SolverConfig {
                lambda,
                gamma,
                normalize_columns: normalize,
                ..Default::default()
            },
        },
        traj_window: window,
    })
}

/// Named reproduction protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureId {
    Oz,
    LownzDuff,
    LownzVdp,
    DuffHnz,
    VpHnz,
    LvHnz,
    LorenzHnz,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::Oz,
        FigureId::LownzDuff,
        FigureId::LownzVdp,
        FigureId::DuffHnz,
        FigureId::VpHnz,
        FigureId::LvHnz,
        FigureId::LorenzHnz,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureId::Oz => "oz",
            FigureId::LownzDuff => "lownz-duff",
            FigureId::LownzVdp => "lownz-vdp",
            FigureId::DuffHnz => "duff-hnz",
            FigureId::VpHnz => "vp-hnz",
            FigureId::LvHnz => "lv-hnz",
            FigureId::LorenzHnz => "lorenz-hnz",
        }
    }

    /// Realizations used when none are requested.
    pub fn default_realizations(&self) -> usize {
        match self {
            FigureId::Oz => 1,
            FigureId::LownzDuff | FigureId::LownzVdp => 20,
            _ => 1,
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown figure {s:?}")))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub figure: FigureId,
    pub seed: u64,
    pub realizations: usize,
    pub settings: serde_json::Value,
    pub files: Vec<PathBuf>,
}

pub const LOW_NOISE_RHOS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];
pub const LOW_NOISE_SS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const LOW_NOISE_LEVELS: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 0.04];

/// Serializes `rows` as CSV with a header row.
pub fn write_rows<T: Serialize>(rows: impl IntoIterator<Item = T>, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OzRow<'a> {
    system: &'a str,
    degree: u32,
    coeff_error: Option<f64>,
    support_exact: bool,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct CellRow {
    sigma_snr: f64,
    rho: f64,
    s: f64,
    realizations: usize,
    failures: usize,
    mean_log10_error: Option<f64>,
    std_log10_error: Option<f64>,
    median_error: Option<f64>,
    support_rate: f64,
}

#[derive(Serialize)]
struct RealizationRow<'a> {
    sigma_snr: f64,
    rho: f64,
    s: f64,
    realization: u64,
    coeff_error: Option<f64>,
    support_exact: bool,
    false_positives: usize,
    false_negatives: usize,
    k: usize,
    degree: u32,
    traj_error: Option<f64>,
    error: Option<&'a str>,
}

fn cell_row(sigma: f64, c: &Cell) -> CellRow {
    CellRow {
        sigma_snr: sigma,
        rho: c.rho,
        s: c.s,
        realizations: c.summary.realizations,
        failures: c.summary.failures,
        mean_log10_error: c.summary.mean_log10_error,
        std_log10_error: c.summary.std_log10_error,
        median_error: c.summary.median_error,
        support_rate: c.summary.support_rate,
    }
}

/// Writes one aggregate row per cell to `aggregate` and one row per
/// realization to `per_realization`.
pub fn write_cells(sigma_snr: f64, cells: &[Cell], aggregate: &Path, per_realization: &Path) -> Result<()> {
    write_rows(cells.iter().map(|c| cell_row(sigma_snr, c)), aggregate)?;
    write_rows(
        cells.iter().flat_map(|c| {
            c.results.iter().map(move |r| RealizationRow {
                sigma_snr,
                rho: c.rho,
                s: c.s,
                realization: r.realization,
                coeff_error: r.coeff_error,
                support_exact: r.support_exact,
                false_positives: r.false_positives,
                false_negatives: r.false_negatives,
                k: r.k,
                degree: r.degree,
                traj_error: r.traj_error,
                error: r.error.as_deref(),
            })
        }),
        per_realization,
    )
}

/// Runs a reproduction protocol and writes plot-ready CSVs plus
/// `manifest.json` into `out_dir`.
pub fn reproduce(figure: FigureId, realizations: usize, seed: u64, out_dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir)?;
    let n = realizations.max(1);
    let mut files = Vec::new();
    let settings;
    match figure {
        FigureId::Oz => {
            let library = LibraryConfig { max_degree: 5, trig: true };
            let solver = SolverConfig::default();
            let suite = benchmark_suite(5, seed);
            let mut rows: Vec<(String, SweepPoint)> = Vec::new();
            for (label, spec) in &suite {
                let bench = Benchmark::new(label.clone(), spec.clone(), &library)?;
                for point in noise_free_sweep(&bench, &NOISE_FREE_DEGREES, &solver) {
                    rows.push((label.clone(), point));
                }
            }
            let path = out_dir.join("oz.csv");
            write_rows(
                rows.iter().map(|(label, p)| OzRow {
                    system: label,
                    degree: p.degree,
                    coeff_error: p.coeff_error,
                    support_exact: p.support_exact,
                    error: p.error.as_deref(),
                }),
                &path,
            )?;
            files.push(path);
            settings = serde_json::json!({
                "library": library,
                "solver": solver,
                "degrees": NOISE_FREE_DEGREES,
                "systems": suite,
            });
        }
        FigureId::LownzDuff | FigureId::LownzVdp => {
            let system = if figure == FigureId::LownzDuff { "duffing" } else { "van_der_pol" };
            let setup = low_noise_setup(system, 0.04, 5.0, 0.5)?;
            let bench = setup.benchmark()?;
            let solver = setup.identify.solver.clone();
            let noise = NoiseSpec { sigma_snr: 0.04, seed };
            let heat = rho_s_sweep(&bench, &LOW_NOISE_RHOS, &LOW_NOISE_SS, &solver, &noise, n);
            let (a, b) = (out_dir.join("heatmap.csv"), out_dir.join("heatmap_realizations.csv"));
            write_cells(0.04, &heat, &a, &b)?;
            files.extend([a, b]);

            let mut trend = Vec::new();
            for &sigma in &LOW_NOISE_LEVELS {
                let noise = NoiseSpec { sigma_snr: sigma, seed };
                for c in rho_s_sweep(&bench, &LOW_NOISE_RHOS, &[0.5], &solver, &noise, n) {
                    trend.push(cell_row(sigma, &c));
                }
            }
            let path = out_dir.join("trend.csv");
            write_rows(trend, &path)?;
            files.push(path);

            files.extend(example_run(&setup, seed, out_dir, 1.0)?);
            settings = serde_json::json!({
                "setup": setup,
                "rhos": LOW_NOISE_RHOS,
                "ss": LOW_NOISE_SS,
                "noise_levels": LOW_NOISE_LEVELS,
            });
        }
        FigureId::DuffHnz | FigureId::VpHnz | FigureId::LvHnz | FigureId::LorenzHnz => {
            let system = match figure {
                FigureId::DuffHnz => "duffing",
                FigureId::VpHnz => "van_der_pol",
                FigureId::LvHnz => "lotka_volterra",
                _ => "lorenz",
            };
            let setup = large_noise_setup(system)?;
            files.extend(example_run(&setup, seed, out_dir, 1.5)?);
            if n > 1 {
                let bench = setup.benchmark()?;
                let noise = NoiseSpec { sigma_snr: setup.sigma_snr, seed };
                let check = TrajectoryCheck { window: setup.traj_window };
                let results = monte_carlo(&bench, &setup.identify.grid, &setup.identify.solver, &noise, n, Some(check));
                let path = out_dir.join("realizations.csv");
                write_rows(results.iter(), &path)?;
                files.push(path);
                let path = out_dir.join("summary.json");
                write_json(&summarize(&results), &path)?;
                files.push(path);
            }
            settings = serde_json::json!({ "setup": setup, "extension_factor": 1.5 });
        }
    }
    let manifest = Manifest {
        figure,
        seed,
        realizations: n,
        settings,
        files,
    };
    write_json(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Single-realization run: writes clean data, noisy data, the learned
/// trajectory (extended by `extension`), the model and a metrics JSON.
fn example_run(setup: &Setup, seed: u64, out_dir: &Path, extension: f64) -> Result<Vec<PathBuf>> {
    let bench = setup.benchmark()?;
    let noisy = add_noise(&bench.clean, &NoiseSpec { sigma_snr: setup.sigma_snr, seed }, 0)?;
    let id = identify_with_library(&noisy, bench.library.clone(), &setup.identify.grid, &setup.identify.solver)?;
    let w = id.weights.weights();
    let mut files = vec![out_dir.join("clean.csv"), out_dir.join("noisy.csv")];
    write_trajectory_file(&bench.clean, &files[0])?;
    write_trajectory_file(&noisy, &files[1])?;

    let times = extended_times(&bench.clean, extension);
    let learned = simulate_learned(w, &bench.library, &bench.spec.x0, bench.spec.t0, &times, &IntegratorConfig::default());
    let (traj, learned_error) = match &learned {
        Ok(x_dd) => {
            let path = out_dir.join("learned.csv");
            write_trajectory_file(x_dd, &path)?;
            files.push(path);
            let head = x_dd.head(bench.clean.len())?;
            (traj_error(&head, &bench.clean, setup.traj_window).ok(), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let path = out_dir.join("model.json");
    write_json(&id.model(), &path)?;
    files.push(path);
    let s = support_metrics(w, &bench.w_star)?;
    let path = out_dir.join("metrics.json");
    write_json(
        &serde_json::json!({
            "coeff_error": coeff_error(w, &bench.w_star)?,
            "support_exact": s.exact,
            "false_positives": s.false_positives,
            "false_negatives": s.false_negatives,
            "traj_error": traj,
            "traj_window": setup.traj_window,
            "learned_simulation_error": learned_error,
            "report": id.report(),
        }),
        &path,
    )?;
    files.push(path);
    Ok(files)
}
