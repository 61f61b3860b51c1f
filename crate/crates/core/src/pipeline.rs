//! End-to-end identification: test basis, weak system, sparse solve.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::adaptive::{build_adaptive_basis, AdaptiveGridConfig};
use crate::grid::uniform::{basis_for_square_system, build_uniform_basis, DegreeSpec, UniformGridConfig};
use crate::library::{TermSpec, TrialLibrary};
use crate::series::TimeSeries;
use crate::solver::{sequential_threshold, SolverConfig, WeightMatrix};
use crate::test_function::TestFunction;
use crate::weak_system::{SystemSummary, WeakSystem};

pub const SCHEMA_VERSION: u32 = 1;

/// How test functions are placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridConfig {
    Uniform(UniformGridConfig),
    Adaptive(AdaptiveGridConfig),
    /// Exactly `j` functions (the library size if unset) so `G` is square.
    Square {
        j: Option<usize>,
        degree: DegreeSpec,
        l_override: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    pub max_degree: u32,
    pub trig: bool,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            max_degree: 5,
            trig: false,
        }
    }
}

impl LibraryConfig {
    pub fn build(&self, dim: usize) -> Result<TrialLibrary> {
        TrialLibrary::polynomial(dim, self.max_degree, self.trig)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifyConfig {
    pub grid: GridConfig,
    pub library: LibraryConfig,
    pub solver: SolverConfig,
}

/// Parameters of the test basis that was actually built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub kind: String,
    pub k: usize,
    pub degree: u32,
    /// Support length in grid points.
    pub support_points: usize,
    /// `max|phi'| / max|phi|` of the shared shape.
    pub rho_achieved: f64,
    pub spacing_steps: Option<f64>,
    pub r_whm: Option<f64>,
    /// Unrounded degree from the half-max solve.
    pub degree_root: Option<f64>,
    pub warnings: Vec<String>,
}

fn diagnostics(kind: &str, functions: &[TestFunction], dt: f64) -> Result<GridDiagnostics> {
    let first = functions
        .first()
        .ok_or_else(|| Error::InvalidArgument("test basis is empty".into()))?;
    Ok(GridDiagnostics {
        kind: kind.into(),
        k: functions.len(),
        degree: first.p() as u32,
        support_points: (first.width() / dt).round() as usize + 1,
        rho_achieved: first.sup_ratio()?,
        spacing_steps: None,
        r_whm: None,
        degree_root: None,
        warnings: Vec::new(),
    })
}

/// Test functions for `data` according to `grid`.
pub fn build_basis(data: &TimeSeries, grid: &GridConfig, library_len: usize) -> Result<(Vec<TestFunction>, GridDiagnostics)> {
    match grid {
        GridConfig::Uniform(cfg) => {
            let basis = build_uniform_basis(data, cfg)?;
            let mut diag = diagnostics("uniform", &basis.functions, data.dt())?;
            diag.spacing_steps = Some(basis.spacing_steps);
            diag.warnings = basis.warnings;
            Ok((basis.functions, diag))
        }
        GridConfig::Square { j, degree, l_override } => {
            let basis = basis_for_square_system(data, j.unwrap_or(library_len), *degree, *l_override)?;
            let mut diag = diagnostics("square", &basis.functions, data.dt())?;
            diag.spacing_steps = Some(basis.spacing_steps);
            diag.warnings = basis.warnings;
            Ok((basis.functions, diag))
        }
        GridConfig::Adaptive(cfg) => {
            let basis = build_adaptive_basis(data, cfg)?;
            let mut diag = diagnostics("adaptive", &basis.functions, data.dt())?;
            diag.r_whm = Some(cfg.r_whm);
            diag.degree_root = Some(basis.shape.degree_root);
            diag.warnings = basis.warnings;
            Ok((basis.functions, diag))
        }
    }
}

/// Result of one identification run.
#[derive(Debug)]
pub struct Identification {
    pub library: TrialLibrary,
    pub system: WeakSystem,
    pub weights: WeightMatrix,
    pub grid: GridDiagnostics,
}

pub fn identify(data: &TimeSeries, cfg: &IdentifyConfig) -> Result<Identification> {
    let library = cfg.library.build(data.dim())?;
    identify_with_library(data, library, &cfg.grid, &cfg.solver)
}

pub fn identify_with_library(
    data: &TimeSeries,
    library: TrialLibrary,
    grid: &GridConfig,
    solver: &SolverConfig,
) -> Result<Identification> {
    let (basis, grid) = build_basis(data, grid, library.len())?;
    let system = WeakSystem::assemble(&basis, &library, data)?;
    let weights = sequential_threshold(&system, solver)?;
    Ok(Identification {
        library,
        system,
        weights,
        grid,
    })
}

impl Identification {
    pub fn residual_norm(&self) -> f64 {
        self.system
            .residual(self.weights.weights())
            .map(|r| r.norm())
            .unwrap_or(f64::NAN)
    }

    pub fn model(&self) -> Model {
        Model::new(&self.library, self.weights.weights(), self.weights.converged())
    }

    pub fn report(&self) -> Report {
        let r = self.system.residual(self.weights.weights()).expect("weights match the system");
        Report {
            schema_version: SCHEMA_VERSION,
            system: self.system.summary(),
            grid: self.grid.clone(),
            iterations: self.weights.iterations(),
            converged: self.weights.converged(),
            converged_dims: self.weights.converged_dims().to_vec(),
            nonzero_terms: self.weights.nnz(),
            residual_norm: r.norm(),
            residual_norm_per_dim: r.column_iter().map(|c| c.norm()).collect(),
        }
    }
}

/// One surviving term of one equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTerm {
    pub term: String,
    pub spec: TermSpec,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    /// 1-based state index of `x_d'`.
    pub state: usize,
    pub terms: Vec<ModelTerm>,
}

/// Identified model as written to JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema_version: u32,
    pub dim: usize,
    pub library: TrialLibrary,
    pub converged: bool,
    pub equations: Vec<Equation>,
}

impl Model {
    pub fn new(library: &TrialLibrary, w: &DMatrix<f64>, converged: bool) -> Self {
        let equations = (0..w.ncols())
            .map(|d| Equation {
                state: d + 1,
                terms: library
                    .terms()
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| w[(*j, d)] != 0.0)
                    .map(|(j, t)| ModelTerm {
                        term: t.to_string(),
                        spec: t.clone(),
                        coefficient: w[(j, d)],
                    })
                    .collect(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            dim: library.dim(),
            library: library.clone(),
            converged,
            equations,
        }
    }

    /// Dense `J x D` weights in library order.
    pub fn weights(&self) -> Result<DMatrix<f64>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported schema_version {}", self.schema_version)));
        }
        let mut w = DMatrix::zeros(self.library.len(), self.dim);
        for eq in &self.equations {
            if eq.state == 0 || eq.state > self.dim {
                return Err(Error::Parse(format!("equation for state {} out of range", eq.state)));
            }
            for t in &eq.terms {
                let j = self
                    .library
                    .index_of(&t.spec)
                    .ok_or_else(|| Error::Parse(format!("term {} not in library", t.term)))?;
                w[(j, eq.state - 1)] = t.coefficient;
            }
        }
        Ok(w)
    }

    pub fn nnz(&self) -> usize {
        self.equations.iter().map(|e| e.terms.len()).sum()
    }
}

/// Diagnostics of one identification run as written to JSON.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub system: SystemSummary,
    pub grid: GridDiagnostics,
    pub iterations: usize,
    pub converged: bool,
    pub converged_dims: Vec<bool>,
    pub nonzero_terms: usize,
    pub residual_norm: f64,
    pub residual_norm_per_dim: Vec<f64>,
}
