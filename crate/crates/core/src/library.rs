//! Candidate dictionaries of monomials and univariate trigonometric terms.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// One candidate function `f_j`.
///
/// Trig terms act on a single coordinate `d` with integer frequency `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermSpec {
    Monomial { exponents: Vec<u32> },
    Sine { n: u32, d: usize },
    Cosine { n: u32, d: usize },
}

impl TermSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TermSpec::Monomial { exponents } => exponents
                .iter()
                .zip(x)
                .map(|(&e, &v)| v.powi(e as i32))
                .product(),
            TermSpec::Sine { n, d } => (*n as f64 * x[*d]).sin(),
            TermSpec::Cosine { n, d } => (*n as f64 * x[*d]).cos(),
        }
    }

    pub fn degree(&self) -> Option<u32> {
        match self {
            TermSpec::Monomial { exponents } => Some(exponents.iter().sum()),
            _ => None,
        }
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermSpec::Monomial { exponents } => {
                let factors: Vec<String> = exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(d, &e)| match e {
                        1 => format!("x{}", d + 1),
                        e => format!("x{}^{}", d + 1, e),
                    })
                    .collect();
                if factors.is_empty() {
                    write!(f, "1")
                } else {
                    write!(f, "{}", factors.join("*"))
                }
            }
            TermSpec::Sine { n, d } => match n {
                1 => write!(f, "sin(x{})", d + 1),
                n => write!(f, "sin({}*x{})", n, d + 1),
            },
            TermSpec::Cosine { n, d } => match n {
                1 => write!(f, "cos(x{})", d + 1),
                n => write!(f, "cos({}*x{})", n, d + 1),
            },
        }
    }
}

/// Ordered dictionary of candidate terms for a `D`-dimensional state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLibrary {
    dim: usize,
    terms: Vec<TermSpec>,
}

impl TrialLibrary {
    /// All monomials of total degree `<= max_degree` (constant included), in
    /// graded lexicographic order, optionally followed by `sin(n x_d)` and
    /// `cos(n x_d)` for `n = 1, 2`.
    pub fn polynomial(dim: usize, max_degree: u32, include_trig: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("library dimension must be >= 1".into()));
        }
        let mut terms = Vec::new();
        for degree in 0..=max_degree {
            let mut current = vec![0u32; dim];
            push_compositions(degree, 0, &mut current, &mut terms);
        }
        if include_trig {
            for n in 1..=2 {
                for d in 0..dim {
                    terms.push(TermSpec::Sine { n, d });
                }
            }
            for n in 1..=2 {
                for d in 0..dim {
                    terms.push(TermSpec::Cosine { n, d });
                }
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn from_terms(dim: usize, terms: Vec<TermSpec>) -> Result<Self> {
        for (i, term) in terms.iter().enumerate() {
            let ok = match term {
                TermSpec::Monomial { exponents } => exponents.len() == dim,
                TermSpec::Sine { d, .. } | TermSpec::Cosine { d, .. } => *d < dim,
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "term {term} does not match dimension {dim}"
                )));
            }
            if terms[..i].contains(term) {
                return Err(Error::InvalidArgument(format!("duplicate term {term}")));
            }
        }
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of terms `J`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[TermSpec] {
        &self.terms
    }

    pub fn index_of(&self, term: &TermSpec) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    /// Column index of the monomial with the given exponents.
    pub fn monomial_index(&self, exponents: &[u32]) -> Option<usize> {
        self.index_of(&TermSpec::Monomial {
            exponents: exponents.to_vec(),
        })
    }

    pub fn eval_row(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(x)).collect()
    }

    /// `Theta(y)`: row `m`, column `j` holds `f_j(y_m)`.
    pub fn evaluate(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "data has {} columns, library expects {}",
                y.ncols(),
                self.dim
            )));
        }
        for col in 0..y.ncols() {
            for row in 0..y.nrows() {
                if !y[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        let m = y.nrows();
        let mut theta = DMatrix::zeros(m, self.terms.len());
        let mut x = vec![0.0; self.dim];
        for row in 0..m {
            for (d, v) in x.iter_mut().enumerate() {
                *v = y[(row, d)];
            }
            for (j, term) in self.terms.iter().enumerate() {
                theta[(row, j)] = term.eval(&x);
            }
        }
        Ok(theta)
    }

    pub fn theta(&self, data: &TimeSeries) -> Result<DMatrix<f64>> {
        self.evaluate(data.values())
    }
}

// Exponent vectors of a fixed total degree, first coordinate descending.
fn push_compositions(remaining: u32, d: usize, current: &mut Vec<u32>, out: &mut Vec<TermSpec>) {
    if d == current.len() - 1 {
        current[d] = remaining;
        out.push(TermSpec::Monomial {
            exponents: current.clone(),
        });
        return;
    }
    for e in (0..=remaining).rev() {
        current[d] = e;
        push_compositions(remaining - e, d + 1, current, out);
    }
    current[d] = 0;
}
