//! JSON problem-file schema.
//!
//! A problem file is a strict-schema JSON document: unknown keys are
//! rejected so a typo like `"boundries"` fails loudly instead of being
//! silently ignored. Expressions are embedded as strings and parsed
//! against the alphabet implied by the variant.

use std::path::Path;

use herglotz_core::{Error, Result};
use num_complex::Complex64;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    /// One of the registered variant names: `scalar`, `vector`,
    /// `higher_order`, `field`.
    pub variant: String,
    /// Time interval `[a, b]`.
    pub interval: [f64; 2],
    /// Initial action value `z(a)`; a bare number or an `[re, im]` pair.
    #[serde(default)]
    pub z_a: ComplexSpec,
    /// Number of coordinates (vector variant) or space axes (field variant).
    #[serde(default)]
    pub dimension: Option<usize>,
    /// Highest derivative order (higher_order variant).
    #[serde(default)]
    pub order: Option<usize>,
    /// Lagrangian (or density) expression text.
    pub lagrangian: String,
    /// One pair per coordinate (scalar/vector) or per derivative order
    /// (higher_order). Field boundaries travel with the trajectory.
    #[serde(default)]
    pub boundaries: Vec<BoundarySpec>,
    pub grid: GridSpec,
    pub scale: ScaleSpec,
    #[serde(default)]
    pub solve: Option<SolveSpec>,
    /// Expression(s) for the initial/candidate trajectory, in `t` (and
    /// `x1[, x2]` for fields).
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    /// Space box per axis (field variant only).
    #[serde(default)]
    pub space: Option<Vec<[f64; 2]>>,
}

/// A real number, or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum ComplexSpec {
    Real(f64),
    Pair([f64; 2]),
}

impl Default for ComplexSpec {
    fn default() -> Self {
        ComplexSpec::Real(0.0)
    }
}

impl ComplexSpec {
    pub fn value(self) -> Complex64 {
        match self {
            ComplexSpec::Real(re) => Complex64::new(re, 0.0),
            ComplexSpec::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub left: f64,
    pub right: RightBoundarySpec,
}

/// A fixed right boundary value, or the string `"free"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RightBoundarySpec {
    Fixed(f64),
    Keyword(String),
}

impl RightBoundarySpec {
    pub fn to_boundary(&self) -> Result<herglotz_core::herglotz::Boundary> {
        match self {
            RightBoundarySpec::Fixed(v) => Ok(herglotz_core::herglotz::Boundary::Fixed(*v)),
            RightBoundarySpec::Keyword(s) if s == "free" => {
                Ok(herglotz_core::herglotz::Boundary::Free)
            }
            RightBoundarySpec::Keyword(s) => Err(Error::Schema(format!(
                "right boundary must be a number or \"free\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub step: f64,
    pub margin_nodes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub h: f64,
    #[serde(default)]
    pub ladder: Option<Vec<f64>>,
}

/// Optional solver controls; anything omitted keeps the library default.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub gradient_tolerance: Option<f64>,
    #[serde(default)]
    pub initial_step: Option<f64>,
    #[serde(default)]
    pub shrink_factor: Option<f64>,
    #[serde(default)]
    pub sufficient_decrease: Option<f64>,
    /// `stationary` (default), `minimize`, or `maximize`.
    #[serde(default)]
    pub mode: Option<String>,
}

/// One expression, or one per coordinate.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    One(String),
    Many(Vec<String>),
}

impl InitialSpec {
    /// The expression for coordinate `i` of an `n`-coordinate trajectory.
    pub fn component(&self, i: usize, n: usize) -> Result<&str> {
        match self {
            InitialSpec::One(s) => Ok(s),
            InitialSpec::Many(v) if v.len() == n => Ok(&v[i]),
            InitialSpec::Many(v) => Err(Error::Schema(format!(
                "initial gives {} expressions but the problem has {} coordinates",
                v.len(),
                n
            ))),
        }
    }
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
        let file: ProblemFile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<()> {
        let [a, b] = self.interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::Schema(format!(
                "interval [{a}, {b}] must be finite with a < b"
            )));
        }
        match self.variant.as_str() {
            "scalar" => {
                if self.dimension.is_some_and(|d| d != 1) {
                    return Err(Error::Schema(
                        "scalar problems have dimension 1; use the vector variant".into(),
                    ));
                }
                if self.boundaries.len() != 1 {
                    return Err(Error::Schema(format!(
                        "scalar problems need exactly one boundary pair, got {}",
                        self.boundaries.len()
                    )));
                }
            }
            "vector" => {
                let n = self
                    .dimension
                    .ok_or_else(|| Error::Schema("vector problems need `dimension`".into()))?;
                if n == 0 {
                    return Err(Error::Schema("dimension must be at least 1".into()));
                }
                if self.boundaries.len() != n {
                    return Err(Error::Schema(format!(
                        "expected {n} boundary pairs, got {}",
                        self.boundaries.len()
                    )));
                }
            }
            "higher_order" => {
                let n = self
                    .order
                    .ok_or_else(|| Error::Schema("higher_order problems need `order`".into()))?;
                if n == 0 {
                    return Err(Error::Schema("order must be at least 1".into()));
                }
                if self.boundaries.len() != n {
                    return Err(Error::Schema(format!(
                        "expected one boundary pair per derivative order (0..{}), got {}",
                        n - 1,
                        self.boundaries.len()
                    )));
                }
            }
            "field" => {
                let n = self.dimension.ok_or_else(|| {
                    Error::Schema("field problems need `dimension` (space axes)".into())
                })?;
                let space = self
                    .space
                    .as_ref()
                    .ok_or_else(|| Error::Schema("field problems need `space` boxes".into()))?;
                if space.len() != n {
                    return Err(Error::Schema(format!(
                        "expected {n} space boxes, got {}",
                        space.len()
                    )));
                }
                if !self.boundaries.is_empty() {
                    return Err(Error::Schema(
                        "field boundaries are carried by the trajectory; omit `boundaries`".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Schema(format!(
                    "unknown variant `{other}`: expected scalar, vector, higher_order, or field"
                )));
            }
        }
        Ok(())
    }

    /// Boundary pairs in core form.
    pub fn boundary_pairs(&self) -> Result<Vec<herglotz_core::herglotz::BoundaryPair>> {
        self.boundaries
            .iter()
            .map(|bs| {
                Ok(herglotz_core::herglotz::BoundaryPair {
                    left: bs.left,
                    right: bs.right.to_boundary()?,
                })
            })
            .collect()
    }

    pub fn solve_options(
        &self,
        certification_tolerance: f64,
    ) -> Result<herglotz_core::solver::SolveOptions> {
        let mut options = herglotz_core::solver::SolveOptions {
            certification_tolerance,
            ..Default::default()
        };
        if let Some(spec) = &self.solve {
            if let Some(v) = spec.max_iterations {
                options.max_iterations = v;
            }
            if let Some(v) = spec.gradient_tolerance {
                options.gradient_tolerance = v;
            }
            if let Some(v) = spec.initial_step {
                options.initial_step = v;
            }
            if let Some(v) = spec.shrink_factor {
                options.shrink_factor = v;
            }
            if let Some(v) = spec.sufficient_decrease {
                options.sufficient_decrease = v;
            }
            if let Some(mode) = &spec.mode {
                options.mode = match mode.as_str() {
                    "stationary" => herglotz_core::solver::SolveMode::Stationary,
                    "minimize" => herglotz_core::solver::SolveMode::Minimize,
                    "maximize" => herglotz_core::solver::SolveMode::Maximize,
                    other => return Err(Error::Schema(format!(
                        "unknown solve mode `{other}`: expected stationary, minimize, or maximize"
                    ))),
                };
            }
        }
        Ok(options)
    }
}
