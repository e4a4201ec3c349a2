//! Signal sources for the operator-level commands: a `t`-expression
//! sampled on a fresh grid, a CSV written by this tool (grid sidecar
//! required), or a member of the Weierstrass family.

use std::path::PathBuf;

use herglotz_core::expr::{self, Alphabet};
use herglotz_core::weierstrass::weierstrass;
use herglotz_core::{Error, Result, SampledSignal, UniformGrid};
use num_complex::Complex64;

pub enum SignalSource {
    Expr(String),
    Csv(PathBuf),
    Weierstrass { amp: f64, freq: u32 },
}

impl SignalSource {
    /// Pick exactly one of the three source flags.
    pub fn from_flags(
        expr: Option<String>,
        input: Option<PathBuf>,
        weierstrass: Option<String>,
        what: &str,
    ) -> Result<Self> {
        match (expr, input, weierstrass) {
            (Some(e), None, None) => Ok(SignalSource::Expr(e)),
            (None, Some(p), None) => Ok(SignalSource::Csv(p)),
            (None, None, Some(w)) => {
                let (amp, freq) = parse_weierstrass(&w)?;
                Ok(SignalSource::Weierstrass { amp, freq })
            }
            _ => Err(Error::Schema(format!(
                "{what}: give exactly one of an expression, a CSV path, or a Weierstrass pair"
            ))),
        }
    }

    /// Realize the source. `grid` must be given for expression and
    /// Weierstrass sources and must be absent for CSV (the sidecar wins).
    pub fn realize(&self, grid: Option<UniformGrid>) -> Result<SampledSignal> {
        match self {
            SignalSource::Expr(text) => {
                let grid = grid.ok_or_else(|| {
                    Error::Schema("an expression source needs --a, --b, and --step".into())
                })?;
                expr_signal(text, grid)
            }
            SignalSource::Csv(path) => {
                if grid.is_some() {
                    return Err(Error::Schema(
                        "--a/--b/--step conflict with a CSV input; the grid sidecar wins".into(),
                    ));
                }
                SampledSignal::read_csv(path)
            }
            SignalSource::Weierstrass { amp, freq } => {
                let grid = grid.ok_or_else(|| {
                    Error::Schema("a Weierstrass source needs --a, --b, and --step".into())
                })?;
                weierstrass(*amp, *freq, 30, grid)
            }
        }
    }
}

/// Sample a `t`-expression over every node of the grid, margins included.
/// Real-valued samples (the usual case) keep the real signal kind so they
/// can serve as trajectories.
pub fn expr_signal(text: &str, grid: UniformGrid) -> Result<SampledSignal> {
    let alphabet = Alphabet::new(vec!["t".to_string()]);
    let e = expr::parse(text, &alphabet)?;
    let values: Vec<Complex64> = (0..grid.len())
        .map(|k| {
            let t = Complex64::new(grid.node(k), 0.0);
            expr::evaluate(&e, &[Some(t)], &alphabet)
        })
        .collect::<Result<_>>()?;
    let kind = if values.iter().all(|v| v.im == 0.0) {
        herglotz_core::SignalKind::Real
    } else {
        herglotz_core::SignalKind::Complex
    };
    SampledSignal::from_values(grid, values, kind)
}

/// `"0.5,3"` → amplitude 0.5, frequency 3.
fn parse_weierstrass(text: &str) -> Result<(f64, u32)> {
    let mut parts = text.split(',');
    let amp = parts
        .next()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| Error::Schema(format!("bad Weierstrass pair `{text}`: want amp,freq")))?;
    let freq = parts
        .next()
        .and_then(|s| s.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Schema(format!("bad Weierstrass pair `{text}`: want amp,freq")))?;
    if parts.next().is_some() {
        return Err(Error::Schema(format!(
            "bad Weierstrass pair `{text}`: want exactly two values"
        )));
    }
    Ok((amp, freq))
}

/// Comma-separated decreasing ladder, e.g. `"0.04,0.02,0.01"`.
pub fn parse_ladder(text: &str) -> Result<Vec<f64>> {
    let ladder: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Schema(format!("bad ladder entry `{s}`")))
        })
        .collect::<Result<_>>()?;
    if ladder.len() < 3 {
        return Err(Error::LadderTooShort {
            len: ladder.len(),
            min: 3,
        });
    }
    Ok(ladder)
}
