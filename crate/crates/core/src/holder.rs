//! Hölder-exponent estimation for sampled signals.
//!
//! A signal in the Hölder class H^α satisfies |f(t) − f(s)| ≤ C·|t − s|^α.
//! The estimator measures M(δ) = max |f(t+δ) − f(t)| over dyadic lags and
//! reads α off the log-log slope. Only small lags (δ ≤ range/8) enter the
//! regression, since the sup-type bound is a small-scale statement and large
//! lags bias the slope.

use crate::error::{Error, Result};
use crate::numerics::linear_regression;
use crate::signal::SampledSignal;

#[derive(Debug, Clone)]
pub struct HolderEstimate {
    /// Estimated Hölder exponent, clamped into (0, 1].
    pub alpha_hat: f64,
    /// The fitted (log δ, log M(δ)) pairs.
    pub regression_points: Vec<(f64, f64)>,
    pub r_squared: f64,
}

const MIN_NODES: usize = 64;

/// Estimate the Hölder exponent of `f` from its modulus of continuity over
/// dyadic lags δ = 2^k · step, k = 0, 1, …, restricted to δ ≤ (b − a)/8.
pub fn holder_exponent(f: &SampledSignal) -> Result<HolderEstimate> {
    if f.len() < MIN_NODES {
        return Err(Error::TooFewSamples {
            needed: MIN_NODES,
            got: f.len(),
        });
    }
    let grid = f.grid();
    let step = grid.step();
    let max_lag = (grid.b() - grid.a()) / 8.0;
    let vals = f.values();

    let mut points = Vec::new();
    let mut lag = 1usize;
    while lag as f64 * step <= max_lag * (1.0 + 1e-12) {
        let mut m: f64 = 0.0;
        for j in 0..vals.len() - lag {
            m = m.max((vals[j + lag] - vals[j]).norm());
        }
        if m > 0.0 {
            points.push(((lag as f64 * step).ln(), m.ln()));
        }
        lag *= 2;
    }

    if points.len() < 2 {
        // flat signal: every increment vanished — Lipschitz in the most
        // degenerate way
        return Ok(HolderEstimate {
            alpha_hat: 1.0,
            regression_points: points,
            r_squared: 1.0,
        });
    }
    let (_, slope, r_squared) = linear_regression(&points);
    Ok(HolderEstimate {
        alpha_hat: slope.clamp(f64::EPSILON, 1.0),
        regression_points: points,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;

    #[test]
    fn linear_signal_is_lipschitz() {
        let g = UniformGrid::symmetric(0.0, 1.0, 1.0 / 256.0, 0).unwrap();
        let est = holder_exponent(&SampledSignal::from_real_fn(g, |t| t)).unwrap();
        assert!(
            est.alpha_hat >= 0.95 && est.alpha_hat <= 1.0,
            "{}",
            est.alpha_hat
        );
        assert!(est.r_squared > 0.99);
    }

    #[test]
    fn square_root_cusp_has_exponent_half() {
        let g = UniformGrid::symmetric(-1.0, 1.0, 1.0 / 256.0, 0).unwrap();
        let est = holder_exponent(&SampledSignal::from_real_fn(g, |t| t.abs().sqrt())).unwrap();
        assert!(
            (est.alpha_hat - 0.5).abs() <= 0.1,
            "alpha_hat = {}",
            est.alpha_hat
        );
    }

    #[test]
    fn short_signals_are_rejected() {
        let g = UniformGrid::symmetric(0.0, 1.0, 1.0 / 32.0, 0).unwrap();
        let err = holder_exponent(&SampledSignal::from_real_fn(g, |t| t)).unwrap_err();
        assert!(matches!(
            err,
            Error::TooFewSamples {
                needed: 64,
                got: 33
            }
        ));
    }

    #[test]
    fn constant_signal_defaults_to_one() {
        let g = UniformGrid::symmetric(0.0, 1.0, 1.0 / 128.0, 0).unwrap();
        let est = holder_exponent(&SampledSignal::from_real_fn(g, |_| 2.0)).unwrap();
        assert_eq!(est.alpha_hat, 1.0);
    }
}
