//! Deterministic Weierstrass-type test signals.
//!
//! W(t) = Σ_{k=0}^{terms−1} amp^k · cos(freq^k · π · t) is continuous
//! everywhere and, in the regime amp·freq > 1, differentiable nowhere — the
//! canonical stress test for scale-derivative operators. Its Hölder exponent
//! is −ln(amp)/ln(freq).

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::signal::SampledSignal;

/// Sample a Weierstrass sum on the grid (margins included).
///
/// Requires the non-differentiable regime `amp ∈ (0,1)`, `freq ≥ 2`,
/// `amp·freq > 1`; a single term degenerates to `cos(πt)`.
pub fn weierstrass(amp: f64, freq: u32, terms: u32, grid: UniformGrid) -> Result<SampledSignal> {
    if !(amp > 0.0 && amp < 1.0) {
        return Err(Error::InvalidRegime(format!(
            "amplitude ratio {amp} must lie in (0, 1)"
        )));
    }
    if freq < 2 {
        return Err(Error::InvalidRegime(format!(
            "frequency ratio {freq} must be an integer >= 2"
        )));
    }
    if amp * freq as f64 <= 1.0 {
        return Err(Error::InvalidRegime(format!(
            "amp*freq = {} <= 1: sum is differentiable, not a Weierstrass regime",
            amp * freq as f64
        )));
    }
    if terms == 0 {
        return Err(Error::InvalidParameter("terms must be >= 1".into()));
    }
    Ok(SampledSignal::from_real_fn(grid, |t| {
        let mut acc = 0.0;
        let mut a_k = 1.0;
        let mut f_k = 1.0;
        for _ in 0..terms {
            acc += a_k * (f_k * std::f64::consts::PI * t).cos();
            a_k *= amp;
            f_k *= freq as f64;
        }
        acc
    }))
}

/// Theoretical Hölder exponent of the Weierstrass family: −ln(amp)/ln(freq).
pub fn theoretical_exponent(amp: f64, freq: u32) -> f64 {
    -amp.ln() / (freq as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holder::holder_exponent;

    #[test]
    fn single_term_is_plain_cosine() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.01, 0).unwrap();
        let w = weierstrass(0.5, 3, 1, g).unwrap();
        for k in 0..w.len() {
            let t = w.grid().node(k);
            assert_eq!(w.value(k).re, (std::f64::consts::PI * t).cos());
        }
    }

    #[test]
    fn geometric_bound_holds() {
        let g = UniformGrid::symmetric(0.0, 1.0, 1.0 / 512.0, 0).unwrap();
        let w = weierstrass(0.5, 3, 30, g).unwrap();
        assert!(w.values().iter().all(|v| v.norm() <= 2.0));
    }

    #[test]
    fn tail_beyond_thirty_terms_is_negligible() {
        let g = UniformGrid::symmetric(0.0, 1.0, 1.0 / 512.0, 0).unwrap();
        let w30 = weierstrass(0.5, 3, 30, g).unwrap();
        let w40 = weierstrass(0.5, 3, 40, g).unwrap();
        let max_diff = w30
            .values()
            .iter()
            .zip(w40.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(max_diff <= 1e-8, "{max_diff}");
    }

    #[test]
    fn regime_is_enforced() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.01, 0).unwrap();
        assert!(matches!(
            weierstrass(0.3, 3, 10, g),
            Err(Error::InvalidRegime(_))
        ));
        assert!(matches!(
            weierstrass(1.2, 3, 10, g),
            Err(Error::InvalidRegime(_))
        ));
        assert!(matches!(
            weierstrass(0.5, 1, 10, g),
            Err(Error::InvalidRegime(_))
        ));
        assert!(weierstrass(0.5, 3, 0, g).is_err());
    }

    #[test]
    fn holder_estimate_matches_theory() {
        let g = UniformGrid::symmetric(0.0, 1.0, 1.0 / 2048.0, 0).unwrap();
        let w = weierstrass(0.5, 3, 30, g).unwrap();
        let est = holder_exponent(&w).unwrap();
        let want = theoretical_exponent(0.5, 3);
        assert!((want - 2f64.ln() / 3f64.ln()).abs() < 1e-15);
        assert!(
            (est.alpha_hat - want).abs() <= 0.1,
            "alpha_hat = {} vs {}",
            est.alpha_hat,
            want
        );
    }
}
