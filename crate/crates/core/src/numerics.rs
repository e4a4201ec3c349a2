//! Small numerical helpers shared across the crate: quadrature, least
//! squares, and cubic interpolation stencils.

use num_complex::Complex64;

/// Trapezoid rule over equally spaced samples.
pub fn trapezoid(values: &[Complex64], step: f64) -> Complex64 {
    match values.len() {
        0 | 1 => Complex64::new(0.0, 0.0),
        n => {
            let mut acc = (values[0] + values[n - 1]) * 0.5;
            for v in &values[1..n - 1] {
                acc += v;
            }
            acc * step
        }
    }
}

/// Cumulative trapezoid integral anchored at `anchor`: the result is zero
/// there and extends across the whole slice in both directions.
pub fn cumulative_trapezoid(values: &[Complex64], step: f64, anchor: usize) -> Vec<Complex64> {
    let n = values.len();
    assert!(anchor < n);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in anchor + 1..n {
        out[k] = out[k - 1] + (values[k - 1] + values[k]) * (0.5 * step);
    }
    for k in (0..anchor).rev() {
        out[k] = out[k + 1] - (values[k] + values[k + 1]) * (0.5 * step);
    }
    out
}

/// Least-squares affine fit `y ~ y0 + c x` for complex samples over real
/// abscissae. Returns `(y0, c, variance)` where `variance` is the mean
/// squared modulus of the fit residuals.
pub fn affine_fit(xs: &[f64], ys: &[Complex64]) -> (Complex64, Complex64, f64) {
    let n = xs.len();
    assert!(n >= 2 && n == ys.len());
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<Complex64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = Complex64::new(0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        sxx += dx * dx;
        sxy += (y - y_mean) * dx;
    }
    let c = if sxx > 0.0 {
        sxy / sxx
    } else {
        Complex64::new(0.0, 0.0)
    };
    let y0 = y_mean - c * x_mean;
    let mut var = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        var += (y - (y0 + c * x)).norm_sqr();
    }
    (y0, c, var / nf)
}

/// Least-squares slope of `ln y` against `ln x`; pairs with `y <= 0` are
/// skipped. Returns `(slope, used_points)`.
pub fn log_log_slope(pairs: &[(f64, f64)]) -> (f64, usize) {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return (0.0, pts.len());
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &pts {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
    }
    (sxy / sxx, pts.len())
}

/// Simple linear regression `y ~ a + b x` returning `(a, b, r_squared)`.
pub fn linear_regression(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    assert!(pairs.len() >= 2);
    let xm = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in pairs {
        sxx += (x - xm) * (x - xm);
        sxy += (x - xm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    let b = sxy / sxx;
    let a = ym - b * xm;
    let r2 = if syy > 0.0 {
        let ss_res: f64 = pairs
            .iter()
            .map(|(x, y)| {
                let e = y - (a + b * x);
                e * e
            })
            .sum();
        1.0 - ss_res / syy
    } else {
        1.0
    };
    (a, b, r2)
}

/// Solve the symmetric positive-definite system `N x = b` in place by
/// Cholesky factorization.  Returns `None` when a pivot is not positive.
pub(crate) fn cholesky_solve(n: &mut [Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = b.len();
    for c in 0..m {
        for r in c..m {
            let dot: f64 = n[r][..c].iter().zip(&n[c][..c]).map(|(p, q)| p * q).sum();
            let s = n[r][c] - dot;
            if r == c {
                if s <= 0.0 {
                    return None;
                }
                n[c][c] = s.sqrt();
            } else {
                n[r][c] = s / n[c][c];
            }
        }
    }
    let mut x = b.to_vec();
    for r in 0..m {
        for k in 0..r {
            x[r] -= n[r][k] * x[k];
        }
        x[r] /= n[r][r];
    }
    for r in (0..m).rev() {
        for k in r + 1..m {
            x[r] -= n[k][r] * x[k];
        }
        x[r] /= n[r][r];
    }
    Some(x)
}

/// Cubic Lagrange weights over nodes `{0,1,2,3}` evaluated at `theta`.
pub(crate) fn lagrange4(theta: f64) -> [f64; 4] {
    let t = theta;
    [
        (t - 1.0) * (t - 2.0) * (t - 3.0) / -6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 3.0) / -2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Value halfway between nodes `j` and `j+1` by 4-point cubic interpolation.
/// The stencil slides to one side at the ends of the slice.
pub fn interp_midpoint(values: &[Complex64], j: usize) -> Complex64 {
    let n = values.len();
    debug_assert!(j + 1 < n);
    if n < 4 {
        // short slice: fall back to the linear midpoint
        return (values[j] + values[j + 1]) * 0.5;
    }
    let base = if j == 0 {
        0
    } else if j + 2 >= n {
        n - 4
    } else {
        j - 1
    };
    let theta = (j as f64 - base as f64) + 0.5;
    let w = lagrange4(theta);
    values[base] * w[0]
        + values[base + 1] * w[1]
        + values[base + 2] * w[2]
        + values[base + 3] * w[3]
}

/// Extrapolate beyond the end of a slice with the cubic through its last
/// four points. `offset` is the distance past the final point, in steps.
pub fn extrapolate_cubic_right(values: &[Complex64], offset: usize) -> Complex64 {
    let n = values.len();
    debug_assert!(n >= 4);
    let w = lagrange4(3.0 + offset as f64);
    values[n - 4] * w[0] + values[n - 3] * w[1] + values[n - 2] * w[2] + values[n - 1] * w[3]
}

/// Extrapolate before the start of a slice with the cubic through its first
/// four points. `offset` is the distance before the first point, in steps.
pub fn extrapolate_cubic_left(values: &[Complex64], offset: usize) -> Complex64 {
    debug_assert!(values.len() >= 4);
    let w = lagrange4(-(offset as f64));
    values[0] * w[0] + values[1] * w[1] + values[2] * w[2] + values[3] * w[3]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn trapezoid_is_exact_for_affine() {
        let vals: Vec<Complex64> = (0..=10).map(|k| c(2.0 * k as f64 * 0.1 + 1.0)).collect();
        let i = trapezoid(&vals, 0.1);
        assert!((i.re - 2.0).abs() < 1e-14, "got {}", i.re);
    }

    #[test]
    fn cumulative_trapezoid_anchors_at_zero() {
        let vals: Vec<Complex64> = (0..8).map(|k| c(k as f64)).collect();
        let cum = cumulative_trapezoid(&vals, 1.0, 3);
        assert_eq!(cum[3], c(0.0));
        assert!((cum[4].re - 3.5).abs() < 1e-15);
        assert!((cum[2].re + 2.5).abs() < 1e-15);
    }

    #[test]
    fn affine_fit_recovers_exact_line() {
        let xs = [0.2, 0.1, 0.05, 0.025];
        let ys: Vec<Complex64> = xs.iter().map(|&h| Complex64::new(3.0, -2.0 * h)).collect();
        let (y0, slope, var) = affine_fit(&xs, &ys);
        assert!((y0 - Complex64::new(3.0, 0.0)).norm() < 1e-12);
        assert!((slope - Complex64::new(0.0, -2.0)).norm() < 1e-10);
        assert!(var < 1e-24);
    }

    #[test]
    fn midpoint_interpolation_is_cubic_exact() {
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t + 0.25 * t * t * t;
        let vals: Vec<Complex64> = (0..12).map(|k| c(f(k as f64))).collect();
        for j in 0..11 {
            let want = f(j as f64 + 0.5);
            let got = interp_midpoint(&vals, j).re;
            assert!((got - want).abs() < 1e-10, "j={j}: {got} vs {want}");
        }
    }

    #[test]
    fn cubic_extrapolation_is_exact_on_cubics() {
        let f = |t: f64| -0.3 + 1.2 * t - 0.1 * t * t + 0.02 * t * t * t;
        let vals: Vec<Complex64> = (0..6).map(|k| c(f(k as f64))).collect();
        let right = extrapolate_cubic_right(&vals, 2);
        assert!((right.re - f(7.0)).abs() < 1e-10);
        let left = extrapolate_cubic_left(&vals, 3);
        assert!((left.re - f(-3.0)).abs() < 1e-10);
    }

    #[test]
    fn log_log_slope_recovers_power_law() {
        let pairs: Vec<(f64, f64)> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&h: &f64| (h, 3.0 * h.powf(1.7)))
            .collect();
        let (slope, used) = log_log_slope(&pairs);
        assert_eq!(used, 4);
        assert!((slope - 1.7).abs() < 1e-10);
    }
}
