//! Complex-arithmetic evaluation. `log` and `sqrt` take principal branches;
//! integer exponents up to 32 are computed by repeated multiplication so
//! small powers stay exact.

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::{Alphabet, Expr, Func};

/// Evaluate with one binding slot per alphabet entry; `None` slots are
/// unbound and produce `UnboundVariable` when reached.
pub fn evaluate(e: &Expr, vals: &[Option<Complex64>], alphabet: &Alphabet) -> Result<Complex64> {
    match e {
        Expr::Const(c) => Ok(Complex64::new(*c, 0.0)),
        Expr::Var(id) => vals
            .get(*id)
            .copied()
            .flatten()
            .ok_or_else(|| Error::UnboundVariable(alphabet.name(*id).to_string())),
        Expr::Neg(x) => Ok(-evaluate(x, vals, alphabet)?),
        Expr::Add(l, r) => Ok(evaluate(l, vals, alphabet)? + evaluate(r, vals, alphabet)?),
        Expr::Sub(l, r) => Ok(evaluate(l, vals, alphabet)? - evaluate(r, vals, alphabet)?),
        Expr::Mul(l, r) => Ok(evaluate(l, vals, alphabet)? * evaluate(r, vals, alphabet)?),
        Expr::Div(l, r) => {
            let num = evaluate(l, vals, alphabet)?;
            let den = evaluate(r, vals, alphabet)?;
            if den == Complex64::new(0.0, 0.0) {
                return Err(Error::DomainError("division by zero".into()));
            }
            Ok(num / den)
        }
        Expr::Pow(l, r) => {
            let base = evaluate(l, vals, alphabet)?;
            if let Expr::Const(c) = **r {
                if c.fract() == 0.0 && c.abs() <= 32.0 {
                    return powi(base, c as i32);
                }
            }
            let expo = evaluate(r, vals, alphabet)?;
            if base == Complex64::new(0.0, 0.0) {
                return if expo == Complex64::new(0.0, 0.0) {
                    Ok(Complex64::new(1.0, 0.0))
                } else if expo.im == 0.0 && expo.re > 0.0 {
                    Ok(Complex64::new(0.0, 0.0))
                } else {
                    Err(Error::DomainError(
                        "zero base with non-positive power".into(),
                    ))
                };
            }
            Ok(base.powc(expo))
        }
        Expr::Call(f, a) => {
            let x = evaluate(a, vals, alphabet)?;
            match f {
                Func::Sin => Ok(x.sin()),
                Func::Cos => Ok(x.cos()),
                Func::Exp => Ok(x.exp()),
                Func::Log => {
                    if x == Complex64::new(0.0, 0.0) {
                        Err(Error::DomainError("log of zero".into()))
                    } else {
                        Ok(x.ln())
                    }
                }
                Func::Sqrt => Ok(x.sqrt()),
                Func::Abs => Ok(Complex64::new(x.norm(), 0.0)),
            }
        }
    }
}

fn powi(base: Complex64, n: i32) -> Result<Complex64> {
    if n < 0 {
        if base == Complex64::new(0.0, 0.0) {
            return Err(Error::DomainError("zero base with negative power".into()));
        }
        return Ok(Complex64::new(1.0, 0.0) / powi(base, -n)?);
    }
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        acc *= base;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    fn scalar() -> Alphabet {
        Alphabet::scalar_vector(1)
    }

    fn bind(a: &Alphabet, pairs: &[(&str, Complex64)]) -> Vec<Option<Complex64>> {
        let mut vals = vec![None; a.len()];
        for (name, v) in pairs {
            vals[a.index_of(name).unwrap()] = Some(*v);
        }
        vals
    }

    #[test]
    fn quadratic_plus_z() {
        let a = scalar();
        let e = parse("v1^2 + z", &a).unwrap();
        let vals = bind(
            &a,
            &[
                ("v1", Complex64::new(2.0, 0.0)),
                ("z", Complex64::new(1.0, 0.0)),
            ],
        );
        assert_eq!(evaluate(&e, &vals, &a).unwrap(), Complex64::new(5.0, 0.0));
    }

    #[test]
    fn euler_identity() {
        let a = scalar();
        let e = parse("exp(t)", &a).unwrap();
        let vals = bind(&a, &[("t", Complex64::new(0.0, std::f64::consts::PI))]);
        let v = evaluate(&e, &vals, &a).unwrap();
        assert!((v - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn complex_product() {
        let a = scalar();
        let e = parse("x1*v1", &a).unwrap();
        let vals = bind(
            &a,
            &[
                ("x1", Complex64::new(1.0, 1.0)),
                ("v1", Complex64::new(1.0, -1.0)),
            ],
        );
        assert_eq!(evaluate(&e, &vals, &a).unwrap(), Complex64::new(2.0, 0.0));
    }

    #[test]
    fn unbound_variables_are_reported_by_name() {
        let a = scalar();
        let e = parse("v1 + z", &a).unwrap();
        let vals = bind(&a, &[("v1", Complex64::new(1.0, 0.0))]);
        match evaluate(&e, &vals, &a) {
            Err(Error::UnboundVariable(name)) => assert_eq!(name, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn domain_errors() {
        let a = scalar();
        let zero = bind(&a, &[("t", Complex64::new(0.0, 0.0))]);
        for src in ["1/t", "log(t)", "t^-2"] {
            let e = parse(src, &a).unwrap();
            assert!(
                matches!(evaluate(&e, &zero, &a), Err(Error::DomainError(_))),
                "{src} should fail at t=0"
            );
        }
        // principal branches are fine elsewhere
        let neg = bind(&a, &[("t", Complex64::new(-4.0, 0.0))]);
        let sqrt = parse("sqrt(t)", &a).unwrap();
        let v = evaluate(&sqrt, &neg, &a).unwrap();
        assert!((v - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn integer_powers_are_exact() {
        let a = scalar();
        let e = parse("t^3", &a).unwrap();
        let vals = bind(&a, &[("t", Complex64::new(0.1, 0.0))]);
        let v = evaluate(&e, &vals, &a).unwrap();
        assert_eq!(v.re, 0.1 * 0.1 * 0.1);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn abs_of_complex_is_modulus() {
        let a = scalar();
        let e = parse("abs(t)", &a).unwrap();
        let vals = bind(&a, &[("t", Complex64::new(3.0, -4.0))]);
        assert_eq!(evaluate(&e, &vals, &a).unwrap(), Complex64::new(5.0, 0.0));
    }
}
