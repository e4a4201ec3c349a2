//! Symbolic partial derivatives with constant folding.
//!
//! `abs` differentiates to `u/abs(u)` — the sign away from zero — and the
//! division makes the non-differentiable point an evaluation-time domain
//! error rather than a silently wrong gradient.

use super::{add, call, cnum, div, mul, neg, pow, sub, Expr, Func};

/// Partial derivative with respect to the alphabet entry `var_id`.
pub fn differentiate(e: &Expr, var_id: usize) -> Expr {
    match e {
        Expr::Const(_) => cnum(0.0),
        Expr::Var(id) => cnum(if *id == var_id { 1.0 } else { 0.0 }),
        Expr::Neg(x) => neg(differentiate(x, var_id)),
        Expr::Add(l, r) => add(differentiate(l, var_id), differentiate(r, var_id)),
        Expr::Sub(l, r) => sub(differentiate(l, var_id), differentiate(r, var_id)),
        Expr::Mul(l, r) => add(
            mul(differentiate(l, var_id), (**r).clone()),
            mul((**l).clone(), differentiate(r, var_id)),
        ),
        Expr::Div(l, r) => div(
            sub(
                mul(differentiate(l, var_id), (**r).clone()),
                mul((**l).clone(), differentiate(r, var_id)),
            ),
            pow((**r).clone(), cnum(2.0)),
        ),
        Expr::Pow(l, r) => {
            let du = differentiate(l, var_id);
            if let Expr::Const(c) = **r {
                // power rule for constant exponents
                return mul(mul(cnum(c), pow((**l).clone(), cnum(c - 1.0))), du);
            }
            let dv = differentiate(r, var_id);
            // u^v · (v' log u + v u'/u)
            mul(
                pow((**l).clone(), (**r).clone()),
                add(
                    mul(dv, call(Func::Log, (**l).clone())),
                    div(mul((**r).clone(), du), (**l).clone()),
                ),
            )
        }
        Expr::Call(f, a) => {
            let du = differentiate(a, var_id);
            let u = (**a).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, u),
                Func::Cos => neg(call(Func::Sin, u)),
                Func::Exp => call(Func::Exp, u),
                Func::Log => return div(du, u),
                Func::Sqrt => return div(du, mul(cnum(2.0), call(Func::Sqrt, u))),
                Func::Abs => div(u.clone(), call(Func::Abs, u)),
            };
            mul(outer, du)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{evaluate, parse, var, Alphabet};
    use super::*;
    use num_complex::Complex64;

    fn scalar() -> Alphabet {
        Alphabet::scalar_vector(1)
    }

    #[test]
    fn power_rule() {
        let a = scalar();
        let e = parse("v1^2 + z", &a).unwrap();
        let v1 = a.index_of("v1").unwrap();
        let z = a.index_of("z").unwrap();
        assert_eq!(differentiate(&e, v1), mul(cnum(2.0), var(v1)));
        assert_eq!(differentiate(&e, z), cnum(1.0));
    }

    #[test]
    fn product_and_chain_rules_agree_with_finite_differences() {
        let a = scalar();
        let sources = [
            "sin(t)*x1^3",
            "exp(t*v1) - cos(x1)",
            "sqrt(x1^2 + 1)/t",
            "t^v1",
            "log(x1 + 2)*v1^2",
            "abs(x1)*t",
        ];
        let ids: Vec<usize> = ["t", "x1", "v1"]
            .iter()
            .map(|n| a.index_of(n).unwrap())
            .collect();
        let base = [0.7, 1.3, 0.9];
        for src in sources {
            let e = parse(src, &a).unwrap();
            for (slot, &id) in ids.iter().enumerate() {
                let d = differentiate(&e, id);
                let mut vals = vec![None; a.len()];
                for (s, &v) in ids.iter().zip(&base) {
                    vals[*s] = Some(Complex64::new(v, 0.0));
                }
                let sym = evaluate(&d, &vals, &a).unwrap();
                let fd = {
                    let h = 1e-6;
                    let mut hi = vals.clone();
                    hi[id] = Some(Complex64::new(base[slot] + h, 0.0));
                    let mut lo = vals.clone();
                    lo[id] = Some(Complex64::new(base[slot] - h, 0.0));
                    (evaluate(&e, &hi, &a).unwrap() - evaluate(&e, &lo, &a).unwrap()) / (2.0 * h)
                };
                let scale = fd.norm().max(1.0);
                assert!(
                    (sym - fd).norm() < 1e-7 * scale,
                    "{src} d/d{}: {sym} vs {fd}",
                    a.name(id)
                );
            }
        }
    }

    #[test]
    fn abs_derivative_is_the_sign_away_from_zero() {
        let a = scalar();
        let e = parse("abs(x1)", &a).unwrap();
        let x1 = a.index_of("x1").unwrap();
        let d = differentiate(&e, x1);
        let mut vals = vec![None; a.len()];
        vals[x1] = Some(Complex64::new(-3.0, 0.0));
        assert_eq!(evaluate(&d, &vals, &a).unwrap(), Complex64::new(-1.0, 0.0));
        // at zero the sign is undefined and evaluation must say so
        vals[x1] = Some(Complex64::new(0.0, 0.0));
        assert!(evaluate(&d, &vals, &a).is_err());
    }

    #[test]
    fn z_free_detection_via_folding() {
        let a = scalar();
        let z = a.index_of("z").unwrap();
        let free = parse("v1^2 + sin(t)*x1", &a).unwrap();
        assert!(differentiate(&free, z).is_zero());
        let bound = parse("v1^2 + z", &a).unwrap();
        assert!(!differentiate(&bound, z).is_zero());
    }
}
