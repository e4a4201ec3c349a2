//! Lagrangian specifications.
//!
//! A [`LagrangianSpec`] bundles the function `L` with the partial
//! derivatives the variational machinery consumes. The usual route is an
//! expression parsed against a variable alphabet, whose partials are
//! derived symbolically once at construction; a native callback can be
//! registered instead, in which case partials fall back to central finite
//! differences along the real axis.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::expr::{differentiate, evaluate, parse, print, Alphabet, Expr};

/// Native Lagrangian callback: receives one value per alphabet variable,
/// in alphabet order.
pub type NativeFn = Arc<dyn Fn(&[Complex64]) -> Result<Complex64> + Send + Sync>;

/// Step scale for the finite-difference fallback used by native partials;
/// near the optimum `ε^(1/3)` for a central quotient.
const NATIVE_FD_STEP: f64 = 6.0e-6;

#[derive(Clone)]
enum Body {
    Symbolic {
        source: String,
        ast: Expr,
        /// `partials[i]` is the symbolic derivative with respect to
        /// alphabet variable `i`, folded at construction.
        partials: Vec<Expr>,
    },
    Native {
        f: NativeFn,
        z_free: bool,
    },
}

/// A Lagrangian over a fixed variable alphabet together with its partials.
#[derive(Clone)]
pub struct LagrangianSpec {
    alphabet: Alphabet,
    body: Body,
}

impl LagrangianSpec {
    /// Parse an expression against `alphabet` and derive every partial
    /// symbolically.
    pub fn parse(source: &str, alphabet: Alphabet) -> Result<Self> {
        let ast = parse(source, &alphabet)?;
        let partials = (0..alphabet.len())
            .map(|id| differentiate(&ast, id))
            .collect();
        Ok(LagrangianSpec {
            alphabet,
            body: Body::Symbolic {
                source: source.to_string(),
                ast,
                partials,
            },
        })
    }

    /// Register a native callback. `z_free` must state whether the
    /// callback ignores the `z` slot, since that cannot be inspected.
    pub fn native(f: NativeFn, alphabet: Alphabet, z_free: bool) -> Self {
        LagrangianSpec {
            alphabet,
            body: Body::Native { f, z_free },
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// The original expression text, if this Lagrangian was parsed.
    pub fn source(&self) -> Option<&str> {
        match &self.body {
            Body::Symbolic { source, .. } => Some(source),
            Body::Native { .. } => None,
        }
    }

    /// Printed normal form of the stored AST, if symbolic.
    pub fn printed(&self) -> Option<String> {
        match &self.body {
            Body::Symbolic { ast, .. } => Some(print(ast, &self.alphabet)),
            Body::Native { .. } => None,
        }
    }

    /// Evaluate `L` at the given bindings (one slot per alphabet variable).
    pub fn eval(&self, bindings: &[Option<Complex64>]) -> Result<Complex64> {
        match &self.body {
            Body::Symbolic { ast, .. } => evaluate(ast, bindings, &self.alphabet),
            Body::Native { f, .. } => f(&self.collect_bindings(bindings)?),
        }
    }

    /// Evaluate `∂L/∂(variable var)` at the given bindings.
    pub fn partial(&self, var: usize, bindings: &[Option<Complex64>]) -> Result<Complex64> {
        match &self.body {
            Body::Symbolic { partials, .. } => evaluate(&partials[var], bindings, &self.alphabet),
            Body::Native { f, .. } => {
                let mut vals = self.collect_bindings(bindings)?;
                let center = vals[var];
                let delta = NATIVE_FD_STEP * (1.0 + center.norm());
                vals[var] = center + delta;
                let hi = f(&vals)?;
                vals[var] = center - delta;
                let lo = f(&vals)?;
                Ok((hi - lo) / (2.0 * delta))
            }
        }
    }

    /// The folded symbolic partial, when available.
    pub fn partial_expr(&self, var: usize) -> Option<&Expr> {
        match &self.body {
            Body::Symbolic { partials, .. } => Some(&partials[var]),
            Body::Native { .. } => None,
        }
    }

    /// Whether `∂L/∂z` is identically zero (symbolically for parsed
    /// Lagrangians, by declaration for native ones).
    pub fn is_z_free(&self) -> bool {
        match &self.body {
            Body::Symbolic { partials, .. } => match self.alphabet.index_of("z") {
                Some(id) => partials[id].is_zero(),
                None => true,
            },
            Body::Native { z_free, .. } => *z_free,
        }
    }

    fn collect_bindings(&self, bindings: &[Option<Complex64>]) -> Result<Vec<Complex64>> {
        bindings
            .iter()
            .enumerate()
            .map(|(id, slot)| {
                slot.ok_or_else(|| Error::UnboundVariable(self.alphabet.name(id).to_string()))
            })
            .collect()
    }
}

impl fmt::Debug for LagrangianSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            Body::Symbolic { source, .. } => write!(f, "LagrangianSpec({source:?})"),
            Body::Native { z_free, .. } => {
                write!(f, "LagrangianSpec(<native>, z_free = {z_free})")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(vals: &[f64]) -> Vec<Option<Complex64>> {
        vals.iter().map(|&v| Some(Complex64::new(v, 0.0))).collect()
    }

    #[test]
    fn symbolic_partials_are_derived_eagerly() {
        let alphabet = Alphabet::scalar_vector(1);
        let lag = LagrangianSpec::parse("v1^2 + z", alphabet.clone()).unwrap();
        let at = bind(&[0.0, 1.0, 3.0, 7.0]); // t, x1, v1, z
        let v1 = alphabet.index_of("v1").unwrap();
        let z = alphabet.index_of("z").unwrap();
        assert_eq!(lag.eval(&at).unwrap(), Complex64::new(16.0, 0.0));
        assert_eq!(lag.partial(v1, &at).unwrap(), Complex64::new(6.0, 0.0));
        assert_eq!(lag.partial(z, &at).unwrap(), Complex64::new(1.0, 0.0));
        assert!(!lag.is_z_free());
    }

    #[test]
    fn z_freedom_is_detected_symbolically() {
        let alphabet = Alphabet::scalar_vector(1);
        assert!(LagrangianSpec::parse("v1^2", alphabet.clone())
            .unwrap()
            .is_z_free());
        assert!(!LagrangianSpec::parse("z*0 + z", alphabet.clone())
            .unwrap()
            .is_z_free());
        // z*0 folds to 0, so the dependence disappears symbolically.
        assert!(LagrangianSpec::parse("v1^2 + z*0", alphabet)
            .unwrap()
            .is_z_free());
    }

    #[test]
    fn native_partials_match_symbolic_ones() {
        let alphabet = Alphabet::scalar_vector(1);
        let symbolic = LagrangianSpec::parse("v1^2 + sin(x1)*z", alphabet.clone()).unwrap();
        let native = LagrangianSpec::native(
            Arc::new(|vals: &[Complex64]| Ok(vals[2] * vals[2] + vals[1].sin() * vals[3])),
            alphabet.clone(),
            false,
        );
        let at = bind(&[0.3, 0.8, 1.7, 2.2]);
        assert!((symbolic.eval(&at).unwrap() - native.eval(&at).unwrap()).norm() < 1e-14);
        for var in 0..alphabet.len() {
            let s = symbolic.partial(var, &at).unwrap();
            let n = native.partial(var, &at).unwrap();
            assert!(
                (s - n).norm() <= 1e-8 * (1.0 + s.norm()),
                "partial {} mismatch: {s} vs {n}",
                alphabet.name(var)
            );
        }
    }

    #[test]
    fn native_eval_requires_every_binding() {
        let alphabet = Alphabet::scalar_vector(1);
        let native =
            LagrangianSpec::native(Arc::new(|vals: &[Complex64]| Ok(vals[0])), alphabet, true);
        let mut at = bind(&[0.0, 0.0, 0.0, 0.0]);
        at[2] = None;
        match native.eval(&at) {
            Err(Error::UnboundVariable(name)) => assert_eq!(name, "v1"),
            other => panic!("expected unbound-variable error, got {other:?}"),
        }
    }
}
