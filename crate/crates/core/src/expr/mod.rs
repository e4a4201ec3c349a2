//! Expression language for Lagrangians: a small AST with a parser,
//! printer, complex evaluator and symbolic differentiator.
//!
//! Problems declare which variables exist (the alphabet) and expressions are
//! parsed against it, so `v1^2 + z` is valid in a first-order problem while
//! `ux3` is rejected with a position-bearing error. No simplification is
//! attempted beyond constant folding.

mod diff;
mod eval;
mod parse;

pub use diff::differentiate;
pub use eval::evaluate;
pub use parse::parse;

/// The functions the language knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// Expression tree. Variables are indices into an [`Alphabet`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }
}

/// The set of variable names an expression may use. Names are fixed per
/// problem variant; `higher_order` also accepts `v1` as an alias for `v1_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    names: Vec<String>,
    aliases: Vec<(String, usize)>,
}

impl Alphabet {
    pub fn new(names: Vec<String>) -> Self {
        Alphabet {
            names,
            aliases: Vec::new(),
        }
    }

    /// First-order scalar/vector problems: `t, x1..xn, v1..vn, z`.
    pub fn scalar_vector(n: usize) -> Self {
        let mut names = vec!["t".to_string()];
        for i in 1..=n {
            names.push(format!("x{i}"));
        }
        for i in 1..=n {
            names.push(format!("v{i}"));
        }
        names.push("z".to_string());
        Alphabet::new(names)
    }

    /// Higher-order problems: `t, x1, v1_1..v1_n, z`, with `v1 = v1_1`.
    pub fn higher_order(order: usize) -> Self {
        let mut names = vec!["t".to_string(), "x1".to_string()];
        for k in 1..=order {
            names.push(format!("v1_{k}"));
        }
        names.push("z".to_string());
        let mut a = Alphabet::new(names);
        let target = a.index_of("v1_1").expect("order >= 1");
        a.aliases.push(("v1".to_string(), target));
        a
    }

    /// Field problems: `t, s1..sn, u, ut, ux1..uxn, z`.
    pub fn field(nspace: usize) -> Self {
        let mut names = vec!["t".to_string()];
        for i in 1..=nspace {
            names.push(format!("s{i}"));
        }
        names.push("u".to_string());
        names.push("ut".to_string());
        for i in 1..=nspace {
            names.push(format!("ux{i}"));
        }
        names.push("z".to_string());
        Alphabet::new(names)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name).or_else(|| {
            self.aliases
                .iter()
                .find(|(a, _)| a == name)
                .map(|&(_, i)| i)
        })
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

// ---- folding constructors ----
//
// The parser and the differentiator both build trees through these, so
// everything downstream sees one normal form (e.g. `Neg(Const c)` is always
// stored as `Const(-c)`).

pub fn cnum(v: f64) -> Expr {
    Expr::Const(v)
}

pub fn var(id: usize) -> Expr {
    Expr::Var(id)
}

pub fn neg(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(0.0), None) => b,
        (None, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(0.0), None) => neg(b),
        (None, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(0.0), None) | (None, Some(0.0)) => Expr::Const(0.0),
        (Some(1.0), None) => b,
        (None, Some(1.0)) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
        (Some(0.0), None) => Expr::Const(0.0),
        (None, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match b.as_const() {
        Some(0.0) => Expr::Const(1.0),
        Some(1.0) => a,
        Some(k) if k.fract() == 0.0 && k.abs() <= 32.0 => {
            if let Some(base) = a.as_const() {
                if base != 0.0 || k > 0.0 {
                    return Expr::Const(base.powi(k as i32));
                }
            }
            Expr::Pow(Box::new(a), Box::new(b))
        }
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    if let Some(c) = a.as_const() {
        // fold only where the result is a plain real number
        let folded = match f {
            Func::Sin => Some(c.sin()),
            Func::Cos => Some(c.cos()),
            Func::Exp => Some(c.exp()),
            Func::Abs => Some(c.abs()),
            Func::Log if c > 0.0 => Some(c.ln()),
            Func::Sqrt if c >= 0.0 => Some(c.sqrt()),
            _ => None,
        };
        if let Some(v) = folded {
            return Expr::Const(v);
        }
    }
    Expr::Call(f, Box::new(a))
}

// ---- printer ----

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Const(c) if *c < 0.0 => 3, // prints with a leading minus
        Expr::Pow(..) => 4,
        _ => 5,
    }
}

fn print_into(e: &Expr, alphabet: &Alphabet, min_prec: u8, out: &mut String) {
    let needs_parens = precedence(e) < min_prec;
    if needs_parens {
        out.push('(');
    }
    match e {
        Expr::Const(c) => out.push_str(&format!("{c}")),
        Expr::Var(id) => out.push_str(alphabet.name(*id)),
        Expr::Neg(x) => {
            out.push('-');
            print_into(x, alphabet, 3, out);
        }
        Expr::Add(l, r) => {
            print_into(l, alphabet, 1, out);
            out.push_str(" + ");
            print_into(r, alphabet, 2, out);
        }
        Expr::Sub(l, r) => {
            print_into(l, alphabet, 1, out);
            out.push_str(" - ");
            print_into(r, alphabet, 2, out);
        }
        Expr::Mul(l, r) => {
            print_into(l, alphabet, 2, out);
            out.push('*');
            print_into(r, alphabet, 3, out);
        }
        Expr::Div(l, r) => {
            print_into(l, alphabet, 2, out);
            out.push('/');
            print_into(r, alphabet, 3, out);
        }
        Expr::Pow(l, r) => {
            print_into(l, alphabet, 5, out);
            out.push('^');
            print_into(r, alphabet, 3, out);
        }
        Expr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            print_into(a, alphabet, 0, out);
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

/// Render an expression so that `parse(print(e)) == e` structurally.
pub fn print(e: &Expr, alphabet: &Alphabet) -> String {
    let mut out = String::new();
    print_into(e, alphabet, 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabets_expose_expected_names() {
        let a = Alphabet::scalar_vector(2);
        assert_eq!(a.len(), 6);
        assert_eq!(a.index_of("t"), Some(0));
        assert_eq!(a.index_of("x2"), Some(2));
        assert_eq!(a.index_of("v1"), Some(3));
        assert_eq!(a.index_of("z"), Some(5));
        assert_eq!(a.index_of("u"), None);

        let h = Alphabet::higher_order(3);
        assert_eq!(h.index_of("v1"), h.index_of("v1_1"));
        assert!(h.index_of("v1_3").is_some());

        let f = Alphabet::field(2);
        for name in ["t", "s1", "s2", "u", "ut", "ux1", "ux2", "z"] {
            assert!(f.index_of(name).is_some(), "missing {name}");
        }
    }

    #[test]
    fn constructors_fold_constants() {
        assert_eq!(add(cnum(2.0), cnum(3.0)), cnum(5.0));
        assert_eq!(mul(cnum(0.0), var(1)), cnum(0.0));
        assert_eq!(mul(var(1), cnum(1.0)), var(1));
        assert_eq!(neg(neg(var(0))), var(0));
        assert_eq!(neg(cnum(2.5)), cnum(-2.5));
        assert_eq!(pow(var(0), cnum(1.0)), var(0));
        assert_eq!(pow(var(0), cnum(0.0)), cnum(1.0));
        assert_eq!(pow(cnum(2.0), cnum(10.0)), cnum(1024.0));
        assert_eq!(call(Func::Cos, cnum(0.0)), cnum(1.0));
    }

    #[test]
    fn printer_parenthesizes_by_precedence() {
        let a = Alphabet::scalar_vector(1);
        let t = a.index_of("t").unwrap();
        let x = a.index_of("x1").unwrap();
        let e = mul(add(var(t), var(x)), var(t));
        assert_eq!(print(&e, &a), "(t + x1)*t");
        let p = pow(var(t), add(var(x), cnum(1.0)));
        assert_eq!(print(&p, &a), "t^(x1 + 1)");
        let n = neg(mul(var(t), var(x)));
        assert_eq!(print(&n, &a), "-(t*x1)");
        let pp = pow(pow(var(t), cnum(2.0)), cnum(3.0));
        assert_eq!(print(&pp, &a), "(t^2)^3");
    }
}
