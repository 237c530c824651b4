//! Small symbolic expression tree with ASCII and LaTeX printers and a
//! numeric evaluator.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Expr {
    Num(f64),
    /// Opaque symbol, printed verbatim (may be a call such as `dec(z)`).
    Sym(String),
    Pi,
    /// Placeholder for an additive constant that was dropped.
    Const,
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
    Abs(Box<Expr>),
    /// Named special function, e.g. `lgamma`, `digamma`.
    Func(String, Vec<Expr>),
    /// Iverson bracket `[var = value]`.
    Indicator { var: String, value: String },
    /// `base_index`.
    Indexed { base: Box<Expr>, index: String },
    /// `sum_index body`, with `count` terms when known.
    Sum {
        index: String,
        count: Option<usize>,
        body: Box<Expr>,
    },
}

/// Numeric bindings for [`Expr::eval`].
#[derive(Debug, Clone, Default)]
pub struct Env {
    pub scalars: HashMap<String, f64>,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: f64) -> Self {
        self.scalars.insert(name.to_string(), value);
        self
    }

    pub fn set_vector(mut self, name: &str, value: Vec<f64>) -> Self {
        self.vectors.insert(name.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound symbol {0}")]
    Unbound(String),
    #[error("expression contains an elided constant")]
    Elided,
    #[error("unknown function {0}")]
    UnknownFunction(String),
    #[error("sum over {0} has no known range")]
    OpenSum(String),
}

pub fn num(v: f64) -> Expr {
    Expr::Num(v)
}

pub fn sym(s: impl Into<String>) -> Expr {
    Expr::Sym(s.into())
}

pub fn add(terms: Vec<Expr>) -> Expr {
    Expr::Add(terms)
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Sub(Box::new(a), Box::new(b))
}

pub fn mul(terms: Vec<Expr>) -> Expr {
    Expr::Mul(terms)
}

pub fn div(a: Expr, b: Expr) -> Expr {
    Expr::Div(Box::new(a), Box::new(b))
}

pub fn pow(a: Expr, k: u32) -> Expr {
    Expr::Pow(Box::new(a), k)
}

pub fn neg(a: Expr) -> Expr {
    Expr::Neg(Box::new(a))
}

pub fn log(a: Expr) -> Expr {
    Expr::Log(Box::new(a))
}

pub fn sqrt(a: Expr) -> Expr {
    Expr::Sqrt(Box::new(a))
}

pub fn abs(a: Expr) -> Expr {
    Expr::Abs(Box::new(a))
}

pub fn func(name: &str, args: Vec<Expr>) -> Expr {
    Expr::Func(name.to_string(), args)
}

impl Expr {
    /// True if `name` occurs anywhere in the tree.
    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Sym(s) => s == name,
            Expr::Indicator { var, .. } => var == name,
            Expr::Num(_) | Expr::Pi | Expr::Const => false,
            Expr::Add(ts) | Expr::Mul(ts) | Expr::Func(_, ts) => ts.iter().any(|t| t.mentions(name)),
            Expr::Sub(a, b) | Expr::Div(a, b) => a.mentions(name) || b.mentions(name),
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Log(a) | Expr::Sqrt(a) | Expr::Abs(a) => {
                a.mentions(name)
            }
            Expr::Indexed { base, .. } => base.mentions(name),
            Expr::Sum { body, .. } => body.mentions(name),
        }
    }

    /// Constant folding: numeric powers and products, `e/1`, `1*e`.
    pub fn fold(self) -> Expr {
        match self {
            Expr::Pow(a, k) => match a.fold() {
                Expr::Num(v) => Expr::Num(v.powi(k as i32)),
                a => pow(a, k),
            },
            Expr::Mul(ts) => {
                let mut coef = 1.0;
                let mut rest = Vec::new();
                for t in ts.into_iter().map(Expr::fold) {
                    match t {
                        Expr::Num(v) => coef *= v,
                        other => rest.push(other),
                    }
                }
                if coef != 1.0 || rest.is_empty() {
                    rest.insert(0, Expr::Num(coef));
                }
                if rest.len() == 1 {
                    rest.pop().unwrap()
                } else {
                    Expr::Mul(rest)
                }
            }
            Expr::Div(a, b) => match (a.fold(), b.fold()) {
                (a, Expr::Num(1.0)) => a,
                (Expr::Num(x), Expr::Num(y)) => Expr::Num(x / y),
                (a, b) => div(a, b),
            },
            Expr::Add(ts) => Expr::Add(ts.into_iter().map(Expr::fold).collect()),
            Expr::Sub(a, b) => sub(a.fold(), b.fold()),
            Expr::Neg(a) => neg(a.fold()),
            Expr::Log(a) => log(a.fold()),
            Expr::Sqrt(a) => sqrt(a.fold()),
            Expr::Abs(a) => abs(a.fold()),
            Expr::Func(n, ts) => Expr::Func(n, ts.into_iter().map(Expr::fold).collect()),
            other => other,
        }
    }

    /// Replaces every additive term of a top-level sum that does not depend
    /// on any of `keep` with a single `const`.
    pub fn elide_constants(self, keep: &[&str]) -> Expr {
        let depends = |e: &Expr| keep.iter().any(|k| e.mentions(k));
        match self {
            Expr::Add(ts) => {
                let mut kept: Vec<Expr> = Vec::new();
                let mut dropped = false;
                for t in ts {
                    if depends(&t) {
                        kept.push(t);
                    } else {
                        dropped = true;
                    }
                }
                if dropped {
                    kept.push(Expr::Const);
                }
                if kept.len() == 1 {
                    kept.pop().unwrap()
                } else {
                    Expr::Add(kept)
                }
            }
            other if !depends(&other) => Expr::Const,
            other => other,
        }
    }

    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        self.eval_with(env, &HashMap::new())
    }

    fn eval_with(&self, env: &Env, indices: &HashMap<String, usize>) -> Result<f64, EvalError> {
        let ev = |e: &Expr| e.eval_with(env, indices);
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Sym(s) => *env
                .scalars
                .get(s)
                .ok_or_else(|| EvalError::Unbound(s.clone()))?,
            Expr::Pi => std::f64::consts::PI,
            Expr::Const => return Err(EvalError::Elided),
            Expr::Add(ts) => ts.iter().map(ev).sum::<Result<f64, _>>()?,
            Expr::Sub(a, b) => ev(a)? - ev(b)?,
            Expr::Mul(ts) => ts.iter().map(ev).product::<Result<f64, _>>()?,
            Expr::Div(a, b) => ev(a)? / ev(b)?,
            Expr::Pow(a, k) => ev(a)?.powi(*k as i32),
            Expr::Neg(a) => -ev(a)?,
            Expr::Log(a) => ev(a)?.ln(),
            Expr::Sqrt(a) => ev(a)?.sqrt(),
            Expr::Abs(a) => ev(a)?.abs(),
            Expr::Func(name, args) => {
                let vals: Vec<f64> = args.iter().map(ev).collect::<Result<_, _>>()?;
                match (name.as_str(), vals.as_slice()) {
                    ("lgamma", [x]) => statrs::function::gamma::ln_gamma(*x),
                    ("digamma", [x]) => statrs::function::gamma::digamma(*x),
                    ("lbeta", [a, b]) => statrs::function::beta::ln_beta(*a, *b),
                    _ => return Err(EvalError::UnknownFunction(name.clone())),
                }
            }
            Expr::Indicator { var, value } => {
                let x = *env
                    .scalars
                    .get(var)
                    .ok_or_else(|| EvalError::Unbound(var.clone()))?;
                let v = match indices.get(value) {
                    Some(&i) => i as f64,
                    None => value
                        .parse::<f64>()
                        .map_err(|_| EvalError::Unbound(value.clone()))?,
                };
                if x == v {
                    1.0
                } else {
                    0.0
                }
            }
            Expr::Indexed { base, index } => {
                let name = match base.as_ref() {
                    Expr::Sym(s) => s,
                    other => return Err(EvalError::Unbound(other.to_text())),
                };
                let vector = env
                    .vectors
                    .get(name)
                    .ok_or_else(|| EvalError::Unbound(name.clone()))?;
                let i = *indices
                    .get(index)
                    .ok_or_else(|| EvalError::Unbound(index.clone()))?;
                *vector.get(i).ok_or_else(|| EvalError::Unbound(format!("{name}_{i}")))?
            }
            Expr::Sum { index, count, body } => {
                let n = count.ok_or_else(|| EvalError::OpenSum(index.clone()))?;
                let mut total = 0.0;
                let mut scoped = indices.clone();
                for i in 0..n {
                    scoped.insert(index.clone(), i);
                    total += body.eval_with(env, &scoped)?;
                }
                total
            }
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, Syntax::Text, 0);
        out
    }

    pub fn to_latex(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, Syntax::Latex, 0);
        out
    }

    pub fn render(&self, syntax: Syntax) -> String {
        match syntax {
            Syntax::Text => self.to_text(),
            Syntax::Latex => self.to_latex(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(_) | Expr::Sub(..) => 1,
            Expr::Mul(_) | Expr::Div(..) | Expr::Sum { .. } => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 => 3,
            _ => 5,
        }
    }

    fn write(&self, out: &mut String, syn: Syntax, parent: u8) {
        let wrap = self.precedence() < parent;
        let latex = syn == Syntax::Latex;
        if wrap {
            out.push_str(if latex { "\\left(" } else { "(" });
        }
        match self {
            Expr::Num(v) => out.push_str(&format_number(*v)),
            Expr::Sym(s) => {
                if latex {
                    out.push_str(&latex_ident(s));
                } else {
                    out.push_str(s);
                }
            }
            Expr::Pi => out.push_str(if latex { "\\pi" } else { "pi" }),
            Expr::Const => out.push_str(if latex { "\\mathrm{const}" } else { "const" }),
            Expr::Add(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    match (i, t) {
                        (0, _) => t.write(out, syn, 1),
                        (_, Expr::Neg(inner)) => {
                            out.push_str(" - ");
                            inner.write(out, syn, 2);
                        }
                        _ => {
                            out.push_str(" + ");
                            t.write(out, syn, 1);
                        }
                    }
                }
            }
            Expr::Sub(a, b) => {
                a.write(out, syn, 1);
                out.push_str(" - ");
                b.write(out, syn, 2);
            }
            Expr::Mul(ts) => {
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        out.push_str(if latex { " " } else { "*" });
                    }
                    t.write(out, syn, 2);
                }
            }
            Expr::Div(a, b) => {
                if latex {
                    out.push_str("\\frac{");
                    a.write(out, syn, 0);
                    out.push_str("}{");
                    b.write(out, syn, 0);
                    out.push('}');
                } else {
                    a.write(out, syn, 2);
                    out.push('/');
                    b.write(out, syn, 3);
                }
            }
            Expr::Pow(a, k) => {
                a.write(out, syn, 5);
                if latex {
                    let _ = write!(out, "^{{{k}}}");
                } else {
                    let _ = write!(out, "^{k}");
                }
            }
            Expr::Neg(a) => {
                out.push('-');
                let bind = if matches!(**a, Expr::Sum { .. }) { 2 } else { 3 };
                a.write(out, syn, bind);
            }
            Expr::Log(a) => {
                if latex {
                    out.push_str("\\log\\left(");
                    a.write(out, syn, 0);
                    out.push_str("\\right)");
                } else {
                    out.push_str("log(");
                    a.write(out, syn, 0);
                    out.push(')');
                }
            }
            Expr::Sqrt(a) => {
                out.push_str(if latex { "\\sqrt{" } else { "sqrt(" });
                a.write(out, syn, 0);
                out.push(if latex { '}' } else { ')' });
            }
            Expr::Abs(a) => {
                out.push_str(if latex { "\\left|" } else { "|" });
                a.write(out, syn, 0);
                out.push_str(if latex { "\\right|" } else { "|" });
            }
            Expr::Func(name, args) => {
                if latex {
                    out.push_str(match name.as_str() {
                        "lgamma" => "\\ln\\Gamma",
                        "digamma" => "\\psi",
                        "lbeta" => "\\ln\\mathrm{B}",
                        _ => name,
                    });
                    out.push_str("\\left(");
                } else {
                    out.push_str(name);
                    out.push('(');
                }
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.write(out, syn, 0);
                }
                out.push_str(if latex { "\\right)" } else { ")" });
            }
            Expr::Indicator { var, value } => {
                if latex {
                    let _ = write!(out, "[{} = {}]", latex_ident(var), latex_ident(value));
                } else {
                    let _ = write!(out, "[{var} = {value}]");
                }
            }
            Expr::Indexed { base, index } => {
                base.write(out, syn, 5);
                if latex {
                    let _ = write!(out, "_{{{index}}}");
                } else {
                    let _ = write!(out, "_{index}");
                }
            }
            Expr::Sum { index, body, .. } => {
                if latex {
                    let _ = write!(out, "\\sum_{{{index}}} ");
                } else {
                    let _ = write!(out, "sum_{index} ");
                }
                body.write(out, syn, 2);
            }
        }
        if wrap {
            out.push_str(if latex { "\\right)" } else { ")" });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Syntax {
    Text,
    Latex,
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// LaTeX form of an identifier: trailing digits become a subscript and
/// underscores are escaped.
pub fn latex_ident(name: &str) -> String {
    if let Some(open) = name.find('(') {
        // Opaque call such as `dec(z0)`.
        let (head, rest) = name.split_at(open);
        let inner = &rest[1..rest.len().saturating_sub(1)];
        let args: Vec<String> = inner
            .split(',')
            .map(|a| latex_ident(a.trim()))
            .collect();
        return format!("\\mathrm{{{}}}({})", head.replace('_', "\\_"), args.join(", "));
    }
    let split = name
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i);
    match split {
        Some(i) if i > 0 => format!("{}_{{{}}}", name[..i].replace('_', "\\_"), &name[i..]),
        _ => name.replace('_', "\\_"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_normal_nll_shape() {
        let e = add(vec![
            div(
                pow(sub(sym("x"), sym("mu")), 2),
                mul(vec![num(2.0), pow(sym("sigma"), 2)]),
            ),
            log(sqrt(mul(vec![num(2.0), Expr::Pi, pow(sym("sigma"), 2)]))),
        ]);
        assert_eq!(
            e.to_text(),
            "(x - mu)^2/(2*sigma^2) + log(sqrt(2*pi*sigma^2))"
        );
        assert_eq!(
            e.to_latex(),
            "\\frac{\\left(x - mu\\right)^{2}}{2 sigma^{2}} + \\log\\left(\\sqrt{2 \\pi sigma^{2}}\\right)"
        );
    }

    #[test]
    fn fold_and_elide() {
        let e = add(vec![
            div(
                pow(sub(sym("x"), sym("mu")), 2),
                mul(vec![num(2.0), pow(num(1.0), 2)]),
            ),
            log(sqrt(mul(vec![num(2.0), Expr::Pi, pow(num(1.0), 2)]))),
        ]);
        let e = e.fold().elide_constants(&["x", "mu"]);
        assert_eq!(e.to_text(), "(x - mu)^2/2 + const");
        let env = Env::new().set("x", 1.0).set("mu", 0.0);
        assert_eq!(e.eval(&env), Err(EvalError::Elided));
    }

    #[test]
    fn indexed_sum_evaluates() {
        let e = neg(Expr::Sum {
            index: "j".into(),
            count: Some(3),
            body: Box::new(mul(vec![
                Expr::Indicator {
                    var: "x".into(),
                    value: "j".into(),
                },
                log(Expr::Indexed {
                    base: Box::new(sym("p")),
                    index: "j".into(),
                }),
            ])),
        });
        let env = Env::new().set("x", 2.0).set_vector("p", vec![0.2, 0.3, 0.5]);
        assert!((e.eval(&env).unwrap() + 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(e.to_text(), "-sum_j [x = j]*log(p_j)");
    }

    #[test]
    fn latex_identifiers() {
        assert_eq!(latex_ident("z0"), "z_{0}");
        assert_eq!(latex_ident("enc_mu"), "enc\\_mu");
        assert_eq!(latex_ident("x"), "x");
        assert_eq!(latex_ident("dec(z1)"), "\\mathrm{dec}(z_{1})");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [1.0, 0.1, 1e-300, 123456.789, -2.5] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_number(1.0), "1");
    }
}
