//! Textual model format: parser and canonical printer.
//!
//! ```text
//! model vae {
//!   param sigma : posreal ~ Const(1.0)
//!   latent z : real ~ Normal(0, 1)
//!   observed x : real ~ Normal(dec(z), sigma)
//!   guide q(z | x) ~ Normal(enc_mu(x), enc_sigma(x))
//! }
//! ```
//!
//! Besides variable and guide declarations a model body may contain
//! `generative_only` and `notation <generative> <guide>`, which changes the
//! function symbols used when printing factors. Parameters are numbers,
//! declared identifiers, opaque calls `f(a, b)`, literal vectors `[..]` or
//! conditional tables `table a b -> [[..], ..]` indexed row-major by the
//! listed parents.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Location, ParseError};
use crate::expr::format_number;
use crate::model::{
    DistributionSpec, Factor, GraphicalModel, Notation, NumTree, Param, Role, Support, Variable,
};
use crate::zoo::Family;

/// Model text together with where it came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSource {
    pub text: String,
    pub origin: String,
}

impl ModelSource {
    pub fn inline(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            origin: "<inline>".into(),
        }
    }

    pub fn from_file(path: &std::path::Path) -> std::io::Result<Self> {
        Ok(Self {
            text: std::fs::read_to_string(path)?,
            origin: path.display().to_string(),
        })
    }
}

pub fn parse_model(text: &str) -> Result<GraphicalModel, ParseError> {
    parse_source(&ModelSource::inline(text))
}

pub fn parse_source(src: &ModelSource) -> Result<GraphicalModel, ParseError> {
    let tokens = tokenize(&src.text, &src.origin)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        origin: &src.origin,
    };
    let raw = p.model()?;
    raw.resolve(&src.origin)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s}"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Eof => "end of input".into(),
        }
    }
}

const PUNCT: [&str; 11] = ["->", "{", "}", "(", ")", "[", "]", ":", "~", "|", ","];

fn tokenize(text: &str, origin: &str) -> Result<Vec<(Tok, Location)>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let loc = Location { line, column: col };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Ident(word), loc));
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || c == '.'
            || ((c == '-' || c == '+')
                && chars
                    .get(i + 1)
                    .is_some_and(|n| n.is_ascii_digit() || *n == '.'));
        if starts_number {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            let value: f64 = word.parse().map_err(|_| ParseError::Syntax {
                origin: origin.into(),
                location: loc,
                message: format!("malformed number {word}"),
            })?;
            out.push((Tok::Number(value), loc));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push((Tok::Punct(p), loc));
            }
            None => {
                return Err(ParseError::Syntax {
                    origin: origin.into(),
                    location: loc,
                    message: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    out.push((Tok::Eof, Location { line, column: col }));
    Ok(out)
}

/// Parameter before name resolution.
#[derive(Debug, Clone)]
enum RawParam {
    Number(f64),
    Ident(String, Location),
    Call(String, Vec<(String, Location)>),
    Table(Vec<(String, Location)>, NumTree),
    List(NumTree),
}

#[derive(Debug, Clone)]
struct RawDist {
    family: Family,
    params: Vec<RawParam>,
}

#[derive(Debug, Clone)]
enum RawDecl {
    Var {
        var: Variable,
        dist: RawDist,
    },
    Guide {
        symbol: (String, Location),
        target: Vec<(String, Location)>,
        parents: Vec<(String, Location)>,
        dist: RawDist,
    },
}

struct RawModel {
    name: String,
    notation: Notation,
    generative_only: bool,
    decls: Vec<(RawDecl, Location)>,
}

struct Parser<'a> {
    tokens: Vec<(Tok, Location)>,
    pos: usize,
    origin: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn loc(&self) -> Location {
        self.tokens[self.pos].1
    }

    fn next(&mut self) -> (Tok, Location) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            origin: self.origin.into(),
            location: self.loc(),
            message: message.into(),
        }
    }

    fn expect(&mut self, p: &'static str) -> Result<(), ParseError> {
        if self.peek() == &Tok::Punct(p) {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected '{p}', found {}", self.peek().describe())))
        }
    }

    fn eat(&mut self, p: &'static str) -> bool {
        if self.peek() == &Tok::Punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, Location), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let loc = self.loc();
                self.next();
                Ok((s, loc))
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.next();
                Ok(())
            }
            other => Err(self.error(format!("expected '{kw}', found {}", other.describe()))),
        }
    }

    fn integer(&mut self) -> Result<usize, ParseError> {
        match self.peek().clone() {
            Tok::Number(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => {
                self.next();
                Ok(v as usize)
            }
            other => Err(self.error(format!(
                "expected non-negative integer, found {}",
                other.describe()
            ))),
        }
    }

    fn model(&mut self) -> Result<RawModel, ParseError> {
        self.keyword("model")?;
        let (name, _) = self.ident()?;
        self.expect("{")?;
        let mut model = RawModel {
            name,
            notation: Notation::default(),
            generative_only: false,
            decls: Vec::new(),
        };
        loop {
            let loc = self.loc();
            match self.peek().clone() {
                Tok::Punct("}") => {
                    self.next();
                    break;
                }
                Tok::Ident(kw) => match kw.as_str() {
                    "observed" | "latent" | "param" => {
                        self.next();
                        let role = match kw.as_str() {
                            "observed" => Role::Observed,
                            "latent" => Role::Latent,
                            _ => Role::Parameter,
                        };
                        let (name, _) = self.ident()?;
                        self.expect(":")?;
                        let support = self.support()?;
                        self.expect("~")?;
                        let dist = self.dist()?;
                        model.decls.push((
                            RawDecl::Var {
                                var: Variable::new(name, support, role),
                                dist,
                            },
                            loc,
                        ));
                    }
                    "guide" => {
                        self.next();
                        let symbol = self.ident()?;
                        self.expect("(")?;
                        let mut target = Vec::new();
                        while let Tok::Ident(_) = self.peek() {
                            target.push(self.ident()?);
                            self.eat(",");
                        }
                        if target.is_empty() {
                            return Err(self.error("guide needs at least one target variable"));
                        }
                        let mut parents = Vec::new();
                        if self.eat("|") {
                            while let Tok::Ident(_) = self.peek() {
                                parents.push(self.ident()?);
                                self.eat(",");
                            }
                        }
                        self.expect(")")?;
                        self.expect("~")?;
                        let dist = self.dist()?;
                        model.decls.push((
                            RawDecl::Guide {
                                symbol,
                                target,
                                parents,
                                dist,
                            },
                            loc,
                        ));
                    }
                    "generative_only" => {
                        self.next();
                        model.generative_only = true;
                    }
                    "notation" => {
                        self.next();
                        let (generative, _) = self.ident()?;
                        let (guide, _) = self.ident()?;
                        if generative == guide {
                            return Err(self.error("generative and guide symbols must differ"));
                        }
                        model.notation = Notation { generative, guide };
                    }
                    other => {
                        return Err(self.error(format!("unexpected identifier {other} in model body")))
                    }
                },
                other => {
                    return Err(self.error(format!("expected declaration, found {}", other.describe())))
                }
            }
        }
        if self.peek() != &Tok::Eof {
            return Err(self.error(format!(
                "trailing input after model: {}",
                self.peek().describe()
            )));
        }
        Ok(model)
    }

    fn support(&mut self) -> Result<Support, ParseError> {
        let (word, loc) = self.ident()?;
        let s = match word.as_str() {
            "bool" => Support::Boolean,
            "real" if self.eat("[") => {
                let d = self.integer()?;
                self.expect("]")?;
                Support::RealVector(d)
            }
            "real" => Support::Real,
            "posreal" => Support::PositiveReal,
            "unit" => Support::UnitInterval,
            "cat" | "int" => {
                self.expect("(")?;
                let k = self.integer()?;
                self.expect(")")?;
                if word == "cat" {
                    Support::Categorical(k)
                } else {
                    Support::BoundedInt(k)
                }
            }
            other => {
                return Err(ParseError::Syntax {
                    origin: self.origin.into(),
                    location: loc,
                    message: format!("unknown support {other}"),
                })
            }
        };
        Ok(s)
    }

    fn dist(&mut self) -> Result<RawDist, ParseError> {
        let (name, loc) = self.ident()?;
        let family: Family = name.parse().map_err(|_| ParseError::UnknownFamily {
            origin: self.origin.into(),
            location: loc,
            name: name.clone(),
        })?;
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.eat(")") {
            loop {
                params.push(self.param()?);
                if self.eat(")") {
                    break;
                }
                self.expect(",")?;
            }
        }
        let expected = family.descriptor().params.len();
        if params.len() != expected {
            return Err(ParseError::Arity {
                origin: self.origin.into(),
                location: loc,
                family,
                expected,
                found: params.len(),
            });
        }
        Ok(RawDist { family, params })
    }

    fn param(&mut self) -> Result<RawParam, ParseError> {
        match self.peek().clone() {
            Tok::Number(v) => {
                self.next();
                Ok(RawParam::Number(v))
            }
            Tok::Punct("[") => Ok(RawParam::List(self.nested()?)),
            Tok::Ident(word) if word == "table" => {
                self.next();
                let mut parents = Vec::new();
                while let Tok::Ident(_) = self.peek() {
                    parents.push(self.ident()?);
                }
                if parents.is_empty() {
                    return Err(self.error("table needs at least one parent"));
                }
                self.expect("->")?;
                Ok(RawParam::Table(parents, self.nested()?))
            }
            Tok::Ident(_) => {
                let (name, loc) = self.ident()?;
                if self.eat("(") {
                    let mut args = Vec::new();
                    while let Tok::Ident(_) = self.peek() {
                        args.push(self.ident()?);
                        self.eat(",");
                    }
                    self.expect(")")?;
                    Ok(RawParam::Call(name, args))
                } else {
                    Ok(RawParam::Ident(name, loc))
                }
            }
            other => Err(self.error(format!("expected parameter, found {}", other.describe()))),
        }
    }

    fn nested(&mut self) -> Result<NumTree, ParseError> {
        match self.peek().clone() {
            Tok::Number(v) => {
                self.next();
                Ok(NumTree::Num(v))
            }
            Tok::Punct("[") => {
                self.next();
                let mut items = Vec::new();
                if !self.eat("]") {
                    loop {
                        items.push(self.nested()?);
                        if self.eat("]") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(NumTree::List(items))
            }
            other => Err(self.error(format!("expected number or '[', found {}", other.describe()))),
        }
    }
}

impl RawModel {
    fn resolve(self, origin: &str) -> Result<GraphicalModel, ParseError> {
        let declared: HashSet<String> = self
            .decls
            .iter()
            .filter_map(|(d, _)| match d {
                RawDecl::Var { var, .. } => Some(var.name.clone()),
                RawDecl::Guide { .. } => None,
            })
            .collect();
        let check = |name: &str, loc: Location| -> Result<String, ParseError> {
            if declared.contains(name) {
                Ok(name.to_string())
            } else {
                Err(ParseError::UnknownIdentifier {
                    origin: origin.into(),
                    location: loc,
                    name: name.to_string(),
                })
            }
        };
        let spec = |dist: &RawDist| -> Result<DistributionSpec, ParseError> {
            let mut params = Vec::new();
            for p in &dist.params {
                params.push(match p {
                    RawParam::Number(v) => Param::Number(*v),
                    RawParam::Ident(name, loc) => Param::Symbol(check(name, *loc)?),
                    RawParam::Call(name, args) => Param::Call {
                        name: name.clone(),
                        args: args
                            .iter()
                            .map(|(a, l)| check(a, *l))
                            .collect::<Result<_, _>>()?,
                    },
                    RawParam::Table(parents, values) => Param::Table {
                        parents: parents
                            .iter()
                            .map(|(a, l)| check(a, *l))
                            .collect::<Result<_, _>>()?,
                        values: values.clone(),
                    },
                    RawParam::List(values) => Param::Table {
                        parents: Vec::new(),
                        values: values.clone(),
                    },
                });
            }
            Ok(DistributionSpec::new(dist.family, params))
        };

        let mut model = GraphicalModel::new(self.name);
        model.notation = self.notation;
        model.generative_only = self.generative_only;
        for (decl, _) in &self.decls {
            if let RawDecl::Var { var, .. } = decl {
                model.variables.push(var.clone());
            }
        }
        for (decl, _) in &self.decls {
            match decl {
                RawDecl::Var { var, dist } => {
                    let spec = spec(dist)?;
                    if var.role == Role::Parameter {
                        model.constants.push(Factor::new(vec![var.name.clone()], Vec::new(), spec));
                    } else {
                        let parents = model.spec_parents(&spec);
                        model.generative.push(Factor::new(vec![var.name.clone()], parents, spec));
                    }
                }
                RawDecl::Guide {
                    symbol,
                    target,
                    parents,
                    dist,
                } => {
                    if symbol.0 != model.notation.guide {
                        return Err(ParseError::Syntax {
                            origin: origin.into(),
                            location: symbol.1,
                            message: format!(
                                "guide symbol must be {}, found {}",
                                model.notation.guide, symbol.0
                            ),
                        });
                    }
                    let target = target
                        .iter()
                        .map(|(n, l)| check(n, *l))
                        .collect::<Result<_, _>>()?;
                    let parents = parents
                        .iter()
                        .map(|(n, l)| check(n, *l))
                        .collect::<Result<_, _>>()?;
                    let spec = spec(dist)?;
                    model.guides.push(Factor::new(target, parents, spec));
                }
            }
        }
        Ok(model)
    }
}

/// Canonical text of a model. Parameters come first in declaration order,
/// then random variables in topological order (ties by declaration order),
/// then guides in declaration order.
pub fn render_model(model: &GraphicalModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model {} {{", model.name);
    if model.notation != Notation::default() {
        let _ = writeln!(
            out,
            "  notation {} {}",
            model.notation.generative, model.notation.guide
        );
    }
    if model.generative_only {
        out.push_str("  generative_only\n");
    }
    let line = |var: &Variable, spec: &DistributionSpec, out: &mut String| {
        let _ = writeln!(
            out,
            "  {} {} : {} ~ {}",
            var.role.keyword(),
            var.name,
            var.support,
            render_spec(spec)
        );
    };
    for c in &model.constants {
        if let Some(var) = c.target.first().and_then(|t| model.variable(t)) {
            line(var, &c.spec, &mut out);
        }
    }
    let order = model
        .topological_order()
        .unwrap_or_else(|_| (0..model.generative.len()).collect());
    for i in order {
        let f = &model.generative[i];
        if let Some(var) = f.target.first().and_then(|t| model.variable(t)) {
            line(var, &f.spec, &mut out);
        }
    }
    for g in &model.guides {
        let parents = if g.parents.is_empty() {
            String::new()
        } else {
            format!(" | {}", g.parents.join(" "))
        };
        let _ = writeln!(
            out,
            "  guide {}({}{}) ~ {}",
            model.notation.guide,
            g.target.join(" "),
            parents,
            render_spec(&g.spec)
        );
    }
    out.push_str("}\n");
    out
}

pub fn render_spec(spec: &DistributionSpec) -> String {
    let params: Vec<String> = spec.params.iter().map(render_param).collect();
    format!("{}({})", spec.family, params.join(", "))
}

fn render_param(p: &Param) -> String {
    match p {
        Param::Number(v) => format_number(*v),
        Param::Symbol(s) => s.clone(),
        Param::Call { name, args } => format!("{name}({})", args.join(", ")),
        Param::Table { parents, values } if parents.is_empty() => render_tree(values),
        Param::Table { parents, values } => {
            format!("table {} -> {}", parents.join(" "), render_tree(values))
        }
    }
}

fn render_tree(t: &NumTree) -> String {
    match t {
        NumTree::Num(v) => format_number(*v),
        NumTree::List(items) => {
            let inner: Vec<String> = items.iter().map(render_tree).collect();
            format!("[{}]", inner.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::model::structurally_equal;

    #[test]
    fn vae_structure() {
        let m = parse_model(examples::VAE).unwrap();
        assert_eq!(m.variables.len(), 3);
        assert_eq!(m.generative.len(), 2);
        assert_eq!(m.guides.len(), 1);
        assert_eq!(m.constants.len(), 1);
        assert_eq!(m.generative[1].parents, vec!["z"]);
        assert_eq!(m.guides[0].parents, vec!["x"]);
    }

    #[test]
    fn empty_model() {
        let m = parse_model("model m { }").unwrap();
        assert!(m.variables.is_empty());
        assert!(m.validate().is_valid());
    }

    #[test]
    fn unknown_identifier_has_location() {
        let src = "model m {\n  latent z : real ~ Normal(0, 1)\n  guide q(z | w) ~ Normal(0, 1)\n}";
        match parse_model(src) {
            Err(ParseError::UnknownIdentifier { name, location, .. }) => {
                assert_eq!(name, "w");
                assert_eq!(location, Location { line: 3, column: 15 });
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_model(src).unwrap_err();
        assert!(err.to_string().contains("unknown identifier w"));
    }

    #[test]
    fn other_errors() {
        assert!(matches!(
            parse_model("model m { latent z : real ~ Gauss(0, 1) }"),
            Err(ParseError::UnknownFamily { .. })
        ));
        assert!(matches!(
            parse_model("model m { latent z : real ~ Normal(0) }"),
            Err(ParseError::Arity { expected: 2, found: 1, .. })
        ));
        let e = parse_model("model m { latent z real }").unwrap_err();
        assert!(matches!(e, ParseError::Syntax { .. }));
        assert_eq!(e.location().line, 1);
        assert!(parse_model("model m { } extra").is_err());
        assert!(parse_model("model m { latent z : real ~ Normal(0, 1) $ }").is_err());
    }

    #[test]
    fn comments_and_numbers() {
        let src = "# header\nmodel m { # body\n observed x : real ~ Normal(-1.5e-3, 2) }";
        let m = parse_model(src).unwrap();
        assert_eq!(m.generative[0].spec.params[0], Param::Number(-1.5e-3));
    }

    #[test]
    fn tables_round_trip() {
        let src = "model t {
          latent a : bool ~ Bernoulli(0.3)
          latent b : cat(3) ~ Categorical([0.2, 0.3, 0.5])
          observed x : bool ~ Bernoulli(table a b -> [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
          guide q(a b | x) ~ Const(0)
        }";
        let m = parse_model(src).unwrap();
        assert_eq!(m.generative[2].parents, vec!["a", "b"]);
        let text = render_model(&m);
        let again = parse_model(&text).unwrap();
        assert!(structurally_equal(&m, &again));
        assert_eq!(render_model(&again), text);
    }

    #[test]
    fn corpus_round_trips() {
        for (name, src) in examples::ALL {
            let m = parse_model(src).unwrap();
            let text = render_model(&m);
            let again = parse_model(&text).unwrap();
            assert!(structurally_equal(&m, &again), "{name}");
            assert_eq!(render_model(&again), text, "{name}");
        }
    }

    #[test]
    fn canonical_order_is_topological() {
        let src = "model m {
          guide q(z | x) ~ Normal(e(x), 1)
          observed x : real ~ Normal(d(z), 1)
          latent z : real ~ Normal(0, 1)
        }";
        let text = render_model(&parse_model(src).unwrap());
        let z = text.find("latent z").unwrap();
        let x = text.find("observed x").unwrap();
        let q = text.find("guide q").unwrap();
        assert!(z < x && x < q);
    }

    #[test]
    fn notation_is_kept() {
        let m = parse_model(examples::VEEGAN_FLIPPED).unwrap();
        assert_eq!(m.notation.generative, "q");
        assert!(render_model(&m).contains("guide p(x | z)"));
        assert!(parse_model("model m { latent z : real ~ Normal(0, 1) guide r(z) ~ Normal(0, 1) }").is_err());
    }
}
