//! Intermediate representation for directed graphical models and their
//! structural validation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::error::ModelError;
use crate::zoo::{self, Family};

/// Value space of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Support {
    Boolean,
    Categorical(usize),
    /// Integers `0..=n`.
    BoundedInt(usize),
    Real,
    PositiveReal,
    UnitInterval,
    RealVector(usize),
}

impl Support {
    /// Number of states for discrete supports.
    pub fn cardinality(&self) -> Option<usize> {
        match *self {
            Support::Boolean => Some(2),
            Support::Categorical(k) => Some(k),
            Support::BoundedInt(n) => Some(n + 1),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        self.cardinality().is_some()
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Support::Boolean => write!(f, "bool"),
            Support::Categorical(k) => write!(f, "cat({k})"),
            Support::BoundedInt(n) => write!(f, "int({n})"),
            Support::Real => write!(f, "real"),
            Support::PositiveReal => write!(f, "posreal"),
            Support::UnitInterval => write!(f, "unit"),
            Support::RealVector(d) => write!(f, "real[{d}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Role {
    Observed,
    Latent,
    Parameter,
}

impl Role {
    pub fn keyword(&self) -> &'static str {
        match self {
            Role::Observed => "observed",
            Role::Latent => "latent",
            Role::Parameter => "param",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub support: Support,
    pub role: Role,
}

impl Variable {
    pub fn new(name: impl Into<String>, support: Support, role: Role) -> Self {
        Self {
            name: name.into(),
            support,
            role,
        }
    }
}

/// Nested numeric literal used by tables and vector parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NumTree {
    Num(f64),
    List(Vec<NumTree>),
}

impl NumTree {
    pub fn from_vec(values: &[f64]) -> Self {
        NumTree::List(values.iter().map(|&v| NumTree::Num(v)).collect())
    }

    /// Flattens a list of numbers; `None` if nested.
    pub fn as_vector(&self) -> Option<Vec<f64>> {
        match self {
            NumTree::Num(_) => None,
            NumTree::List(items) => items
                .iter()
                .map(|item| match item {
                    NumTree::Num(v) => Some(*v),
                    NumTree::List(_) => None,
                })
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            NumTree::Num(_) => 0,
            NumTree::List(items) => 1 + items.iter().map(NumTree::depth).max().unwrap_or(0),
        }
    }
}

/// A parameter of a distribution: an opaque symbol for formula emission or a
/// literal for numeric work.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Param {
    Number(f64),
    Symbol(String),
    Call { name: String, args: Vec<String> },
    /// Conditional table indexed by the joint value of `parents` (row-major in
    /// the listed order). With no parents this is a plain literal vector.
    Table { parents: Vec<String>, values: NumTree },
}

impl Param {
    pub fn vector(values: &[f64]) -> Self {
        Param::Table {
            parents: Vec::new(),
            values: NumTree::from_vec(values),
        }
    }

    /// Identifiers this parameter refers to, in order of appearance.
    pub fn references(&self) -> Vec<&str> {
        match self {
            Param::Number(_) => Vec::new(),
            Param::Symbol(s) => vec![s.as_str()],
            Param::Call { args, .. } => args.iter().map(String::as_str).collect(),
            Param::Table { parents, .. } => parents.iter().map(String::as_str).collect(),
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Param::Number(_))
            || matches!(self, Param::Table { parents, .. } if parents.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSpec {
    pub family: Family,
    pub params: Vec<Param>,
}

impl DistributionSpec {
    pub fn new(family: Family, params: Vec<Param>) -> Self {
        Self { family, params }
    }
}

/// A conditional distribution `p(target | parents)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Factor {
    pub target: Vec<String>,
    pub parents: Vec<String>,
    pub spec: DistributionSpec,
}

impl Factor {
    pub fn new(target: Vec<String>, parents: Vec<String>, spec: DistributionSpec) -> Self {
        Self {
            target,
            parents,
            spec,
        }
    }

    pub fn target_set(&self) -> BTreeSet<&str> {
        self.target.iter().map(String::as_str).collect()
    }

    /// `symbol(target|parents)` in the compact notation used across renders.
    pub fn label(&self, symbol: &str) -> String {
        if self.parents.is_empty() {
            format!("{symbol}({})", self.target.join(","))
        } else {
            format!(
                "{symbol}({}|{})",
                self.target.join(","),
                self.parents.join(",")
            )
        }
    }
}

/// Function symbols used when printing generative and guide factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Notation {
    pub generative: String,
    pub guide: String,
}

impl Default for Notation {
    fn default() -> Self {
        Self {
            generative: "p".into(),
            guide: "q".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphicalModel {
    pub name: String,
    pub variables: Vec<Variable>,
    /// Generative factors (the set P).
    pub generative: Vec<Factor>,
    /// Variational factors (the set Q).
    pub guides: Vec<Factor>,
    /// Definitions of deterministic parameters; never part of the factorization.
    pub constants: Vec<Factor>,
    pub generative_only: bool,
    pub notation: Notation,
}

impl GraphicalModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            generative: Vec::new(),
            guides: Vec::new(),
            constants: Vec::new(),
            generative_only: false,
            notation: Notation::default(),
        }
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn role_of(&self, name: &str) -> Option<Role> {
        self.variable(name).map(|v| v.role)
    }

    pub fn is_observed(&self, name: &str) -> bool {
        self.role_of(name) == Some(Role::Observed)
    }

    pub fn is_latent(&self, name: &str) -> bool {
        self.role_of(name) == Some(Role::Latent)
    }

    pub fn observed(&self) -> impl Iterator<Item = &Variable> {
        self.variables.iter().filter(|v| v.role == Role::Observed)
    }

    pub fn latent(&self) -> impl Iterator<Item = &Variable> {
        self.variables.iter().filter(|v| v.role == Role::Latent)
    }

    pub fn generative_label(&self, index: usize) -> String {
        self.generative[index].label(&self.notation.generative)
    }

    pub fn guide_label(&self, index: usize) -> String {
        self.guides[index].label(&self.notation.guide)
    }

    /// Adds a random variable together with its generative factor. Factor
    /// parents are the non-parameter variables referenced by `spec`.
    pub fn add_variable(&mut self, var: Variable, spec: DistributionSpec) -> &mut Self {
        let name = var.name.clone();
        let role = var.role;
        self.variables.push(var);
        if role == Role::Parameter {
            self.constants.push(Factor::new(vec![name], Vec::new(), spec));
        } else {
            let parents = self.spec_parents(&spec);
            self.generative.push(Factor::new(vec![name], parents, spec));
        }
        self
    }

    pub fn add_guide(&mut self, target: Vec<String>, parents: Vec<String>, spec: DistributionSpec) -> &mut Self {
        self.guides.push(Factor::new(target, parents, spec));
        self
    }

    /// Non-parameter variables referenced by a distribution's parameters, in
    /// first-appearance order. Unknown identifiers are kept so that
    /// validation can report them.
    pub fn spec_parents(&self, spec: &DistributionSpec) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for param in &spec.params {
            for r in param.references() {
                let is_param = self.role_of(r) == Some(Role::Parameter);
                if !is_param && self.variable(r).is_some() && seen.insert(r.to_string()) {
                    out.push(r.to_string());
                }
            }
        }
        out
    }

    /// Generative factor whose target is exactly `names` (as a set).
    pub fn generative_for(&self, names: &BTreeSet<&str>) -> Option<usize> {
        self.generative.iter().position(|f| &f.target_set() == names)
    }

    /// Checks every structural invariant and returns all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut names: HashMap<&str, &Variable> = HashMap::new();

        for var in &self.variables {
            if names.insert(var.name.as_str(), var).is_some() {
                report.push(Violation::DuplicateVariable(var.name.clone()));
            }
            match var.support {
                Support::Categorical(k) if k < 2 => report.push(Violation::InvalidSupport {
                    variable: var.name.clone(),
                    detail: format!("categorical arity {k} < 2"),
                }),
                Support::RealVector(0) => report.push(Violation::InvalidSupport {
                    variable: var.name.clone(),
                    detail: "vector dimension 0".into(),
                }),
                _ => {}
            }
        }

        let check_factor = |factor: &Factor, label: String, report: &mut ValidationReport| {
            for name in factor.target.iter().chain(&factor.parents) {
                if !names.contains_key(name.as_str()) {
                    report.push(Violation::UnknownVariable {
                        factor: label.clone(),
                        name: name.clone(),
                    });
                }
            }
            for param in &factor.spec.params {
                for r in param.references() {
                    if !names.contains_key(r) {
                        report.push(Violation::UnknownVariable {
                            factor: label.clone(),
                            name: r.to_string(),
                        });
                    }
                }
            }
            if let Some(t) = factor.target.iter().find(|t| factor.parents.contains(t)) {
                report.push(Violation::TargetInParents {
                    factor: label.clone(),
                    variable: t.clone(),
                });
            }
            let descriptor = factor.spec.family.descriptor();
            if descriptor.params.len() != factor.spec.params.len() {
                report.push(Violation::ParameterArity {
                    factor: label.clone(),
                    family: factor.spec.family,
                    expected: descriptor.params.len(),
                    found: factor.spec.params.len(),
                });
            }
            for t in &factor.target {
                if let Some(var) = names.get(t.as_str()) {
                    if !zoo::family_accepts(factor.spec.family, var.support, factor.target.len()) {
                        report.push(Violation::SupportMismatch {
                            factor: label.clone(),
                            variable: t.clone(),
                            family: factor.spec.family,
                            support: var.support,
                        });
                    }
                }
            }
            if let Err(detail) = zoo::check_literal_params(&factor.spec) {
                report.push(Violation::InvalidParameter {
                    factor: label.clone(),
                    detail,
                });
            }
        };

        for (i, factor) in self.generative.iter().enumerate() {
            let label = self.generative_label(i);
            check_factor(factor, label.clone(), &mut report);
            for t in &factor.target {
                if self.role_of(t) == Some(Role::Parameter) {
                    report.push(Violation::ParameterTargeted {
                        factor: label.clone(),
                        variable: t.clone(),
                    });
                }
            }
        }
        for factor in &self.constants {
            check_factor(factor, factor.label(&self.notation.generative), &mut report);
        }

        // Exactly one generative factor per random variable.
        let mut coverage: BTreeMap<&str, usize> = BTreeMap::new();
        for factor in &self.generative {
            for t in &factor.target {
                *coverage.entry(t.as_str()).or_default() += 1;
            }
        }
        for var in self.variables.iter().filter(|v| v.role != Role::Parameter) {
            match coverage.get(var.name.as_str()).copied().unwrap_or(0) {
                0 => report.push(Violation::MissingGenerative(var.name.clone())),
                1 => {}
                n => report.push(Violation::MultipleGenerative {
                    variable: var.name.clone(),
                    count: n,
                }),
            }
        }

        if let Some(cycle) = self.find_cycle() {
            report.push(Violation::Cycle(cycle));
        }

        for (i, guide) in self.guides.iter().enumerate() {
            let label = self.guide_label(i);
            check_factor(guide, label.clone(), &mut report);
            for param in &guide.spec.params {
                for r in param.references() {
                    let is_param = self.role_of(r) == Some(Role::Parameter);
                    if !is_param
                        && names.contains_key(r)
                        && !guide.parents.iter().any(|p| p == r)
                    {
                        report.push(Violation::GuideReferenceOutsideParents {
                            factor: label.clone(),
                            variable: r.to_string(),
                        });
                    }
                }
            }
            for t in &guide.target {
                if self.is_observed(t) {
                    report.notes.push(format!(
                        "{label} targets observed variable {t} (role-flipped guide)"
                    ));
                }
            }
        }

        if !self.generative_only {
            for var in self.latent() {
                let covered = self
                    .guides
                    .iter()
                    .any(|g| g.target.iter().any(|t| t == &var.name));
                if !covered {
                    report.push(Violation::MissingGuide(var.name.clone()));
                }
            }
        }
        report
    }

    /// Parent-relation cycle among generative factors, if any.
    fn find_cycle(&self) -> Option<Vec<String>> {
        let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for factor in &self.generative {
            for t in &factor.target {
                for p in &factor.parents {
                    edges.entry(p.as_str()).or_default().push(t.as_str());
                }
            }
        }
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        fn visit<'a>(
            node: &'a str,
            edges: &BTreeMap<&'a str, Vec<&'a str>>,
            marks: &mut HashMap<&'a str, Mark>,
            stack: &mut Vec<&'a str>,
        ) -> Option<Vec<String>> {
            match marks.get(node) {
                Some(Mark::Done) => return None,
                Some(Mark::Open) => {
                    let start = stack.iter().position(|n| *n == node).unwrap_or(0);
                    let mut cycle: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                    cycle.push(node.to_string());
                    return Some(cycle);
                }
                None => {}
            }
            marks.insert(node, Mark::Open);
            stack.push(node);
            if let Some(next) = edges.get(node) {
                for n in next {
                    if let Some(c) = visit(n, edges, marks, stack) {
                        return Some(c);
                    }
                }
            }
            stack.pop();
            marks.insert(node, Mark::Done);
            None
        }
        let mut marks = HashMap::new();
        let nodes: Vec<&str> = self.variables.iter().map(|v| v.name.as_str()).collect();
        for node in nodes {
            let mut stack = Vec::new();
            if let Some(c) = visit(node, &edges, &mut marks, &mut stack) {
                return Some(c);
            }
        }
        None
    }

    /// Generative factors in topological order (ties by declaration order).
    pub fn topological_order(&self) -> Result<Vec<usize>, ModelError> {
        let producer: HashMap<&str, usize> = self
            .generative
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.target.iter().map(move |t| (t.as_str(), i)))
            .collect();
        let deps: Vec<BTreeSet<usize>> = self
            .generative
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.parents
                    .iter()
                    .filter_map(|p| producer.get(p.as_str()).copied())
                    .filter(|&j| j != i)
                    .collect()
            })
            .collect();
        stable_toposort(&deps).ok_or_else(|| {
            ModelError::Invalid(Violation::Cycle(self.find_cycle().unwrap_or_default()))
        })
    }

    /// Children-first order: a factor is emitted once every factor that
    /// conditions on it has been emitted, ties going to declaration order.
    /// This reads as `p(x|z)p(z)`.
    fn emission_order(&self) -> Result<Vec<usize>, ModelError> {
        let producer: HashMap<&str, usize> = self
            .generative
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.target.iter().map(move |t| (t.as_str(), i)))
            .collect();
        let mut children = vec![BTreeSet::new(); self.generative.len()];
        for (i, f) in self.generative.iter().enumerate() {
            for p in &f.parents {
                if let Some(&j) = producer.get(p.as_str()) {
                    if j != i {
                        children[j].insert(i);
                    }
                }
            }
        }
        stable_toposort(&children).ok_or_else(|| {
            ModelError::Invalid(Violation::Cycle(self.find_cycle().unwrap_or_default()))
        })
    }

    /// Ordered product of factors representing `p(X) = sum_Z prod p(.|.)`.
    pub fn factorization(&self) -> Result<Factorization, ModelError> {
        let report = self.validate();
        if let Some(v) = report.violations.into_iter().next() {
            return Err(ModelError::Invalid(v));
        }
        let factors = self
            .emission_order()?
            .into_iter()
            .map(|i| FactorTerm {
                index: i,
                label: self.generative_label(i),
            })
            .collect();
        Ok(Factorization {
            observed: self.observed().map(|v| v.name.clone()).collect(),
            latent: self.latent().map(|v| v.name.clone()).collect(),
            factors,
        })
    }

    /// Partition of the variables by role and the applicable tags per factor.
    pub fn classify_variables(&self) -> Classification {
        let mut out = Classification {
            observed: self.observed().map(|v| v.name.clone()).collect(),
            latent: self.latent().map(|v| v.name.clone()).collect(),
            parameters: self
                .variables
                .iter()
                .filter(|v| v.role == Role::Parameter)
                .map(|v| v.name.clone())
                .collect(),
            generative: Vec::new(),
            guides: Vec::new(),
        };
        for (i, f) in self.generative.iter().enumerate() {
            out.generative.push((self.generative_label(i), self.factor_tags(f)));
        }
        for (i, f) in self.guides.iter().enumerate() {
            out.guides.push((self.guide_label(i), self.factor_tags(f)));
        }
        out
    }

    fn factor_tags(&self, factor: &Factor) -> BTreeSet<FactorTag> {
        let mut tags = BTreeSet::new();
        let constant_params = factor.spec.params.iter().all(|p| match p {
            Param::Number(_) => true,
            Param::Table { parents, .. } => parents.is_empty(),
            Param::Symbol(s) => self.role_of(s) == Some(Role::Parameter),
            Param::Call { .. } => false,
        });
        if factor.parents.is_empty() && constant_params {
            tags.insert(FactorTag::Prior);
        }
        let any_observed_parent = factor.parents.iter().any(|p| self.is_observed(p));
        let all_observed_parents =
            !factor.parents.is_empty() && factor.parents.iter().all(|p| self.is_observed(p));
        let any_observed_target = factor.target.iter().any(|t| self.is_observed(t));
        let all_observed_target = factor.target.iter().all(|t| self.is_observed(t));
        if any_observed_parent {
            tags.insert(FactorTag::Posterior);
        }
        if !any_observed_target && all_observed_parents {
            tags.insert(FactorTag::Discriminative);
        }
        if all_observed_target || any_observed_target {
            tags.insert(FactorTag::Generative);
        }
        tags
    }
}

/// Kahn's algorithm choosing the lowest available index at every step.
pub(crate) fn stable_toposort(deps: &[BTreeSet<usize>]) -> Option<Vec<usize>> {
    let n = deps.len();
    let mut remaining: Vec<usize> = deps.iter().map(BTreeSet::len).collect();
    let mut children = vec![Vec::new(); n];
    for (i, d) in deps.iter().enumerate() {
        for &j in d {
            children[j].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| remaining[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            remaining[c] -= 1;
            if remaining[c] == 0 {
                ready.insert(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    DuplicateVariable(String),
    InvalidSupport { variable: String, detail: String },
    UnknownVariable { factor: String, name: String },
    TargetInParents { factor: String, variable: String },
    ParameterArity { factor: String, family: Family, expected: usize, found: usize },
    SupportMismatch { factor: String, variable: String, family: Family, support: Support },
    InvalidParameter { factor: String, detail: String },
    ParameterTargeted { factor: String, variable: String },
    MissingGenerative(String),
    MultipleGenerative { variable: String, count: usize },
    Cycle(Vec<String>),
    GuideReferenceOutsideParents { factor: String, variable: String },
    MissingGuide(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateVariable(n) => write!(f, "duplicate variable {n}"),
            Violation::InvalidSupport { variable, detail } => {
                write!(f, "invalid support for {variable}: {detail}")
            }
            Violation::UnknownVariable { factor, name } => {
                write!(f, "{factor}: unknown identifier {name}")
            }
            Violation::TargetInParents { factor, variable } => {
                write!(f, "{factor}: {variable} is both target and parent")
            }
            Violation::ParameterArity { factor, family, expected, found } => write!(
                f,
                "{factor}: {family} takes {expected} parameter(s), found {found}"
            ),
            Violation::SupportMismatch { factor, variable, family, support } => write!(
                f,
                "{factor}: {family} cannot model {variable} with support {support}"
            ),
            Violation::InvalidParameter { factor, detail } => write!(f, "{factor}: {detail}"),
            Violation::ParameterTargeted { factor, variable } => {
                write!(f, "{factor}: parameter {variable} cannot be a factor target")
            }
            Violation::MissingGenerative(n) => write!(f, "{n} has no generative factor"),
            Violation::MultipleGenerative { variable, count } => {
                write!(f, "{variable} is targeted by {count} generative factors")
            }
            Violation::Cycle(c) => write!(f, "dependency cycle: {}", c.join(" -> ")),
            Violation::GuideReferenceOutsideParents { factor, variable } => write!(
                f,
                "{factor}: parameter references {variable} outside the conditioning set"
            ),
            Violation::MissingGuide(n) => write!(f, "latent {n} has no guide"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Informational remarks that do not invalidate the model.
    pub notes: Vec<String>,
}

impl ValidationReport {
    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorTerm {
    pub index: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Factorization {
    pub observed: Vec<String>,
    pub latent: Vec<String>,
    pub factors: Vec<FactorTerm>,
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let product: String = self.factors.iter().map(|t| t.label.as_str()).collect();
        let lhs = format!("p({})", self.observed.join(","));
        if self.latent.is_empty() {
            write!(f, "{lhs} = {product}")
        } else {
            write!(f, "{lhs} = sum_{{{}}} {product}", self.latent.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum FactorTag {
    Prior,
    Generative,
    Discriminative,
    Posterior,
}

impl fmt::Display for FactorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorTag::Prior => "prior",
            FactorTag::Generative => "generative",
            FactorTag::Discriminative => "discriminative",
            FactorTag::Posterior => "posterior",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub observed: Vec<String>,
    pub latent: Vec<String>,
    pub parameters: Vec<String>,
    pub generative: Vec<(String, BTreeSet<FactorTag>)>,
    pub guides: Vec<(String, BTreeSet<FactorTag>)>,
}

impl Classification {
    pub fn tags_of(&self, label: &str) -> Option<&BTreeSet<FactorTag>> {
        self.generative
            .iter()
            .chain(&self.guides)
            .find(|(l, _)| l == label)
            .map(|(_, t)| t)
    }
}

/// Order-insensitive comparison of two models: the same variables and
/// generative factors (keyed by name and target), and the same guides in the
/// same order.
pub fn structurally_equal(a: &GraphicalModel, b: &GraphicalModel) -> bool {
    fn keyed(factors: &[Factor]) -> BTreeMap<Vec<&str>, &Factor> {
        factors
            .iter()
            .map(|f| (f.target.iter().map(String::as_str).collect(), f))
            .collect()
    }
    let vars = |m: &'_ GraphicalModel| -> BTreeMap<String, (Support, Role)> {
        m.variables
            .iter()
            .map(|v| (v.name.clone(), (v.support, v.role)))
            .collect()
    };
    a.name == b.name
        && a.generative_only == b.generative_only
        && a.notation == b.notation
        && a.variables.len() == b.variables.len()
        && vars(a) == vars(b)
        && keyed(&a.generative) == keyed(&b.generative)
        && keyed(&a.constants) == keyed(&b.constants)
        && a.guides == b.guides
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;
    use crate::examples;

    #[test]
    fn vae_is_valid() {
        let m = parse_model(examples::VAE).unwrap();
        let report = m.validate();
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn two_node_cycle_is_reported() {
        let src = "model c {
            latent z : real ~ Normal(f(x), 1)
            observed x : real ~ Normal(g(z), 1)
            guide q(z | x) ~ Normal(h(x), 1)
        }";
        let m = parse_model(src).unwrap();
        let report = m.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Cycle(c) if c.len() == 3)));
    }

    #[test]
    fn missing_guide_names_latent() {
        let src = "model c {
            latent z : real ~ Normal(0, 1)
            observed x : real ~ Normal(f(z), 1)
        }";
        let m = parse_model(src).unwrap();
        assert_eq!(
            m.validate().violations,
            vec![Violation::MissingGuide("z".into())]
        );
    }

    #[test]
    fn generative_only_skips_guide_coverage() {
        let src = "model c {
            generative_only
            latent z : real ~ Normal(0, 1)
            observed x : real ~ Normal(f(z), 1)
        }";
        assert!(parse_model(src).unwrap().validate().is_valid());
    }

    #[test]
    fn support_mismatch_and_bad_arity() {
        let src = "model c {
            observed x : bool ~ Normal(0, 1)
            observed y : cat(1) ~ Categorical([1])
        }";
        let report = parse_model(src).unwrap().validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::SupportMismatch { variable, .. } if variable == "x")));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::InvalidSupport { variable, .. } if variable == "y")));
    }

    #[test]
    fn invalid_literal_probabilities() {
        let src = "model c { observed x : cat(2) ~ Categorical([0.5, 0.6]) }";
        let report = parse_model(src).unwrap().validate();
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::InvalidParameter { .. }]
        ));
    }

    #[test]
    fn observed_guide_is_a_note() {
        let m = parse_model(examples::VEEGAN_FLIPPED).unwrap();
        let report = m.validate();
        assert!(report.is_valid(), "{:?}", report.violations);
        let src = "model c {
            latent z : real ~ Normal(0, 1)
            observed x : real ~ Normal(f(z), 1)
            guide q(z | x) ~ Normal(e(x), 1)
            guide q(x | z) ~ Normal(d(z), 1)
        }";
        let report = parse_model(src).unwrap().validate();
        assert!(report.is_valid());
        assert_eq!(report.notes.len(), 1);
    }

    #[test]
    fn validate_is_deterministic() {
        let m = parse_model(examples::LATPLAN).unwrap();
        assert_eq!(m.validate(), m.validate());
    }

    #[test]
    fn latplan_factorization() {
        let m = parse_model(examples::LATPLAN).unwrap();
        let f = m.factorization().unwrap();
        let product: String = f.factors.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(product, "p(x0|z0)p(x1|z1)p(z1|z0,a)p(a|z0)p(z0)");
        assert_eq!(
            f.to_string(),
            "p(x0,x1) = sum_{z0,a,z1} p(x0|z0)p(x1|z1)p(z1|z0,a)p(a|z0)p(z0)"
        );
    }

    #[test]
    fn hmm_factorization() {
        let m = parse_model(examples::HMM).unwrap();
        let f = m.factorization().unwrap();
        let product: String = f.factors.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(product, "p(x0|z0)p(x1|z1)p(z1|z0)p(z0)");
    }

    #[test]
    fn single_factor_model() {
        let m = parse_model("model coin { observed x : bool ~ Bernoulli(0.5) }").unwrap();
        assert_eq!(m.factorization().unwrap().to_string(), "p(x) = p(x)");
    }

    #[test]
    fn factorization_rejects_invalid() {
        let m = parse_model("model c { latent z : real ~ Normal(0, 1) }").unwrap();
        assert!(matches!(
            m.factorization(),
            Err(ModelError::Invalid(Violation::MissingGuide(_)))
        ));
    }

    #[test]
    fn vae_classification() {
        let m = parse_model(examples::VAE).unwrap();
        let c = m.classify_variables();
        assert_eq!(c.observed, vec!["x"]);
        assert_eq!(c.latent, vec!["z"]);
        assert_eq!(c.parameters, vec!["sigma"]);
        let prior: BTreeSet<_> = [FactorTag::Prior].into();
        let generative: BTreeSet<_> = [FactorTag::Generative].into();
        let posterior: BTreeSet<_> = [FactorTag::Posterior, FactorTag::Discriminative].into();
        assert_eq!(c.tags_of("p(z)"), Some(&prior));
        assert_eq!(c.tags_of("p(x|z)"), Some(&generative));
        assert_eq!(c.tags_of("q(z|x)"), Some(&posterior));
    }
}
