//! Registry of distribution families: supports, max-entropy metadata,
//! conjugate partners and, for the numeric subset, densities, entropies,
//! closed-form KL divergences and samplers.
//!
//! Closed-form KL and cross-entropy are implemented for Normal, Bernoulli,
//! Categorical, Beta and Dirichlet pairs of the same family.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution as _;
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::DistError;
use crate::expr::{self, Expr};
use crate::model::{DistributionSpec, NumTree, Param, Support};

/// Tolerance for probability vectors summing to one.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Family {
    Normal,
    Laplace,
    Bernoulli,
    Categorical,
    Binomial,
    Uniform,
    Beta,
    Gamma,
    Dirichlet,
    Const,
    ScaledInvChiSq,
    Horseshoe,
    Gumbel,
    Frechet,
    Weibull,
    Pareto,
    GeneralizedPareto,
    Cauchy,
    VonMisesFisher,
    LogNormal,
    Logistic,
    TruncatedNormal,
}

impl Family {
    pub const ALL: [Family; 22] = [
        Family::Normal,
        Family::Laplace,
        Family::Bernoulli,
        Family::Categorical,
        Family::Binomial,
        Family::Uniform,
        Family::Beta,
        Family::Gamma,
        Family::Dirichlet,
        Family::Const,
        Family::ScaledInvChiSq,
        Family::Horseshoe,
        Family::Gumbel,
        Family::Frechet,
        Family::Weibull,
        Family::Pareto,
        Family::GeneralizedPareto,
        Family::Cauchy,
        Family::VonMisesFisher,
        Family::LogNormal,
        Family::Logistic,
        Family::TruncatedNormal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Normal => "Normal",
            Family::Laplace => "Laplace",
            Family::Bernoulli => "Bernoulli",
            Family::Categorical => "Categorical",
            Family::Binomial => "Binomial",
            Family::Uniform => "Uniform",
            Family::Beta => "Beta",
            Family::Gamma => "Gamma",
            Family::Dirichlet => "Dirichlet",
            Family::Const => "Const",
            Family::ScaledInvChiSq => "ScaledInvChiSq",
            Family::Horseshoe => "Horseshoe",
            Family::Gumbel => "Gumbel",
            Family::Frechet => "Frechet",
            Family::Weibull => "Weibull",
            Family::Pareto => "Pareto",
            Family::GeneralizedPareto => "GeneralizedPareto",
            Family::Cauchy => "Cauchy",
            Family::VonMisesFisher => "VonMisesFisher",
            Family::LogNormal => "LogNormal",
            Family::Logistic => "Logistic",
            Family::TruncatedNormal => "TruncatedNormal",
        }
    }

    pub fn descriptor(&self) -> FamilyDescriptor {
        descriptor(*self)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown family {s}"))
    }
}

/// Kind of value space a family is defined over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SupportKind {
    Boolean,
    Finite,
    BoundedInteger,
    Real,
    PositiveReal,
    UnitInterval,
    /// A bounded interval `[l, u]`.
    Interval,
    Simplex,
    UnitSphere,
    /// Matches any support (point masses).
    Any,
}

impl fmt::Display for SupportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SupportKind::Boolean => "boolean",
            SupportKind::Finite => "finite set",
            SupportKind::BoundedInteger => "integers 0..n",
            SupportKind::Real => "real line",
            SupportKind::PositiveReal => "positive reals",
            SupportKind::UnitInterval => "unit interval",
            SupportKind::Interval => "bounded interval",
            SupportKind::Simplex => "probability simplex",
            SupportKind::UnitSphere => "unit sphere",
            SupportKind::Any => "any",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParamKind {
    Location,
    Scale,
    Probability,
    ProbabilityVector,
    Pseudocount,
    Shape,
    Bound,
    Count,
    Value,
    Direction,
    Concentration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FamilyFlags {
    pub has_mean: bool,
    pub has_variance: bool,
    pub heavy_tail: bool,
    pub sparse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Operation {
    LogProb,
    Entropy,
    Kl,
    CrossEntropy,
    Sample,
    NllFormula,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::LogProb => "log_prob",
            Operation::Entropy => "entropy",
            Operation::Kl => "kl",
            Operation::CrossEntropy => "cross_entropy",
            Operation::Sample => "sample",
            Operation::NllFormula => "nll_formula",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyDescriptor {
    pub family: Family,
    pub support: SupportKind,
    pub params: &'static [(&'static str, ParamKind)],
    pub max_entropy_constraints: &'static [&'static str],
    pub conjugate_prior: Option<Family>,
    pub flags: FamilyFlags,
    pub operations: &'static [Operation],
    pub usage: &'static str,
}

const fn flags(has_mean: bool, has_variance: bool, heavy_tail: bool, sparse: bool) -> FamilyFlags {
    FamilyFlags {
        has_mean,
        has_variance,
        heavy_tail,
        sparse,
    }
}

use Operation::*;
use ParamKind as P;

const FULL_OPS: &[Operation] = &[LogProb, Entropy, Kl, CrossEntropy, Sample, NllFormula];
const NO_OPS: &[Operation] = &[];

pub fn descriptor(family: Family) -> FamilyDescriptor {
    let d = |support,
             params,
             max_entropy_constraints,
             conjugate_prior,
             flags,
             operations,
             usage| FamilyDescriptor {
        family,
        support,
        params,
        max_entropy_constraints,
        conjugate_prior,
        flags,
        operations,
        usage,
    };
    match family {
        Family::Normal => d(
            SupportKind::Real,
            &[("mu", P::Location), ("sigma", P::Scale)],
            &["known E[X]", "known Var[X]"],
            Some(Family::Normal),
            flags(true, true, false, false),
            FULL_OPS,
            "unbounded continuous variables",
        ),
        Family::Laplace => d(
            SupportKind::Real,
            &[("mu", P::Location), ("b", P::Scale)],
            &["known E[X] = mu", "known E[|X - mu|] = b"],
            None,
            flags(true, true, true, true),
            &[LogProb, Entropy, Sample, NllFormula],
            "variables with outliers; sparse modeling",
        ),
        Family::Bernoulli => d(
            SupportKind::Boolean,
            &[("p", P::Probability)],
            &["boolean outcome"],
            Some(Family::Beta),
            flags(true, true, false, false),
            FULL_OPS,
            "boolean variables",
        ),
        Family::Categorical => d(
            SupportKind::Finite,
            &[("p", P::ProbabilityVector)],
            &["finite set of outcomes"],
            Some(Family::Dirichlet),
            flags(false, false, false, false),
            FULL_OPS,
            "unordered categorical variables",
        ),
        Family::Binomial => d(
            SupportKind::BoundedInteger,
            &[("n", P::Count), ("p", P::Probability)],
            &[],
            Some(Family::Beta),
            flags(true, true, false, false),
            &[LogProb],
            "ordinal categories with equal spacing; counters",
        ),
        Family::Uniform => d(
            SupportKind::Interval,
            &[("l", P::Bound), ("u", P::Bound)],
            &["X in [l, u]"],
            Some(Family::Pareto),
            flags(true, true, false, false),
            &[LogProb, Entropy, Sample],
            "bounded continuous variables",
        ),
        Family::Beta => d(
            SupportKind::UnitInterval,
            &[("p0", P::Probability), ("n", P::Pseudocount)],
            &["fixed E[log X]", "fixed E[log(1 - X)]"],
            None,
            flags(true, true, false, false),
            &[LogProb, Entropy, Kl, CrossEntropy, Sample],
            "a probability of success with uncertainty",
        ),
        Family::Gamma => d(
            SupportKind::PositiveReal,
            &[("k", P::Shape), ("theta", P::Scale)],
            &["fixed E[X]", "fixed E[log X]"],
            None,
            flags(true, true, false, false),
            &[LogProb, Entropy, Sample],
            "positive aggregated sums; waiting times",
        ),
        Family::Dirichlet => d(
            SupportKind::Simplex,
            &[("p0", P::ProbabilityVector), ("n", P::Pseudocount)],
            &["fixed E[log X_i]"],
            None,
            flags(true, true, false, false),
            &[LogProb, Kl, CrossEntropy, Sample],
            "a categorical distribution with uncertainty",
        ),
        Family::Const => d(
            SupportKind::Any,
            &[("value", P::Value)],
            &[],
            None,
            flags(true, true, false, false),
            &[LogProb, Sample],
            "deterministic values (point mass)",
        ),
        Family::ScaledInvChiSq => d(
            SupportKind::PositiveReal,
            &[("n", P::Pseudocount), ("s2", P::Scale)],
            &[],
            None,
            flags(true, true, true, false),
            NO_OPS,
            "variances; conjugate prior for a Gaussian variance",
        ),
        Family::Horseshoe => d(
            SupportKind::Real,
            &[("mu", P::Location), ("sigma", P::Scale)],
            &[],
            None,
            flags(true, false, true, true),
            NO_OPS,
            "sparse modeling with infinite density at zero",
        ),
        Family::Gumbel => d(
            SupportKind::Real,
            &[("mu", P::Location), ("sigma", P::Scale)],
            &[],
            None,
            flags(true, true, false, false),
            NO_OPS,
            "block maxima of Gaussian measurements",
        ),
        Family::Frechet => d(
            SupportKind::PositiveReal,
            &[("alpha", P::Shape), ("s", P::Scale)],
            &[],
            None,
            flags(true, true, true, false),
            NO_OPS,
            "block maxima of heavy-tailed measurements",
        ),
        Family::Weibull => d(
            SupportKind::PositiveReal,
            &[("k", P::Shape), ("lambda", P::Scale)],
            &[],
            None,
            flags(true, true, false, false),
            NO_OPS,
            "block maxima of light-tailed measurements",
        ),
        Family::Pareto => d(
            SupportKind::PositiveReal,
            &[("alpha", P::Shape), ("theta", P::Bound)],
            &["X in [theta, inf)", "known E[log X]"],
            None,
            flags(false, false, true, false),
            NO_OPS,
            "power laws; bounds of a Uniform",
        ),
        Family::GeneralizedPareto => d(
            SupportKind::Real,
            &[("mu", P::Location), ("sigma", P::Scale), ("xi", P::Shape)],
            &[],
            None,
            flags(false, false, true, false),
            NO_OPS,
            "peak-over-threshold exceedances",
        ),
        Family::Cauchy => d(
            SupportKind::Real,
            &[("x0", P::Location), ("gamma", P::Scale)],
            &["E[log(1 + (X - x0)^2 / gamma^2)] = log 4"],
            None,
            flags(false, false, true, false),
            NO_OPS,
            "ratios of zero-mean Gaussians; tangents",
        ),
        Family::VonMisesFisher => d(
            SupportKind::UnitSphere,
            &[("mu", P::Direction), ("kappa", P::Concentration)],
            &["directions in Euclidean space"],
            None,
            flags(true, false, false, false),
            NO_OPS,
            "unit vectors such as embeddings",
        ),
        Family::LogNormal => d(
            SupportKind::PositiveReal,
            &[("mu", P::Location), ("sigma", P::Scale)],
            &["known E[log X]", "known Var[log X]"],
            None,
            flags(true, true, true, false),
            NO_OPS,
            "logarithm of a Gaussian variable",
        ),
        Family::Logistic => d(
            SupportKind::Real,
            &[("mu", P::Location), ("s", P::Scale)],
            &["E[X] = mu", "E[log(exp((x-mu)/2s) + exp(-(x-mu)/2s))] = 1"],
            None,
            flags(true, true, true, false),
            NO_OPS,
            "logits of probabilities",
        ),
        Family::TruncatedNormal => d(
            SupportKind::Interval,
            &[("mu", P::Location), ("sigma", P::Scale), ("l", P::Bound), ("u", P::Bound)],
            &["X in [l, u]", "known E[X]", "known Var[X]"],
            None,
            flags(true, true, false, false),
            NO_OPS,
            "bounded variables centered around a mean",
        ),
    }
}

pub fn registry() -> Vec<FamilyDescriptor> {
    Family::ALL.iter().map(|f| f.descriptor()).collect()
}

/// Whether `family` can be the distribution of a variable with `support`.
/// Multi-variable targets are only accepted by point masses.
pub fn family_accepts(family: Family, support: Support, target_len: usize) -> bool {
    if target_len != 1 {
        return family == Family::Const;
    }
    let kind = family.descriptor().support;
    match kind {
        SupportKind::Any => true,
        SupportKind::Boolean => support == Support::Boolean,
        SupportKind::Finite => matches!(support, Support::Categorical(_) | Support::Boolean),
        SupportKind::BoundedInteger => matches!(support, Support::BoundedInt(_)),
        SupportKind::Real => support == Support::Real,
        SupportKind::PositiveReal => support == Support::PositiveReal,
        SupportKind::UnitInterval => support == Support::UnitInterval,
        SupportKind::Interval => matches!(
            support,
            Support::Real | Support::PositiveReal | Support::UnitInterval
        ),
        SupportKind::Simplex | SupportKind::UnitSphere => matches!(support, Support::RealVector(_)),
    }
}

/// Checks literal parameters (numbers and tables) against family
/// constraints. Symbolic parameters are not checked.
pub fn check_literal_params(spec: &DistributionSpec) -> Result<(), String> {
    let kinds = spec.family.descriptor().params;
    for (param, (name, kind)) in spec.params.iter().zip(kinds) {
        match (param, kind) {
            (Param::Number(v), ParamKind::Scale | ParamKind::Shape | ParamKind::Concentration)
                if !(*v > 0.0) =>
            {
                return Err(format!("{name} must be positive, got {v}"))
            }
            (Param::Number(v), ParamKind::Probability) if !(0.0..=1.0).contains(v) => {
                return Err(format!("{name} must lie in [0, 1], got {v}"))
            }
            (Param::Number(v), ParamKind::Pseudocount | ParamKind::Count) if !(*v >= 0.0) => {
                return Err(format!("{name} must be non-negative, got {v}"))
            }
            (Param::Table { parents, values }, _) => {
                let rows = table_rows(values, parents.len())
                    .ok_or_else(|| format!("{name}: malformed table"))?;
                for row in rows {
                    match kind {
                        ParamKind::Probability => {
                            if row.len() != 1 || !(0.0..=1.0).contains(&row[0]) {
                                return Err(format!("{name}: entries must be probabilities"));
                            }
                        }
                        ParamKind::ProbabilityVector => check_simplex(&row)
                            .map_err(|e| format!("{name}: {e}"))?,
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// Leaf rows of a table nested `depth` levels deep (one level per parent).
/// Scalars at the leaf level become single-element rows.
pub fn table_rows(values: &NumTree, depth: usize) -> Option<Vec<Vec<f64>>> {
    fn walk(t: &NumTree, depth: usize, out: &mut Vec<Vec<f64>>) -> bool {
        if depth == 0 {
            match t {
                NumTree::Num(v) => out.push(vec![*v]),
                NumTree::List(_) => match t.as_vector() {
                    Some(v) => out.push(v),
                    None => return false,
                },
            }
            return true;
        }
        match t {
            NumTree::List(items) => items.iter().all(|i| walk(i, depth - 1, out)),
            NumTree::Num(_) => false,
        }
    }
    let mut out = Vec::new();
    walk(values, depth, &mut out).then_some(out)
}

fn check_simplex(p: &[f64]) -> Result<(), String> {
    if p.is_empty() {
        return Err("empty probability vector".into());
    }
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err("entries must lie in [0, 1]".into());
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(format!("probabilities sum to {total}, not 1"));
    }
    Ok(())
}

/// A value in the support of a distribution. Booleans and categories are
/// zero-based indices (`false` = 0, `true` = 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Value {
    Real(f64),
    Index(usize),
    Vector(Vec<f64>),
}

impl Value {
    pub fn as_index(&self) -> Option<usize> {
        match self {
            Value::Index(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Index(i) => Some(*i as f64),
            Value::Vector(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x}"),
            Value::Index(i) => write!(f, "{i}"),
            Value::Vector(v) => write!(f, "{v:?}"),
        }
    }
}

/// A distribution with numeric parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Dist {
    Normal { mu: f64, sigma: f64 },
    Laplace { mu: f64, b: f64 },
    Bernoulli { p: f64 },
    Categorical { probs: Vec<f64> },
    Binomial { n: u64, p: f64 },
    Uniform { low: f64, high: f64 },
    /// Mean-and-pseudocount parameterization: success rate `p0` and pseudocount `n`.
    Beta { p0: f64, n: f64 },
    Gamma { shape: f64, scale: f64 },
    /// Mean vector `p0` and total pseudocount `n`.
    Dirichlet { p0: Vec<f64>, n: f64 },
    Const { value: f64 },
}

fn invalid(family: Family, detail: impl Into<String>) -> DistError {
    DistError::InvalidParameters {
        family,
        detail: detail.into(),
    }
}

impl Dist {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self, DistError> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return Err(invalid(Family::Normal, format!("sigma must be positive, got {sigma}")));
        }
        Ok(Dist::Normal { mu, sigma })
    }

    pub fn laplace(mu: f64, b: f64) -> Result<Self, DistError> {
        if !(b > 0.0) || !mu.is_finite() || !b.is_finite() {
            return Err(invalid(Family::Laplace, format!("b must be positive, got {b}")));
        }
        Ok(Dist::Laplace { mu, b })
    }

    pub fn bernoulli(p: f64) -> Result<Self, DistError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(Family::Bernoulli, format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Dist::Bernoulli { p })
    }

    pub fn categorical(probs: Vec<f64>) -> Result<Self, DistError> {
        check_simplex(&probs).map_err(|e| invalid(Family::Categorical, e))?;
        Ok(Dist::Categorical { probs })
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self, DistError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(Family::Binomial, format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Dist::Binomial { n, p })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self, DistError> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(invalid(Family::Uniform, "need finite l < u"));
        }
        Ok(Dist::Uniform { low, high })
    }

    /// Beta in `(p0, n)` form.
    pub fn beta(p0: f64, n: f64) -> Result<Self, DistError> {
        if !(0.0..=1.0).contains(&p0) || !(n >= 0.0) || !n.is_finite() {
            return Err(invalid(Family::Beta, "need p0 in [0, 1] and n >= 0"));
        }
        Ok(Dist::Beta { p0, n })
    }

    /// Beta in traditional `(alpha, beta)` form.
    pub fn beta_from_counts(alpha: f64, beta: f64) -> Result<Self, DistError> {
        if !(alpha >= 0.0) || !(beta >= 0.0) || alpha + beta <= 0.0 {
            return Err(invalid(Family::Beta, "need alpha, beta >= 0 with a positive sum"));
        }
        let n = alpha + beta;
        Dist::beta(alpha / n, n)
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self, DistError> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(invalid(Family::Gamma, "shape and scale must be positive"));
        }
        Ok(Dist::Gamma { shape, scale })
    }

    pub fn dirichlet(p0: Vec<f64>, n: f64) -> Result<Self, DistError> {
        check_simplex(&p0).map_err(|e| invalid(Family::Dirichlet, e))?;
        if !(n >= 0.0) || !n.is_finite() {
            return Err(invalid(Family::Dirichlet, "pseudocount must be non-negative"));
        }
        Ok(Dist::Dirichlet { p0, n })
    }

    pub fn dirichlet_from_counts(alpha: &[f64]) -> Result<Self, DistError> {
        if alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(invalid(Family::Dirichlet, "pseudocounts must be non-negative"));
        }
        let n: f64 = alpha.iter().sum();
        if n <= 0.0 {
            return Err(invalid(Family::Dirichlet, "total pseudocount must be positive"));
        }
        Dist::dirichlet(alpha.iter().map(|a| a / n).collect(), n)
    }

    pub fn family(&self) -> Family {
        match self {
            Dist::Normal { .. } => Family::Normal,
            Dist::Laplace { .. } => Family::Laplace,
            Dist::Bernoulli { .. } => Family::Bernoulli,
            Dist::Categorical { .. } => Family::Categorical,
            Dist::Binomial { .. } => Family::Binomial,
            Dist::Uniform { .. } => Family::Uniform,
            Dist::Beta { .. } => Family::Beta,
            Dist::Gamma { .. } => Family::Gamma,
            Dist::Dirichlet { .. } => Family::Dirichlet,
            Dist::Const { .. } => Family::Const,
        }
    }

    /// `(alpha, beta)` of a Beta; `None` for other families.
    pub fn beta_counts(&self) -> Option<(f64, f64)> {
        match self {
            Dist::Beta { p0, n } => Some((p0 * n, (1.0 - p0) * n)),
            _ => None,
        }
    }

    pub fn dirichlet_counts(&self) -> Option<Vec<f64>> {
        match self {
            Dist::Dirichlet { p0, n } => Some(p0.iter().map(|p| p * n).collect()),
            _ => None,
        }
    }

    fn proper_counts(&self) -> Result<Vec<f64>, DistError> {
        let counts = match self {
            Dist::Beta { .. } => {
                let (a, b) = self.beta_counts().unwrap();
                vec![a, b]
            }
            Dist::Dirichlet { .. } => self.dirichlet_counts().unwrap(),
            _ => unreachable!("only called for Beta and Dirichlet"),
        };
        if counts.iter().any(|&c| !(c > 0.0)) {
            return Err(invalid(
                self.family(),
                "density requires strictly positive pseudocounts",
            ));
        }
        Ok(counts)
    }

    /// Natural-log density or mass. Returns `-inf` for zero-mass points in
    /// the support.
    pub fn log_prob(&self, x: &Value) -> Result<f64, DistError> {
        let family = self.family();
        let outside = || DistError::OutsideSupport {
            family,
            value: x.to_string(),
        };
        Ok(match self {
            Dist::Normal { mu, sigma } => {
                let x = real(x).ok_or_else(outside)?;
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Dist::Laplace { mu, b } => {
                let x = real(x).ok_or_else(outside)?;
                -(x - mu).abs() / b - (2.0 * b).ln()
            }
            Dist::Bernoulli { p } => match x.as_index() {
                Some(1) => p.ln(),
                Some(0) => (1.0 - p).ln(),
                _ => return Err(outside()),
            },
            Dist::Categorical { probs } => {
                let i = x.as_index().filter(|&i| i < probs.len()).ok_or_else(outside)?;
                probs[i].ln()
            }
            Dist::Binomial { n, p } => {
                let k = x.as_index().filter(|&k| k as u64 <= *n).ok_or_else(outside)? as u64;
                let log_choose = ln_gamma(*n as f64 + 1.0)
                    - ln_gamma(k as f64 + 1.0)
                    - ln_gamma((*n - k) as f64 + 1.0);
                let succ = if k == 0 { 0.0 } else { k as f64 * p.ln() };
                let fail = if k == *n { 0.0 } else { (*n - k) as f64 * (1.0 - p).ln() };
                log_choose + succ + fail
            }
            Dist::Uniform { low, high } => {
                let x = real(x).ok_or_else(outside)?;
                if x < *low || x > *high {
                    return Err(outside());
                }
                -(high - low).ln()
            }
            Dist::Beta { .. } => {
                let x = real(x).filter(|x| (0.0..=1.0).contains(x)).ok_or_else(outside)?;
                let c = self.proper_counts()?;
                let (a, b) = (c[0], c[1]);
                xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x) - ln_beta(a, b)
            }
            Dist::Gamma { shape, scale } => {
                let x = real(x).filter(|x| *x >= 0.0).ok_or_else(outside)?;
                xlogy(shape - 1.0, x) - x / scale - ln_gamma(*shape) - shape * scale.ln()
            }
            Dist::Dirichlet { p0, .. } => {
                let v = match x {
                    Value::Vector(v) if v.len() == p0.len() => v,
                    _ => return Err(outside()),
                };
                if check_simplex(v).is_err() {
                    return Err(outside());
                }
                let alpha = self.proper_counts()?;
                let a0: f64 = alpha.iter().sum();
                let norm = ln_gamma(a0) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
                norm + alpha
                    .iter()
                    .zip(v)
                    .map(|(&a, &xi)| xlogy(a - 1.0, xi))
                    .sum::<f64>()
            }
            Dist::Const { value } => {
                let x = real(x).ok_or_else(outside)?;
                if x == *value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        })
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> Result<f64, DistError> {
        Ok(match self {
            Dist::Normal { sigma, .. } => {
                0.5 + (2.0 * std::f64::consts::PI * sigma * sigma).sqrt().ln()
            }
            Dist::Laplace { b, .. } => 1.0 + (2.0 * b).ln(),
            Dist::Bernoulli { p } => -(xlogx(*p) + xlogx(1.0 - p)),
            Dist::Categorical { probs } => -probs.iter().map(|&p| xlogx(p)).sum::<f64>(),
            Dist::Uniform { low, high } => (high - low).ln(),
            Dist::Beta { .. } => {
                let c = self.proper_counts()?;
                let (a, b) = (c[0], c[1]);
                ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b)
                    + (a + b - 2.0) * digamma(a + b)
            }
            Dist::Gamma { shape, scale } => {
                shape + scale.ln() + ln_gamma(*shape) + (1.0 - shape) * digamma(*shape)
            }
            Dist::Dirichlet { .. } => {
                let a = self.proper_counts()?;
                let a0: f64 = a.iter().sum();
                let k = a.len() as f64;
                let ln_b = a.iter().map(|&x| ln_gamma(x)).sum::<f64>() - ln_gamma(a0);
                ln_b + (a0 - k) * digamma(a0) - a.iter().map(|&x| (x - 1.0) * digamma(x)).sum::<f64>()
            }
            _ => {
                return Err(DistError::Unsupported {
                    family: self.family(),
                    op: "entropy",
                })
            }
        })
    }

    /// Draws `n` samples from a generator seeded with `seed`.
    pub fn sample(&self, seed: u64, n: usize) -> Result<Vec<Value>, DistError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Value, DistError> {
        let bad = |e: String| invalid(self.family(), e);
        Ok(match self {
            Dist::Normal { mu, sigma } => Value::Real(
                rand_distr::Normal::new(*mu, *sigma)
                    .map_err(|e| bad(e.to_string()))?
                    .sample(rng),
            ),
            Dist::Laplace { mu, b } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                Value::Real(mu - b * u.signum() * (1.0 - 2.0 * u.abs()).ln())
            }
            Dist::Bernoulli { p } => Value::Index(usize::from(rng.random::<f64>() < *p)),
            Dist::Categorical { probs } => Value::Index(sample_index(probs, rng)),
            Dist::Uniform { low, high } => Value::Real(low + (high - low) * rng.random::<f64>()),
            Dist::Beta { .. } => {
                let c = self.proper_counts()?;
                Value::Real(
                    rand_distr::Beta::new(c[0], c[1])
                        .map_err(|e| bad(e.to_string()))?
                        .sample(rng),
                )
            }
            Dist::Gamma { shape, scale } => Value::Real(
                rand_distr::Gamma::new(*shape, *scale)
                    .map_err(|e| bad(e.to_string()))?
                    .sample(rng),
            ),
            Dist::Dirichlet { .. } => {
                let alpha = self.proper_counts()?;
                let draws: Vec<f64> = alpha
                    .iter()
                    .map(|&a| {
                        rand_distr::Gamma::new(a, 1.0)
                            .map(|g| g.sample(rng))
                            .map_err(|e| bad(e.to_string()))
                    })
                    .collect::<Result<_, _>>()?;
                let total: f64 = draws.iter().sum();
                Value::Vector(draws.iter().map(|g| g / total).collect())
            }
            Dist::Const { value } => Value::Real(*value),
            Dist::Binomial { .. } => {
                return Err(DistError::Unsupported {
                    family: Family::Binomial,
                    op: "sample",
                })
            }
        })
    }

    /// Support of a discrete distribution as enumerable indices.
    pub fn discrete_support(&self) -> Option<usize> {
        match self {
            Dist::Bernoulli { .. } => Some(2),
            Dist::Categorical { probs } => Some(probs.len()),
            Dist::Binomial { n, .. } => Some(*n as usize + 1),
            _ => None,
        }
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum: last category with mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn real(x: &Value) -> Option<f64> {
    match x {
        Value::Real(v) => Some(*v),
        _ => None,
    }
}

fn xlogx(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

/// `a * ln(y)` with the convention `0 * ln(0) = 0`.
fn xlogy(a: f64, y: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * y.ln()
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn ensure_same(q: &Dist, p: &Dist) -> Result<(), DistError> {
    if q.family() != p.family() {
        return Err(DistError::FamilyMismatch(q.family(), p.family()));
    }
    let same_support = match (q, p) {
        (Dist::Categorical { probs: a }, Dist::Categorical { probs: b }) => a.len() == b.len(),
        (Dist::Dirichlet { p0: a, .. }, Dist::Dirichlet { p0: b, .. }) => a.len() == b.len(),
        (Dist::Uniform { low: a, high: b }, Dist::Uniform { low: c, high: d }) => a == c && b == d,
        _ => true,
    };
    if !same_support {
        return Err(DistError::SupportMismatch(q.family()));
    }
    Ok(())
}

/// KL(q || p) in closed form.
pub fn kl(q: &Dist, p: &Dist) -> Result<f64, DistError> {
    ensure_same(q, p)?;
    Ok(match (q, p) {
        (Dist::Normal { mu: mq, sigma: sq }, Dist::Normal { mu: mp, sigma: sp }) => {
            (sp / sq).ln() + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5
        }
        (Dist::Bernoulli { p: a }, Dist::Bernoulli { p: b }) => {
            discrete_kl(&[1.0 - a, *a], &[1.0 - b, *b])
        }
        (Dist::Categorical { probs: a }, Dist::Categorical { probs: b }) => discrete_kl(a, b),
        (Dist::Beta { .. }, Dist::Beta { .. }) | (Dist::Dirichlet { .. }, Dist::Dirichlet { .. }) => {
            let a = q.proper_counts()?;
            let b = p.proper_counts()?;
            let a0: f64 = a.iter().sum();
            let b0: f64 = b.iter().sum();
            let mut out = ln_gamma(a0) - ln_gamma(b0);
            for (&ai, &bi) in a.iter().zip(&b) {
                out += ln_gamma(bi) - ln_gamma(ai) + (ai - bi) * (digamma(ai) - digamma(a0));
            }
            out
        }
        _ => {
            return Err(DistError::Unsupported {
                family: q.family(),
                op: "kl",
            })
        }
    })
}

fn discrete_kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| {
            if qi == 0.0 {
                0.0
            } else if pi == 0.0 {
                f64::INFINITY
            } else {
                qi * (qi / pi).ln()
            }
        })
        .sum()
}

/// Cross entropy `-E_q[log p]` in closed form, computed directly rather than
/// via `entropy + kl`.
pub fn cross_entropy(q: &Dist, p: &Dist) -> Result<f64, DistError> {
    ensure_same(q, p)?;
    let neg_xlogy = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            -a * b.ln()
        }
    };
    Ok(match (q, p) {
        (Dist::Normal { mu: mq, sigma: sq }, Dist::Normal { mu: mp, sigma: sp }) => {
            (2.0 * std::f64::consts::PI * sp * sp).sqrt().ln()
                + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp)
        }
        (Dist::Bernoulli { p: a }, Dist::Bernoulli { p: b }) => {
            neg_xlogy(*a, *b) + neg_xlogy(1.0 - a, 1.0 - b)
        }
        (Dist::Categorical { probs: a }, Dist::Categorical { probs: b }) => {
            a.iter().zip(b).map(|(&x, &y)| neg_xlogy(x, y)).sum()
        }
        (Dist::Beta { .. }, Dist::Beta { .. }) | (Dist::Dirichlet { .. }, Dist::Dirichlet { .. }) => {
            let a = q.proper_counts()?;
            let b = p.proper_counts()?;
            let a0: f64 = a.iter().sum();
            let b0: f64 = b.iter().sum();
            let log_norm = b.iter().map(|&bi| ln_gamma(bi)).sum::<f64>() - ln_gamma(b0);
            log_norm
                - a.iter()
                    .zip(&b)
                    .map(|(&ai, &bi)| (bi - 1.0) * (digamma(ai) - digamma(a0)))
                    .sum::<f64>()
        }
        _ => {
            return Err(DistError::Unsupported {
                family: q.family(),
                op: "cross_entropy",
            })
        }
    })
}

/// A parameter that is either numeric or an opaque symbol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Symbol(String),
}

impl ParamValue {
    fn to_expr(&self) -> Expr {
        match self {
            ParamValue::Scalar(v) => Expr::Num(*v),
            ParamValue::Symbol(s) => Expr::Sym(s.clone()),
            ParamValue::Vector(v) => Expr::Sym(format!(
                "[{}]",
                v.iter().map(|x| expr::format_number(*x)).collect::<Vec<_>>().join(", ")
            )),
        }
    }

    fn scalar(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }
}

/// A family with parameters that may be symbolic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionInstance {
    pub family: Family,
    pub params: Vec<ParamValue>,
}

impl DistributionInstance {
    pub fn new(family: Family, params: Vec<ParamValue>) -> Self {
        Self { family, params }
    }

    /// Builds an instance from a DSL distribution; conditional tables are
    /// not accepted here (pick a row first).
    pub fn from_spec(spec: &DistributionSpec) -> Self {
        let params = spec
            .params
            .iter()
            .map(|p| match p {
                Param::Number(v) => ParamValue::Scalar(*v),
                Param::Symbol(s) => ParamValue::Symbol(s.clone()),
                Param::Call { name, args } => ParamValue::Symbol(format!("{name}({})", args.join(", "))),
                Param::Table { parents, values } if parents.is_empty() => match values.as_vector() {
                    Some(v) => ParamValue::Vector(v),
                    None => ParamValue::Symbol("table".into()),
                },
                Param::Table { parents, .. } => ParamValue::Symbol(format!("table({})", parents.join(", "))),
            })
            .collect();
        Self {
            family: spec.family,
            params,
        }
    }

    pub fn is_numeric(&self) -> bool {
        !self.params.iter().any(|p| matches!(p, ParamValue::Symbol(_)))
    }

    /// Numeric form of the instance.
    pub fn to_dist(&self) -> Result<Dist, DistError> {
        if !self.is_numeric() {
            return Err(DistError::Symbolic(self.family));
        }
        let expected = self.family.descriptor().params.len();
        if self.params.len() != expected {
            return Err(invalid(
                self.family,
                format!("expected {expected} parameter(s), found {}", self.params.len()),
            ));
        }
        let s = |i: usize| {
            self.params[i]
                .scalar()
                .ok_or_else(|| invalid(self.family, format!("parameter {i} must be a scalar")))
        };
        let v = |i: usize| match &self.params[i] {
            ParamValue::Vector(v) => Ok(v.clone()),
            _ => Err(invalid(self.family, format!("parameter {i} must be a vector"))),
        };
        match self.family {
            Family::Normal => Dist::normal(s(0)?, s(1)?),
            Family::Laplace => Dist::laplace(s(0)?, s(1)?),
            Family::Bernoulli => Dist::bernoulli(s(0)?),
            Family::Categorical => Dist::categorical(v(0)?),
            Family::Binomial => {
                let n = s(0)?;
                if n < 0.0 || n.fract() != 0.0 {
                    return Err(invalid(Family::Binomial, "n must be a non-negative integer"));
                }
                Dist::binomial(n as u64, s(1)?)
            }
            Family::Uniform => Dist::uniform(s(0)?, s(1)?),
            Family::Beta => Dist::beta(s(0)?, s(1)?),
            Family::Gamma => Dist::gamma(s(0)?, s(1)?),
            Family::Dirichlet => Dist::dirichlet(v(0)?, s(1)?),
            Family::Const => Ok(Dist::Const { value: s(0)? }),
            other => Err(DistError::Unsupported {
                family: other,
                op: "numeric evaluation",
            }),
        }
    }

    pub fn log_prob(&self, x: &Value) -> Result<f64, DistError> {
        self.to_dist()?.log_prob(x)
    }

    pub fn entropy(&self) -> Result<f64, DistError> {
        self.to_dist()?.entropy()
    }

    pub fn sample(&self, seed: u64, n: usize) -> Result<Vec<Value>, DistError> {
        self.to_dist()?.sample(seed, n)
    }

    fn param_expr(&self, i: usize) -> Result<Expr, DistError> {
        self.params
            .get(i)
            .map(ParamValue::to_expr)
            .ok_or_else(|| invalid(self.family, format!("missing parameter {i}")))
    }
}

impl From<Dist> for DistributionInstance {
    fn from(d: Dist) -> Self {
        use ParamValue::{Scalar, Vector};
        let (family, params) = match d {
            Dist::Normal { mu, sigma } => (Family::Normal, vec![Scalar(mu), Scalar(sigma)]),
            Dist::Laplace { mu, b } => (Family::Laplace, vec![Scalar(mu), Scalar(b)]),
            Dist::Bernoulli { p } => (Family::Bernoulli, vec![Scalar(p)]),
            Dist::Categorical { probs } => (Family::Categorical, vec![Vector(probs)]),
            Dist::Binomial { n, p } => (Family::Binomial, vec![Scalar(n as f64), Scalar(p)]),
            Dist::Uniform { low, high } => (Family::Uniform, vec![Scalar(low), Scalar(high)]),
            Dist::Beta { p0, n } => (Family::Beta, vec![Scalar(p0), Scalar(n)]),
            Dist::Gamma { shape, scale } => (Family::Gamma, vec![Scalar(shape), Scalar(scale)]),
            Dist::Dirichlet { p0, n } => (Family::Dirichlet, vec![Vector(p0), Scalar(n)]),
            Dist::Const { value } => (Family::Const, vec![Scalar(value)]),
        };
        Self { family, params }
    }
}

/// KL divergence that is numeric when both sides are, symbolic otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum KlValue {
    Numeric(f64),
    Symbolic(Expr),
}

/// KL(q || p) for instances of the same family.
pub fn kl_instances(q: &DistributionInstance, p: &DistributionInstance) -> Result<KlValue, DistError> {
    if q.family != p.family {
        return Err(DistError::FamilyMismatch(q.family, p.family));
    }
    if q.is_numeric() && p.is_numeric() {
        return kl(&q.to_dist()?, &p.to_dist()?).map(KlValue::Numeric);
    }
    use expr::*;
    let e = match q.family {
        Family::Normal => {
            let (mq, sq, mp, sp) = (q.param_expr(0)?, q.param_expr(1)?, p.param_expr(0)?, p.param_expr(1)?);
            add(vec![
                log(div(sp.clone(), sq.clone())),
                div(
                    add(vec![pow(sq, 2), pow(sub(mq, mp), 2)]),
                    mul(vec![num(2.0), pow(sp, 2)]),
                ),
                neg(num(0.5)),
            ])
        }
        Family::Bernoulli => {
            let (a, b) = (q.param_expr(0)?, p.param_expr(0)?);
            let one_minus = |e: Expr| sub(num(1.0), e);
            add(vec![
                mul(vec![a.clone(), log(div(a.clone(), b.clone()))]),
                mul(vec![
                    one_minus(a.clone()),
                    log(div(one_minus(a), one_minus(b))),
                ]),
            ])
        }
        Family::Categorical => {
            let idx = |e: Expr| Expr::Indexed {
                base: Box::new(e),
                index: "j".into(),
            };
            let (a, b) = (q.param_expr(0)?, p.param_expr(0)?);
            Expr::Sum {
                index: "j".into(),
                count: None,
                body: Box::new(mul(vec![idx(a.clone()), log(div(idx(a), idx(b)))])),
            }
        }
        Family::Beta => {
            // Written in (p0, n) form: alpha = p0*n, beta = (1-p0)*n.
            let counts = |d: &DistributionInstance| -> Result<(Expr, Expr, Expr), DistError> {
                let (p0, n) = (d.param_expr(0)?, d.param_expr(1)?);
                Ok((
                    mul(vec![p0.clone(), n.clone()]),
                    mul(vec![sub(num(1.0), p0), n.clone()]),
                    n,
                ))
            };
            let (a1, b1, n1) = counts(q)?;
            let (a2, b2, n2) = counts(p)?;
            add(vec![
                func("lbeta", vec![a2.clone(), b2.clone()]),
                neg(func("lbeta", vec![a1.clone(), b1.clone()])),
                mul(vec![sub(a1.clone(), a2), func("digamma", vec![a1])]),
                mul(vec![sub(b1.clone(), b2), func("digamma", vec![b1])]),
                mul(vec![sub(n2, n1.clone()), func("digamma", vec![n1])]),
            ])
        }
        Family::Dirichlet => {
            let alpha = |d: &DistributionInstance| -> Result<Expr, DistError> {
                Ok(mul(vec![
                    Expr::Indexed {
                        base: Box::new(d.param_expr(0)?),
                        index: "j".into(),
                    },
                    d.param_expr(1)?,
                ]))
            };
            let (a, b) = (alpha(q)?, alpha(p)?);
            let (n1, n2) = (q.param_expr(1)?, p.param_expr(1)?);
            add(vec![
                func("lgamma", vec![n1.clone()]),
                neg(func("lgamma", vec![n2])),
                Expr::Sum {
                    index: "j".into(),
                    count: None,
                    body: Box::new(add(vec![
                        func("lgamma", vec![b.clone()]),
                        neg(func("lgamma", vec![a.clone()])),
                        mul(vec![
                            sub(a.clone(), b),
                            sub(func("digamma", vec![a]), func("digamma", vec![n1])),
                        ]),
                    ])),
                },
            ])
        }
        other => {
            return Err(DistError::Unsupported {
                family: other,
                op: "kl",
            })
        }
    };
    Ok(KlValue::Symbolic(e))
}

/// Negative log-likelihood `-log p(var)` as a formula. With
/// `elide_constants`, additive terms that depend on neither the variable
/// nor the location parameter are replaced by `const`.
pub fn nll_formula(d: &DistributionInstance, var: &str, elide_constants: bool) -> Result<Expr, DistError> {
    use expr::*;
    let x = sym(var);
    let (formula, keep): (Expr, Vec<String>) = match d.family {
        Family::Normal => {
            let (mu, sigma) = (d.param_expr(0)?, d.param_expr(1)?);
            // Same operation order as the log-density, so the two agree bitwise.
            let f = add(vec![
                div(pow(div(sub(x, mu.clone()), sigma.clone()), 2), num(2.0)),
                log(sigma),
                div(log(mul(vec![num(2.0), Expr::Pi])), num(2.0)),
            ]);
            (f, vec![var.to_string(), mu.to_text()])
        }
        Family::Laplace => {
            let (mu, b) = (d.param_expr(0)?, d.param_expr(1)?);
            let f = add(vec![
                div(abs(sub(x, mu.clone())), b.clone()),
                log(mul(vec![num(2.0), b])),
            ]);
            (f, vec![var.to_string(), mu.to_text()])
        }
        Family::Bernoulli => {
            let p = d.param_expr(0)?;
            let ind = |v: &str| Expr::Indicator {
                var: var.to_string(),
                value: v.to_string(),
            };
            let f = neg(add(vec![
                mul(vec![ind("1"), log(p.clone())]),
                mul(vec![ind("0"), log(sub(num(1.0), p))]),
            ]));
            (f, vec![var.to_string()])
        }
        Family::Categorical => {
            let p = d.param_expr(0)?;
            let count = match &d.params[0] {
                ParamValue::Vector(v) => Some(v.len()),
                _ => None,
            };
            let f = neg(Expr::Sum {
                index: "j".into(),
                count,
                body: Box::new(mul(vec![
                    Expr::Indicator {
                        var: var.to_string(),
                        value: "j".into(),
                    },
                    log(Expr::Indexed {
                        base: Box::new(p),
                        index: "j".into(),
                    }),
                ])),
            });
            (f, vec![var.to_string()])
        }
        other => {
            return Err(DistError::Unsupported {
                family: other,
                op: "nll_formula",
            })
        }
    };
    if elide_constants {
        let keep: Vec<&str> = keep.iter().map(String::as_str).collect();
        Ok(formula.fold().elide_constants(&keep))
    } else {
        Ok(formula)
    }
}

/// Constraint tags for maximum-entropy selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Constraint {
    Mean,
    Variance,
    MeanAbsDeviation,
    MeanLog,
    VarianceLog,
}

impl FromStr for Constraint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Constraint::Mean),
            "variance" | "var" => Ok(Constraint::Variance),
            "mean-abs-dev" | "mad" => Ok(Constraint::MeanAbsDeviation),
            "mean-log" => Ok(Constraint::MeanLog),
            "variance-log" | "var-log" => Ok(Constraint::VarianceLog),
            other => Err(other.to_string()),
        }
    }
}

/// Maximum-entropy family for a support under the given moment constraints.
pub fn max_entropy_lookup(support: SupportKind, constraints: &[Constraint]) -> Option<Family> {
    use Constraint::*;
    let mut set: Vec<Constraint> = constraints.to_vec();
    set.sort_unstable();
    set.dedup();
    match (support, set.as_slice()) {
        (SupportKind::Real, [Mean, Variance]) => Some(Family::Normal),
        (SupportKind::Real, [Mean, MeanAbsDeviation]) => Some(Family::Laplace),
        (SupportKind::PositiveReal, [Mean, MeanLog]) => Some(Family::Gamma),
        (SupportKind::PositiveReal, [MeanLog, VarianceLog]) => Some(Family::LogNormal),
        (SupportKind::Interval | SupportKind::UnitInterval, []) => Some(Family::Uniform),
        (SupportKind::Interval | SupportKind::UnitInterval, [Mean, Variance]) => {
            Some(Family::TruncatedNormal)
        }
        (SupportKind::Finite, []) => Some(Family::Categorical),
        (SupportKind::Boolean, []) => Some(Family::Bernoulli),
        _ => None,
    }
}

/// Conjugate prior for a generative family. Parameter-specific tags
/// (`Normal-mean`, `Normal-variance`, `Uniform-bound`) select the prior of
/// that parameter.
pub fn conjugate_prior_of(tag: &str) -> Option<Family> {
    match tag.trim().to_ascii_lowercase().as_str() {
        "bernoulli" | "binomial" => Some(Family::Beta),
        "categorical" => Some(Family::Dirichlet),
        "normal" | "normal-mean" => Some(Family::Normal),
        "normal-variance" => Some(Family::ScaledInvChiSq),
        "uniform" | "uniform-bound" => Some(Family::Pareto),
        _ => None,
    }
}
