//! Symbolic ELBO derivation.
//!
//! A selection Q' of guides, each matched to the generative factor over the
//! same variable block, splits the generative factors into P1 (matched
//! latent), P2 (unmatched latent) and P3 (observed). The bound is
//!
//! ```text
//! E_{P2 u Q'} [ sum_{P3} log p + sum_{P1} log p/q ]
//! ```
//!
//! Each term is printed under the smallest expectation it needs. A ratio
//! term whose conditioning variables do not depend on its own block becomes
//! a KL divergence; otherwise it stays a log-ratio under the expectation.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::DeriveError;
use crate::expr::{latex_ident, Syntax};
use crate::model::{stable_toposort, Factor, GraphicalModel};

/// A subset of guides together with the generative factor each one replaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QPrimeSelection {
    /// Guide indices in declaration order.
    pub chosen: Vec<usize>,
    /// `(guide, generative)` index pairs, one per chosen guide.
    pub matching: Vec<(usize, usize)>,
}

impl QPrimeSelection {
    pub fn empty() -> Self {
        Self {
            chosen: Vec::new(),
            matching: Vec::new(),
        }
    }

    /// Selection from guide indices; fails if a guide has no match or two
    /// guides replace the same factor.
    pub fn from_guides(model: &GraphicalModel, guides: &[usize]) -> Result<Self, DeriveError> {
        let mut chosen: Vec<usize> = guides.to_vec();
        chosen.sort_unstable();
        chosen.dedup();
        let mut matching = Vec::new();
        let mut used = BTreeSet::new();
        for &g in &chosen {
            let guide = model
                .guides
                .get(g)
                .ok_or_else(|| DeriveError::InvalidSelection(format!("no guide with index {g}")))?;
            let p = match_for(model, guide).ok_or_else(|| {
                DeriveError::InvalidSelection(format!(
                    "{} matches no latent generative factor",
                    model.guide_label(g)
                ))
            })?;
            if !used.insert(p) {
                return Err(DeriveError::InvalidSelection(format!(
                    "more than one guide replaces {}",
                    model.generative_label(p)
                )));
            }
            matching.push((g, p));
        }
        Ok(Self { chosen, matching })
    }

    /// Selection from guide labels such as `q(z|x)`; whitespace is ignored.
    pub fn from_labels(model: &GraphicalModel, labels: &[&str]) -> Result<Self, DeriveError> {
        let norm = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        let mut indices = Vec::new();
        for label in labels {
            let wanted = norm(label);
            let i = (0..model.guides.len())
                .find(|&i| norm(&model.guide_label(i)) == wanted)
                .ok_or_else(|| DeriveError::InvalidSelection(format!("unknown guide {label}")))?;
            indices.push(i);
        }
        Self::from_guides(model, &indices)
    }

    pub fn labels(&self, model: &GraphicalModel) -> Vec<String> {
        self.chosen.iter().map(|&g| model.guide_label(g)).collect()
    }

    fn replaced(&self, generative: usize) -> Option<usize> {
        self.matching
            .iter()
            .find(|(_, p)| *p == generative)
            .map(|(g, _)| *g)
    }
}

/// Generative factor over exactly the guide's target block, if that block is
/// latent.
fn match_for(model: &GraphicalModel, guide: &Factor) -> Option<usize> {
    let p = model.generative_for(&guide.target_set())?;
    model.generative[p]
        .target
        .iter()
        .all(|t| model.is_latent(t))
        .then_some(p)
}

/// Guides that can take part in some selection, in declaration order.
pub fn matchable_guides(model: &GraphicalModel) -> Vec<usize> {
    (0..model.guides.len())
        .filter(|&g| match_for(model, &model.guides[g]).is_some())
        .collect()
}

/// Every admissible Q', ordered by bitmask over the matchable guides. A
/// subset with two guides for the same block is skipped.
pub fn enumerate_qprime(model: &GraphicalModel) -> Vec<QPrimeSelection> {
    let matchable = matchable_guides(model);
    assert!(matchable.len() < 32, "too many guides to enumerate");
    let mut out = Vec::new();
    for mask in 0u32..(1 << matchable.len()) {
        let chosen: Vec<usize> = matchable
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &g)| g)
            .collect();
        if let Ok(sel) = QPrimeSelection::from_guides(model, &chosen) {
            out.push(sel);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorPartition {
    pub p1: Vec<usize>,
    pub p2: Vec<usize>,
    pub p3: Vec<usize>,
}

pub fn partition(model: &GraphicalModel, sel: &QPrimeSelection) -> FactorPartition {
    let mut out = FactorPartition {
        p1: Vec::new(),
        p2: Vec::new(),
        p3: Vec::new(),
    };
    for (i, f) in model.generative.iter().enumerate() {
        if f.target.iter().all(|t| model.is_observed(t)) {
            out.p3.push(i);
        } else if sel.replaced(i).is_some() {
            out.p1.push(i);
        } else {
            out.p2.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FactorSide {
    Generative,
    Guide,
}

/// A factor as it appears in an expression, self-contained for printing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorRef {
    pub side: FactorSide,
    pub index: usize,
    pub symbol: String,
    pub target: Vec<String>,
    pub parents: Vec<String>,
}

impl FactorRef {
    fn new(model: &GraphicalModel, side: FactorSide, index: usize) -> Self {
        let (f, symbol) = match side {
            FactorSide::Generative => (&model.generative[index], &model.notation.generative),
            FactorSide::Guide => (&model.guides[index], &model.notation.guide),
        };
        Self {
            side,
            index,
            symbol: symbol.clone(),
            target: f.target.clone(),
            parents: f.parents.clone(),
        }
    }

    pub fn label(&self) -> String {
        self.render(Syntax::Text)
    }

    pub fn render(&self, syntax: Syntax) -> String {
        let names = |v: &[String]| -> String {
            match syntax {
                Syntax::Text => v.join(","),
                Syntax::Latex => v.iter().map(|s| latex_ident(s)).collect::<Vec<_>>().join(","),
            }
        };
        if self.parents.is_empty() {
            format!("{}({})", self.symbol, names(&self.target))
        } else {
            format!("{}({}|{})", self.symbol, names(&self.target), names(&self.parents))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RatioTag {
    ProperKl,
    NestedExpectationRatio,
}

/// `E_context[log p]` for an observed factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconstructionTerm {
    pub factor: FactorRef,
    pub context: Vec<FactorRef>,
}

/// `E_context[log p/q]` for a matched latent block; when tagged as a KL the
/// block itself is integrated out in closed form and the term reads
/// `-E_context[KL(q || p)]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RatioTerm {
    pub tag: RatioTag,
    pub p: FactorRef,
    pub q: FactorRef,
    pub context: Vec<FactorRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ElboExpression {
    pub model: String,
    pub selection: Vec<String>,
    pub sampling_measure: Vec<FactorRef>,
    pub reconstruction_terms: Vec<ReconstructionTerm>,
    pub ratio_terms: Vec<RatioTerm>,
}

/// Sampling measure P2 u Q' as `(side, index)` in dependency order, ties
/// broken by the declaration order of the sampled variable.
fn sampling_measure(
    model: &GraphicalModel,
    part: &FactorPartition,
    sel: &QPrimeSelection,
) -> Result<Vec<FactorRef>, DeriveError> {
    let mut entries: Vec<FactorRef> = part
        .p2
        .iter()
        .map(|&i| FactorRef::new(model, FactorSide::Generative, i))
        .chain(
            sel.chosen
                .iter()
                .map(|&g| FactorRef::new(model, FactorSide::Guide, g)),
        )
        .collect();
    let key = |f: &FactorRef| {
        f.target
            .iter()
            .filter_map(|t| model.variable_index(t))
            .min()
            .unwrap_or(usize::MAX)
    };
    entries.sort_by_key(key);
    let producer: HashMap<&str, usize> = entries
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.target.iter().map(move |t| (t.as_str(), i)))
        .collect();
    let deps: Vec<BTreeSet<usize>> = entries
        .iter()
        .map(|f| {
            f.parents
                .iter()
                .filter_map(|p| producer.get(p.as_str()).copied())
                .collect()
        })
        .collect();
    let order = stable_toposort(&deps).ok_or_else(|| {
        let names: Vec<String> = entries.iter().map(FactorRef::label).collect();
        DeriveError::CyclicMeasure(names.join(", "))
    })?;
    Ok(order.into_iter().map(|i| entries[i].clone()).collect())
}

/// Helper over a sampling measure: which entry samples which variable.
struct Measure<'a> {
    entries: &'a [FactorRef],
    producer: HashMap<&'a str, usize>,
}

impl<'a> Measure<'a> {
    fn new(entries: &'a [FactorRef]) -> Self {
        let producer = entries
            .iter()
            .enumerate()
            .flat_map(|(i, f)| f.target.iter().map(move |t| (t.as_str(), i)))
            .collect();
        Self { entries, producer }
    }

    /// Entries needed to sample `vars`, including their ancestors, as
    /// indices in measure order.
    fn closure<'b>(&self, vars: impl IntoIterator<Item = &'b str>) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<usize> = vars
            .into_iter()
            .filter_map(|v| self.producer.get(v).copied())
            .collect();
        while let Some(i) = stack.pop() {
            if out.insert(i) {
                for p in &self.entries[i].parents {
                    if let Some(&j) = self.producer.get(p.as_str()) {
                        stack.push(j);
                    }
                }
            }
        }
        out
    }

    /// Variables sampled by entries that (transitively) condition on any of
    /// `block`.
    fn descendants(&self, block: &[String]) -> BTreeSet<&'a str> {
        let mut tainted: BTreeSet<&str> = block.iter().map(String::as_str).collect();
        let mut out = BTreeSet::new();
        // Entries are in dependency order, so one forward pass suffices.
        for f in self.entries {
            if f.parents.iter().any(|p| tainted.contains(p.as_str())) {
                for t in &f.target {
                    tainted.insert(t.as_str());
                    out.insert(t.as_str());
                }
            }
        }
        out
    }

    fn refs(&self, set: &BTreeSet<usize>) -> Vec<FactorRef> {
        set.iter().map(|&i| self.entries[i].clone()).collect()
    }
}

pub fn derive(model: &GraphicalModel, sel: &QPrimeSelection) -> Result<ElboExpression, DeriveError> {
    let report = model.validate();
    if let Some(v) = report.violations.into_iter().next() {
        return Err(crate::error::ModelError::Invalid(v).into());
    }
    check_selection(model, sel)?;
    let part = partition(model, sel);
    let entries = sampling_measure(model, &part, sel)?;
    let measure = Measure::new(&entries);
    let order = model.topological_order()?;

    let mut reconstruction_terms = Vec::new();
    for &i in order.iter().filter(|i| part.p3.contains(i)) {
        let f = &model.generative[i];
        let context = measure.closure(f.parents.iter().map(String::as_str));
        reconstruction_terms.push(ReconstructionTerm {
            factor: FactorRef::new(model, FactorSide::Generative, i),
            context: measure.refs(&context),
        });
    }

    let mut ratio: Vec<(usize, RatioTerm)> = Vec::new();
    for &p in &part.p1 {
        let g = sel.replaced(p).expect("P1 factor has a guide");
        let pf = &model.generative[p];
        let qf = &model.guides[g];
        let conditioning: Vec<&str> = pf
            .parents
            .iter()
            .chain(&qf.parents)
            .map(String::as_str)
            .collect();
        let downstream = measure.descendants(&pf.target);
        let proper = conditioning.iter().all(|v| !downstream.contains(v));
        let (tag, context) = if proper {
            (RatioTag::ProperKl, measure.closure(conditioning.iter().copied()))
        } else {
            let vars = conditioning
                .iter()
                .copied()
                .chain(pf.target.iter().map(String::as_str));
            (RatioTag::NestedExpectationRatio, measure.closure(vars))
        };
        let position = entries
            .iter()
            .position(|e| e.side == FactorSide::Guide && e.index == g)
            .unwrap_or(usize::MAX);
        ratio.push((
            position,
            RatioTerm {
                tag,
                p: FactorRef::new(model, FactorSide::Generative, p),
                q: FactorRef::new(model, FactorSide::Guide, g),
                context: measure.refs(&context),
            },
        ));
    }
    ratio.sort_by_key(|(pos, _)| *pos);

    Ok(ElboExpression {
        model: model.name.clone(),
        selection: sel.labels(model),
        sampling_measure: entries.clone(),
        reconstruction_terms,
        ratio_terms: ratio.into_iter().map(|(_, t)| t).collect(),
    })
}

fn check_selection(model: &GraphicalModel, sel: &QPrimeSelection) -> Result<(), DeriveError> {
    let rebuilt = QPrimeSelection::from_guides(model, &sel.chosen)?;
    let mut given = sel.matching.clone();
    given.sort_unstable();
    if rebuilt.chosen != sel.chosen || rebuilt.matching != given {
        return Err(DeriveError::InvalidSelection(
            "matching does not pair each chosen guide with the factor over its block".into(),
        ));
    }
    Ok(())
}

impl ElboExpression {
    pub fn term_count(&self) -> usize {
        self.reconstruction_terms.len() + self.ratio_terms.len()
    }

    pub fn kl_count(&self) -> usize {
        self.ratio_terms
            .iter()
            .filter(|t| t.tag == RatioTag::ProperKl)
            .count()
    }

    pub fn render(&self, syntax: Syntax) -> String {
        render(self, syntax)
    }

    /// Machine-readable JSON with a fixed field order.
    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("expression serializes")
    }
}

fn expectation(context: &[FactorRef], body: &str, syntax: Syntax) -> String {
    if context.is_empty() {
        return body.to_string();
    }
    let sub: Vec<String> = context.iter().map(|f| f.render(syntax)).collect();
    match syntax {
        Syntax::Text => format!("E_{{{}}}[{body}]", sub.join(",")),
        Syntax::Latex => format!("\\mathbb{{E}}_{{{}}}[{body}]", sub.join(",")),
    }
}

/// Text or LaTeX form: reconstruction terms first, then ratio terms.
pub fn render(e: &ElboExpression, syntax: Syntax) -> String {
    let latex = syntax == Syntax::Latex;
    let mut parts: Vec<(bool, String)> = Vec::new();
    for t in &e.reconstruction_terms {
        let body = if latex {
            format!("\\log {}", t.factor.render(syntax))
        } else {
            format!("log {}", t.factor.render(syntax))
        };
        parts.push((false, expectation(&t.context, &body, syntax)));
    }
    for t in &e.ratio_terms {
        let (p, q) = (t.p.render(syntax), t.q.render(syntax));
        match t.tag {
            RatioTag::ProperKl => {
                let body = if latex {
                    format!("\\mathrm{{KL}}({q}\\|{p})")
                } else {
                    format!("KL({q} || {p})")
                };
                parts.push((true, expectation(&t.context, &body, syntax)));
            }
            RatioTag::NestedExpectationRatio => {
                let body = if latex {
                    format!("\\log \\frac{{{p}}}{{{q}}}")
                } else {
                    format!("log ({p} / {q})")
                };
                parts.push((false, expectation(&t.context, &body, syntax)));
            }
        }
    }
    if parts.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, (negative, s)) in parts.iter().enumerate() {
        match (i, negative) {
            (0, true) => {
                let _ = write!(out, "-{s}");
            }
            (0, false) => out.push_str(s),
            (_, true) => {
                let _ = write!(out, " - {s}");
            }
            (_, false) => {
                let _ = write!(out, " + {s}");
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum HeuristicReason {
    /// Some observed factor is fed only by latents sampled without looking
    /// at any observed variable.
    IgnoresInput,
    /// The selection alone does not cover every matchable guide.
    IncompleteCoverage,
}

impl HeuristicReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeuristicReason::IgnoresInput => "ignores-input",
            HeuristicReason::IncompleteCoverage => "incomplete-coverage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Uses the input and covers every guide on its own.
    Recommended,
    /// Uses the input; usable together with selections covering the rest.
    Partial,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assessment {
    pub selection: Vec<String>,
    pub verdict: Verdict,
    pub reasons: Vec<HeuristicReason>,
}

/// Outcome of the Q' selection heuristic. The criteria are a heuristic, not
/// a theorem, and are reported rather than applied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HeuristicReport {
    pub heuristic: bool,
    pub assessments: Vec<Assessment>,
    /// Indices of the non-rejected selections, when together they cover
    /// every matchable guide.
    pub joint: Option<Vec<usize>>,
}

fn ignores_input(model: &GraphicalModel, sel: &QPrimeSelection) -> Result<bool, DeriveError> {
    let part = partition(model, sel);
    let entries = sampling_measure(model, &part, sel)?;
    let measure = Measure::new(&entries);
    for &i in &part.p3 {
        for parent in &model.generative[i].parents {
            if !model.is_latent(parent) {
                continue;
            }
            let chain = measure.closure([parent.as_str()]);
            let sees_input = chain
                .iter()
                .flat_map(|&j| &entries[j].parents)
                .any(|v| model.is_observed(v));
            if !sees_input {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn covered(sels: &[&QPrimeSelection]) -> BTreeSet<usize> {
    sels.iter().flat_map(|s| s.chosen.iter().copied()).collect()
}

pub fn heuristic_filter(
    model: &GraphicalModel,
    selections: &[QPrimeSelection],
) -> Result<HeuristicReport, DeriveError> {
    let all: BTreeSet<usize> = matchable_guides(model).into_iter().collect();
    let mut assessments = Vec::new();
    let mut usable = Vec::new();
    for (k, sel) in selections.iter().enumerate() {
        let mut reasons = Vec::new();
        let ignores = ignores_input(model, sel)?;
        if ignores {
            reasons.push(HeuristicReason::IgnoresInput);
        }
        if covered(&[sel]) != all {
            reasons.push(HeuristicReason::IncompleteCoverage);
        }
        let verdict = if ignores {
            Verdict::Rejected
        } else if reasons.is_empty() {
            Verdict::Recommended
        } else {
            Verdict::Partial
        };
        if !ignores {
            usable.push(k);
        }
        assessments.push(Assessment {
            selection: sel.labels(model),
            verdict,
            reasons,
        });
    }
    let picked: Vec<&QPrimeSelection> = usable.iter().map(|&k| &selections[k]).collect();
    let joint = (!usable.is_empty() && covered(&picked) == all).then_some(usable);
    Ok(HeuristicReport {
        heuristic: true,
        assessments,
        joint,
    })
}

/// True when no member ignores the input and together the selections cover
/// every matchable guide.
pub fn jointly_recommended(
    model: &GraphicalModel,
    selections: &[QPrimeSelection],
) -> Result<bool, DeriveError> {
    for sel in selections {
        if ignores_input(model, sel)? {
            return Ok(false);
        }
    }
    let all: BTreeSet<usize> = matchable_guides(model).into_iter().collect();
    let refs: Vec<&QPrimeSelection> = selections.iter().collect();
    Ok(!selections.is_empty() && covered(&refs) == all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_model;
    use crate::examples;

    fn sel(m: &GraphicalModel, labels: &[&str]) -> QPrimeSelection {
        QPrimeSelection::from_labels(m, labels).unwrap()
    }

    #[test]
    fn vae_bounds() {
        let m = parse_model(examples::VAE).unwrap();
        let all = enumerate_qprime(&m);
        assert_eq!(all.len(), 2);
        assert!(all[0].chosen.is_empty());
        let e = derive(&m, &all[1]).unwrap();
        assert_eq!(
            e.render(Syntax::Text),
            "E_{q(z|x)}[log p(x|z)] - KL(q(z|x) || p(z))"
        );
        assert_eq!(
            e.render(Syntax::Latex),
            "\\mathbb{E}_{q(z|x)}[\\log p(x|z)] - \\mathrm{KL}(q(z|x)\\|p(z))"
        );
        let e0 = derive(&m, &all[0]).unwrap();
        assert_eq!(e0.render(Syntax::Text), "E_{p(z)}[log p(x|z)]");
    }

    #[test]
    fn latplan_partitions() {
        let m = parse_model(examples::LATPLAN).unwrap();
        assert_eq!(enumerate_qprime(&m).len(), 8);
        let q1 = sel(&m, &["q(z0|x0)", "q(a|x0,x1)"]);
        let part = partition(&m, &q1);
        let labels = |v: &[usize]| v.iter().map(|&i| m.generative_label(i)).collect::<Vec<_>>();
        assert_eq!(labels(&part.p1), ["p(z0)", "p(a|z0)"]);
        assert_eq!(labels(&part.p2), ["p(z1|z0,a)"]);
        assert_eq!(labels(&part.p3), ["p(x0|z0)", "p(x1|z1)"]);
        let e1 = derive(&m, &q1).unwrap();
        assert_eq!((e1.reconstruction_terms.len(), e1.ratio_terms.len()), (2, 2));
        let measure: Vec<String> = e1.sampling_measure.iter().map(FactorRef::label).collect();
        assert_eq!(measure, ["q(z0|x0)", "q(a|x0,x1)", "p(z1|z0,a)"]);

        let q2 = sel(&m, &["q(z0|x0)", "q(z1|x1)", "q(a|x0,x1)"]);
        let e2 = derive(&m, &q2).unwrap();
        assert!(partition(&m, &q2).p2.is_empty());
        assert_eq!(e2.ratio_terms.len(), 3);
        assert_eq!(e2.kl_count(), 3);
        let text = e2.render(Syntax::Text);
        assert_eq!(text.matches("log p(x").count(), 2);
        assert_eq!(
            text,
            "E_{q(z0|x0)}[log p(x0|z0)] + E_{q(z1|x1)}[log p(x1|z1)] - KL(q(z0|x0) || p(z0)) \
             - E_{q(z0|x0)}[KL(q(a|x0,x1) || p(a|z0))] \
             - E_{q(z0|x0),q(a|x0,x1)}[KL(q(z1|x1) || p(z1|z0,a))]"
        );
    }

    #[test]
    fn veegan_flipped() {
        let m = parse_model(examples::VEEGAN_FLIPPED).unwrap();
        let all = enumerate_qprime(&m);
        let e = derive(&m, &all[1]).unwrap();
        assert_eq!(
            e.render(Syntax::Text),
            "E_{p(x|z)}[log q(z|x)] - KL(p(x|z) || q(x))"
        );
    }

    #[test]
    fn nested_ratio_from_footnote() {
        // E_{q(z|x)} E_{q(y|z)} log q(z|x)/p(z|y) is not a KL.
        let src = "model n {
          latent y : real ~ Normal(0, 1)
          latent z : real ~ Normal(f(y), 1)
          observed x : real ~ Normal(g(z), 1)
          guide q(z | x) ~ Normal(e(x), 1)
          guide q(y | z) ~ Normal(h(z), 1)
        }";
        let m = parse_model(src).unwrap();
        let s = sel(&m, &["q(z|x)", "q(y|z)"]);
        let e = derive(&m, &s).unwrap();
        let z_term = e.ratio_terms.iter().find(|t| t.p.target == ["z"]).unwrap();
        assert_eq!(z_term.tag, RatioTag::NestedExpectationRatio);
        let y_term = e.ratio_terms.iter().find(|t| t.p.target == ["y"]).unwrap();
        assert_eq!(y_term.tag, RatioTag::ProperKl);
        assert!(e
            .render(Syntax::Text)
            .contains("E_{q(z|x),q(y|z)}[log (p(z|y) / q(z|x))]"));
    }

    #[test]
    fn unmatchable_guide_is_never_selected() {
        let src = "model u {
          latent z : real ~ Normal(0, 1)
          latent w : real ~ Normal(0, 1)
          latent v : real ~ Normal(0, 1)
          observed x : real ~ Normal(f(z, w, v), 1)
          guide q(z | x) ~ Normal(e(x), 1)
          guide q(w v | x) ~ Const(0)
        }";
        let m = parse_model(src).unwrap();
        let all = enumerate_qprime(&m);
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|s| !s.chosen.contains(&1)));
    }

    #[test]
    fn duplicate_guides_expand_to_alternatives() {
        let src = "model d {
          latent z : real ~ Normal(0, 1)
          observed x : real ~ Normal(f(z), 1)
          guide q(z | x) ~ Normal(e(x), 1)
          guide q(z) ~ Normal(0, 2)
        }";
        let m = parse_model(src).unwrap();
        let all = enumerate_qprime(&m);
        assert_eq!(all.len(), 3);
        assert!(QPrimeSelection::from_guides(&m, &[0, 1]).is_err());
    }

    #[test]
    fn cyclic_measure_is_an_error() {
        let src = "model c {
          latent a : real ~ Normal(0, 1)
          latent b : real ~ Normal(0, 1)
          observed x : real ~ Normal(f(a, b), 1)
          guide q(a | b) ~ Normal(g(b), 1)
          guide q(b | a) ~ Normal(h(a), 1)
        }";
        let m = parse_model(src).unwrap();
        let s = sel(&m, &["q(a|b)", "q(b|a)"]);
        assert!(matches!(derive(&m, &s), Err(DeriveError::CyclicMeasure(_))));
    }

    #[test]
    fn empty_model_renders_zero() {
        let m = parse_model("model m { }").unwrap();
        let e = derive(&m, &QPrimeSelection::empty()).unwrap();
        assert_eq!(e.render(Syntax::Text), "0");
        assert_eq!(e.render(Syntax::Latex), "0");
    }

    #[test]
    fn heuristic_on_vae_and_latplan() {
        let m = parse_model(examples::VAE).unwrap();
        let all = enumerate_qprime(&m);
        let r = heuristic_filter(&m, &all).unwrap();
        assert_eq!(r.assessments[0].verdict, Verdict::Rejected);
        assert!(r.assessments[0].reasons.contains(&HeuristicReason::IgnoresInput));
        assert!(r.assessments[0].reasons.contains(&HeuristicReason::IncompleteCoverage));
        assert_eq!(r.assessments[1].verdict, Verdict::Recommended);

        let m = parse_model(examples::LATPLAN).unwrap();
        let q1 = sel(&m, &["q(z0|x0)", "q(a|x0,x1)"]);
        let q2 = sel(&m, &["q(z0|x0)", "q(z1|x1)", "q(a|x0,x1)"]);
        assert!(jointly_recommended(&m, &[q1.clone(), q2.clone()]).unwrap());
        assert!(!jointly_recommended(&m, std::slice::from_ref(&q1)).unwrap());
        let r = heuristic_filter(&m, &[q1, q2]).unwrap();
        assert_eq!(r.assessments[0].verdict, Verdict::Partial);
        assert_eq!(r.assessments[1].verdict, Verdict::Recommended);
        assert_eq!(r.joint, Some(vec![0, 1]));
    }

    #[test]
    fn invalid_selection() {
        let m = parse_model(examples::VAE).unwrap();
        let bogus = QPrimeSelection {
            chosen: vec![0],
            matching: vec![(0, 1)],
        };
        assert!(matches!(derive(&m, &bogus), Err(DeriveError::InvalidSelection(_))));
        assert!(QPrimeSelection::from_labels(&m, &["q(w|x)"]).is_err());
    }

    #[test]
    fn dump_is_stable_json() {
        let m = parse_model(examples::VAE).unwrap();
        let e = derive(&m, &enumerate_qprime(&m)[1]).unwrap();
        let d = e.dump();
        let v: serde_json::Value = serde_json::from_str(&d).unwrap();
        assert_eq!(v["ratio_terms"][0]["tag"], "ProperKl");
        assert_eq!(d, e.clone().dump());
        assert!(d.find("\"model\"").unwrap() < d.find("\"sampling_measure\"").unwrap());
    }
}
