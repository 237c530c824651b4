//! Exact enumeration and brute-force optimization oracles for small
//! discrete models and datasets.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value as Json;

use crate::elbo::{derive, ElboExpression, FactorRef, FactorSide, QPrimeSelection, RatioTag};
use crate::error::{DeriveError, ModelError, VerifyError};
use crate::model::{
    DistributionSpec, Factor, GraphicalModel, NumTree, Param, Role, Support, Variable,
};
use crate::zoo::{sample_index, table_rows, DistributionInstance, Family, Value};

/// Upper bound on the joint state count for enumeration.
pub const STATE_LIMIT: u128 = 1_000_000;
/// Mass at or below this counts as zero.
pub const ZERO_MASS: f64 = 1e-9;
/// Upper bound on the sample-space size for `brute_force_mle`.
pub const MAX_SPACE: usize = 10_000;
pub const MLE_ITERATIONS: usize = 10_000;

/// Values of observed variables by name, zero-based.
pub type Assignment = BTreeMap<String, usize>;

#[derive(Debug, Clone)]
struct Cpt {
    target: usize,
    parents: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl Cpt {
    fn row(&self, cards: &[usize], state: &[usize]) -> &[f64] {
        let idx = self
            .parents
            .iter()
            .fold(0, |acc, &p| acc * cards[p] + state[p]);
        &self.rows[idx]
    }

    fn prob(&self, cards: &[usize], state: &[usize]) -> f64 {
        self.row(cards, state)[state[self.target]]
    }
}

/// A fully discrete model with every generative factor compiled to a
/// conditional probability table. Guides are compiled when they are
/// tabular too; a non-tabular guide only fails when it is used.
#[derive(Debug, Clone)]
pub struct TabularModel {
    pub names: Vec<String>,
    pub cards: Vec<usize>,
    pub observed: Vec<bool>,
    generative: Vec<Cpt>,
    guides: Vec<Result<Cpt, String>>,
}

fn invalid_model(v: crate::model::Violation) -> VerifyError {
    VerifyError::Derive(DeriveError::Model(ModelError::Invalid(v)))
}

impl TabularModel {
    pub fn compile(model: &GraphicalModel) -> Result<Self, VerifyError> {
        if let Some(v) = model.validate().violations.into_iter().next() {
            return Err(invalid_model(v));
        }
        let vars: Vec<&Variable> = model
            .variables
            .iter()
            .filter(|v| v.role != Role::Parameter)
            .collect();
        let mut names = Vec::new();
        let mut cards = Vec::new();
        let mut observed = Vec::new();
        for v in &vars {
            let card = v.support.cardinality().ok_or_else(|| {
                VerifyError::NonTabular(format!("{} has support {}", v.name, v.support))
            })?;
            names.push(v.name.clone());
            cards.push(card);
            observed.push(v.role == Role::Observed);
        }
        let total = cards
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
        if total > STATE_LIMIT {
            return Err(VerifyError::StateSpaceOverflow(total, STATE_LIMIT));
        }
        let mut tm = TabularModel {
            names,
            cards,
            observed,
            generative: Vec::new(),
            guides: Vec::new(),
        };
        for (i, f) in model.generative.iter().enumerate() {
            let cpt = tm
                .compile_factor(f)
                .map_err(|e| VerifyError::NonTabular(format!("{}: {e}", model.generative_label(i))))?;
            tm.generative.push(cpt);
        }
        tm.guides = model.guides.iter().map(|f| tm.compile_factor(f)).collect();
        Ok(tm)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn state_count(&self) -> usize {
        self.cards.iter().product()
    }

    fn compile_factor(&self, f: &Factor) -> Result<Cpt, String> {
        let [target] = f.target.as_slice() else {
            return Err("joint factors are not supported".into());
        };
        let t = self.index_of(target).ok_or("unknown target")?;
        let card = self.cards[t];
        let (parents, rows) = self.spec_rows(&f.spec, card)?;
        let parents: Vec<usize> = parents
            .iter()
            .map(|p| self.index_of(p).ok_or(format!("{p} is not a random variable")))
            .collect::<Result<_, _>>()?;
        let expected: usize = parents.iter().map(|&p| self.cards[p]).product();
        if rows.len() != expected {
            return Err(format!("table has {} rows, expected {expected}", rows.len()));
        }
        for row in &rows {
            if row.len() != card {
                return Err(format!("row of length {} for {card} states", row.len()));
            }
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err("negative or non-finite probability".into());
            }
        }
        Ok(Cpt {
            target: t,
            parents,
            rows,
        })
    }

    /// Parents named by the table and one probability row per parent state.
    fn spec_rows(&self, spec: &DistributionSpec, card: usize) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
        let table = |param: &Param| -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
            match param {
                Param::Number(v) => Ok((Vec::new(), vec![vec![*v]])),
                Param::Table { parents, values } => {
                    let rows = table_rows(values, parents.len()).ok_or("malformed table")?;
                    Ok((parents.clone(), rows))
                }
                other => Err(format!("parameter {other:?} is symbolic")),
            }
        };
        match spec.family {
            Family::Bernoulli => {
                if card != 2 {
                    return Err("Bernoulli needs a two-state variable".into());
                }
                let (parents, rows) = table(&spec.params[0])?;
                let rows = rows
                    .into_iter()
                    .map(|r| match r.as_slice() {
                        [p] => Ok(vec![1.0 - p, *p]),
                        _ => Err("Bernoulli rows must be scalars".to_string()),
                    })
                    .collect::<Result<_, _>>()?;
                Ok((parents, rows))
            }
            Family::Categorical => table(&spec.params[0]),
            Family::Binomial => {
                let n = match spec.params[0] {
                    Param::Number(n) if n >= 0.0 && n.fract() == 0.0 => n as u64,
                    _ => return Err("Binomial needs a literal integer trial count".into()),
                };
                if n as usize + 1 != card {
                    return Err(format!("Binomial({n}) needs {} states", n + 1));
                }
                let (parents, rows) = table(&spec.params[1])?;
                let rows = rows
                    .into_iter()
                    .map(|r| match r.as_slice() {
                        [p] => Ok(binomial_row(n, *p)),
                        _ => Err("Binomial rows must be scalars".to_string()),
                    })
                    .collect::<Result<_, _>>()?;
                Ok((parents, rows))
            }
            other => Err(format!("{other} has no tabular form")),
        }
    }

    fn observation_state(&self, obs: &Assignment) -> Result<Vec<usize>, VerifyError> {
        let mut state = vec![0; self.names.len()];
        for (i, name) in self.names.iter().enumerate() {
            if !self.observed[i] {
                continue;
            }
            let v = *obs
                .get(name)
                .ok_or_else(|| VerifyError::InvalidDataset(format!("missing value for {name}")))?;
            if v >= self.cards[i] {
                return Err(VerifyError::InvalidDataset(format!(
                    "{name} = {v} outside 0..{}",
                    self.cards[i]
                )));
            }
            state[i] = v;
        }
        for key in obs.keys() {
            match self.index_of(key) {
                Some(i) if self.observed[i] => {}
                _ => {
                    return Err(VerifyError::InvalidDataset(format!(
                        "{key} is not an observed variable"
                    )))
                }
            }
        }
        Ok(state)
    }

    /// Joint probability of a full state under the generative factors.
    pub fn joint(&self, state: &[usize]) -> f64 {
        self.generative
            .iter()
            .map(|c| c.prob(&self.cards, state))
            .product()
    }

    /// Calls `f` on every full state with the observed coordinates fixed.
    fn for_each_latent(&self, base: &[usize], mut f: impl FnMut(&[usize])) {
        let free: Vec<usize> = (0..self.names.len()).filter(|&i| !self.observed[i]).collect();
        let mut state = base.to_vec();
        for &i in &free {
            state[i] = 0;
        }
        loop {
            f(&state);
            let mut k = free.len();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                let i = free[k];
                state[i] += 1;
                if state[i] < self.cards[i] {
                    break;
                }
                state[i] = 0;
            }
        }
    }

    fn for_each_state(&self, mut f: impl FnMut(&[usize])) {
        let mut state = vec![0; self.names.len()];
        loop {
            f(&state);
            let mut k = state.len();
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                state[k] += 1;
                if state[k] < self.cards[k] {
                    break;
                }
                state[k] = 0;
            }
        }
    }

    pub fn log_evidence(&self, obs: &Assignment) -> Result<f64, VerifyError> {
        let base = self.observation_state(obs)?;
        let mut logs = Vec::new();
        self.for_each_latent(&base, |s| logs.push(self.joint(s).ln()));
        Ok(log_sum_exp(&logs))
    }

    fn cpt(&self, f: &FactorRef) -> Result<&Cpt, VerifyError> {
        match f.side {
            FactorSide::Generative => Ok(&self.generative[f.index]),
            FactorSide::Guide => self.guides[f.index]
                .as_ref()
                .map_err(|e| VerifyError::NonTabular(format!("{}: {e}", f.label()))),
        }
    }

    /// Expectation of `g` under the ordered sampler chain, summing over every
    /// value with positive mass.
    fn expect(&self, samplers: &[&Cpt], state: &mut Vec<usize>, g: &dyn Fn(&[usize]) -> f64) -> f64 {
        match samplers.split_first() {
            None => g(state),
            Some((c, rest)) => {
                let mut total = 0.0;
                for v in 0..self.cards[c.target] {
                    state[c.target] = v;
                    let w = c.prob(&self.cards, state);
                    if w > 0.0 {
                        total += w * self.expect(rest, state, g);
                    }
                }
                total
            }
        }
    }
}

fn binomial_row(n: u64, p: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut coef = 1.0;
    for k in 0..=n {
        if k > 0 {
            coef *= (n - k + 1) as f64 / k as f64;
        }
        row.push(coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32));
    }
    row
}

/// `log sum exp`, with an empty or all-zero-mass input giving `-inf`.
pub fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// `log p(obs)` by summing the joint over every latent state. Impossible
/// observations give `-inf`.
pub fn exact_log_evidence(model: &GraphicalModel, obs: &Assignment) -> Result<f64, VerifyError> {
    TabularModel::compile(model)?.log_evidence(obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strategy {
    Enumerate,
    MonteCarlo { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElboEstimate {
    pub value: f64,
    /// Standard error of a Monte Carlo mean; zero for enumeration, absent
    /// for a single draw.
    pub std_error: Option<f64>,
}

/// Numeric value of the derived bound for one observation.
pub fn numeric_elbo(
    model: &GraphicalModel,
    sel: &QPrimeSelection,
    obs: &Assignment,
    strategy: Strategy,
) -> Result<f64, VerifyError> {
    Ok(numeric_elbo_estimate(model, sel, obs, strategy)?.value)
}

pub fn numeric_elbo_estimate(
    model: &GraphicalModel,
    sel: &QPrimeSelection,
    obs: &Assignment,
    strategy: Strategy,
) -> Result<ElboEstimate, VerifyError> {
    let tm = TabularModel::compile(model)?;
    let expr = derive(model, sel)?;
    let base = tm.observation_state(obs)?;
    match strategy {
        Strategy::Enumerate => Ok(ElboEstimate {
            value: termwise(&tm, &expr, &base)?,
            std_error: Some(0.0),
        }),
        Strategy::MonteCarlo { n, seed } => monte_carlo(&tm, &expr, &base, n, seed),
    }
}

/// Evaluates each term of the expression over its own expectation context;
/// KL terms are summed in closed form over the target's states.
fn termwise(tm: &TabularModel, expr: &ElboExpression, base: &[usize]) -> Result<f64, VerifyError> {
    let mut total = 0.0;
    for t in &expr.reconstruction_terms {
        let p = tm.cpt(&t.factor)?;
        let ctx = contexts(tm, &t.context)?;
        let g = |s: &[usize]| p.prob(&tm.cards, s).ln();
        total += tm.expect(&ctx, &mut base.to_vec(), &g);
    }
    for t in &expr.ratio_terms {
        let p = tm.cpt(&t.p)?;
        let q = tm.cpt(&t.q)?;
        let ctx = contexts(tm, &t.context)?;
        match t.tag {
            RatioTag::ProperKl => {
                let g = |s: &[usize]| {
                    let qr = q.row(&tm.cards, s);
                    let pr = p.row(&tm.cards, s);
                    categorical_kl(qr, pr)
                };
                total -= tm.expect(&ctx, &mut base.to_vec(), &g);
            }
            RatioTag::NestedExpectationRatio => {
                let g = |s: &[usize]| p.prob(&tm.cards, s).ln() - q.prob(&tm.cards, s).ln();
                total += tm.expect(&ctx, &mut base.to_vec(), &g);
            }
        }
    }
    Ok(total)
}

fn contexts<'a>(tm: &'a TabularModel, refs: &[FactorRef]) -> Result<Vec<&'a Cpt>, VerifyError> {
    refs.iter().map(|f| tm.cpt(f)).collect()
}

fn categorical_kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * (a / b).ln() })
        .sum()
}

/// Log-ratio integrand of the whole bound at one full state.
fn integrand(tm: &TabularModel, expr: &ElboExpression, s: &[usize]) -> Result<f64, VerifyError> {
    let mut v = 0.0;
    for t in &expr.reconstruction_terms {
        v += tm.cpt(&t.factor)?.prob(&tm.cards, s).ln();
    }
    for t in &expr.ratio_terms {
        v += tm.cpt(&t.p)?.prob(&tm.cards, s).ln() - tm.cpt(&t.q)?.prob(&tm.cards, s).ln();
    }
    Ok(v)
}

/// Reference evaluation: expectation of the full integrand under the whole
/// sampling measure, ignoring the term structure.
pub fn naive_elbo(model: &GraphicalModel, sel: &QPrimeSelection, obs: &Assignment) -> Result<f64, VerifyError> {
    let tm = TabularModel::compile(model)?;
    let expr = derive(model, sel)?;
    let base = tm.observation_state(obs)?;
    let measure = contexts(&tm, &expr.sampling_measure)?;
    // Surface non-tabular factors before the closure swallows errors.
    integrand(&tm, &expr, &base)?;
    let g = |s: &[usize]| integrand(&tm, &expr, s).unwrap_or(f64::NAN);
    Ok(tm.expect(&measure, &mut base.clone(), &g))
}

fn monte_carlo(
    tm: &TabularModel,
    expr: &ElboExpression,
    base: &[usize],
    n: usize,
    seed: u64,
) -> Result<ElboEstimate, VerifyError> {
    if n == 0 {
        return Err(VerifyError::InvalidDataset("Monte Carlo needs n >= 1".into()));
    }
    let measure = contexts(tm, &expr.sampling_measure)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = base.to_vec();
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 1..=n {
        for c in &measure {
            let row = c.row(&tm.cards, &state);
            state[c.target] = sample_index(row, &mut rng);
        }
        let v = integrand(tm, expr, &state)?;
        if v == f64::NEG_INFINITY {
            return Ok(ElboEstimate {
                value: v,
                std_error: None,
            });
        }
        let delta = v - mean;
        mean += delta / k as f64;
        m2 += delta * (v - mean);
    }
    let std_error = (n > 1).then(|| (m2 / (n - 1) as f64 / n as f64).sqrt());
    Ok(ElboEstimate {
        value: mean,
        std_error,
    })
}

/// Largest absolute difference between the product over the printed
/// factorization and the product of all tables in declaration order, over
/// every joint state. Infinite if the factorization drops or repeats a
/// factor.
pub fn factorization_check(model: &GraphicalModel) -> Result<f64, VerifyError> {
    let tm = TabularModel::compile(model)?;
    let fact = model.factorization().map_err(DeriveError::from)?;
    let mut seen: Vec<usize> = fact.factors.iter().map(|f| f.index).collect();
    seen.sort_unstable();
    if seen != (0..model.generative.len()).collect::<Vec<_>>() {
        return Ok(f64::INFINITY);
    }
    let mut worst: f64 = 0.0;
    let mut total = 0.0;
    tm.for_each_state(|s| {
        let printed: f64 = fact
            .factors
            .iter()
            .map(|f| tm.generative[f.index].prob(&tm.cards, s))
            .product();
        let direct = tm.joint(s);
        total += direct;
        worst = worst.max((printed - direct).abs());
    });
    Ok(worst.max((total - 1.0).abs()))
}

fn random_row<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    // Weights in thousandths, occasionally with exact zeros.
    loop {
        let w: Vec<u32> = (0..k)
            .map(|_| if rng.random_bool(0.1) { 0 } else { rng.random_range(1..=20) })
            .collect();
        let sum: u32 = w.iter().sum();
        if sum == 0 {
            continue;
        }
        let mut row: Vec<f64> = w.iter().map(|&x| (x * 1000 / sum) as f64 / 1000.0).collect();
        let head: f64 = row[..k - 1].iter().sum();
        row[k - 1] = ((1.0 - head) * 1000.0).round() / 1000.0;
        if row[k - 1] >= 0.0 {
            return row;
        }
    }
}

/// Nested literal for `rows` indexed by parents with the given
/// cardinalities; scalar leaves when `scalar` is set.
fn nest(rows: &[Vec<f64>], cards: &[usize], scalar: bool) -> NumTree {
    match cards.split_first() {
        None => {
            if scalar {
                NumTree::Num(rows[0][0])
            } else {
                NumTree::from_vec(&rows[0])
            }
        }
        Some((&c, rest)) => {
            let chunk = rows.len() / c;
            NumTree::List(rows.chunks(chunk).map(|r| nest(r, rest, scalar)).collect())
        }
    }
}

fn table_spec(support: Support, parents: &[String], rows: Vec<Vec<f64>>, cards: &[usize]) -> DistributionSpec {
    match support {
        Support::Boolean => {
            let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| vec![r[1]]).collect();
            let param = if parents.is_empty() {
                Param::Number(rows[0][0])
            } else {
                Param::Table {
                    parents: parents.to_vec(),
                    values: nest(&rows, cards, true),
                }
            };
            DistributionSpec::new(Family::Bernoulli, vec![param])
        }
        _ => DistributionSpec::new(
            Family::Categorical,
            vec![Param::Table {
                parents: parents.to_vec(),
                values: nest(&rows, cards, false),
            }],
        ),
    }
}

/// A random fully-tabular model with 2 to 4 variables of 2 or 3 states,
/// at least one observed and one latent. Variable order is topological.
/// Every latent gets one guide conditioned on a random subset of the
/// observed variables and earlier latents.
pub fn random_tabular_model(seed: u64) -> GraphicalModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=4usize);
    let mut observed: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    if observed.iter().all(|&o| o) {
        observed[rng.random_range(0..n)] = false;
    }
    if observed.iter().all(|&o| !o) {
        observed[rng.random_range(0..n)] = true;
    }
    let supports: Vec<Support> = (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => Support::Boolean,
            1 => Support::Categorical(2),
            _ => Support::Categorical(3),
        })
        .collect();
    let cards: Vec<usize> = supports.iter().map(|s| s.cardinality().unwrap()).collect();
    let names: Vec<String> = (0..n)
        .map(|i| format!("{}{i}", if observed[i] { "x" } else { "z" }))
        .collect();

    let mut model = GraphicalModel::new(format!("random{seed}"));
    for i in 0..n {
        let parents: Vec<usize> = (0..i).filter(|_| rng.random_bool(0.5)).collect();
        let rows_n: usize = parents.iter().map(|&p| cards[p]).product();
        let rows = (0..rows_n).map(|_| random_row(&mut rng, cards[i])).collect();
        let pnames: Vec<String> = parents.iter().map(|&p| names[p].clone()).collect();
        let pcards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
        let role = if observed[i] { Role::Observed } else { Role::Latent };
        model.add_variable(
            Variable::new(names[i].clone(), supports[i], role),
            table_spec(supports[i], &pnames, rows, &pcards),
        );
    }
    for i in (0..n).filter(|&i| !observed[i]) {
        let pool: Vec<usize> = (0..n).filter(|&j| observed[j] || j < i).filter(|&j| j != i).collect();
        let parents: Vec<usize> = pool.into_iter().filter(|_| rng.random_bool(0.6)).collect();
        let rows_n: usize = parents.iter().map(|&p| cards[p]).product();
        let rows = (0..rows_n).map(|_| random_row(&mut rng, cards[i])).collect();
        let pnames: Vec<String> = parents.iter().map(|&p| names[p].clone()).collect();
        let pcards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
        model.add_guide(
            vec![names[i].clone()],
            pnames.clone(),
            table_spec(supports[i], &pnames, rows, &pcards),
        );
    }
    model
}

/// Replaces every guide by the exact conditional `p(z_i | observed,
/// earlier latents)`, latents taken in topological order. With all of
/// these selected the bound is tight. Rows for impossible conditioning
/// states are uniform.
pub fn posterior_guides(model: &GraphicalModel) -> Result<GraphicalModel, VerifyError> {
    let tm = TabularModel::compile(model)?;
    let order = model.topological_order().map_err(DeriveError::from)?;
    let var_of = |gen: usize| tm.index_of(&model.generative[gen].target[0]).unwrap();
    let latents: Vec<usize> = order
        .iter()
        .map(|&g| var_of(g))
        .filter(|&v| !tm.observed[v])
        .collect();
    let obs: Vec<usize> = (0..tm.names.len()).filter(|&v| tm.observed[v]).collect();

    let mut out = model.clone();
    out.guides.clear();
    for (k, &z) in latents.iter().enumerate() {
        let parents: Vec<usize> = obs.iter().chain(&latents[..k]).copied().collect();
        let pcards: Vec<usize> = parents.iter().map(|&p| tm.cards[p]).collect();
        let rows_n: usize = pcards.iter().product();
        let mut rows = vec![vec![0.0; tm.cards[z]]; rows_n];
        tm.for_each_state(|s| {
            let idx = parents.iter().fold(0, |acc, &p| acc * tm.cards[p] + s[p]);
            rows[idx][s[z]] += tm.joint(s);
        });
        for row in &mut rows {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|v| *v /= total);
            } else {
                let u = 1.0 / row.len() as f64;
                row.iter_mut().for_each(|v| *v = u);
            }
        }
        let pnames: Vec<String> = parents.iter().map(|&p| tm.names[p].clone()).collect();
        let support = model.variable(&tm.names[z]).unwrap().support;
        let spec = table_spec(support, &pnames, rows, &pcards);
        out.add_guide(vec![tm.names[z].clone()], pnames, spec);
    }
    Ok(out)
}

/// Every assignment of the observed variables, row-major in declaration
/// order.
pub fn observation_space(model: &GraphicalModel) -> Result<Vec<Assignment>, VerifyError> {
    let obs: Vec<&Variable> = model.observed().collect();
    let mut cards = Vec::new();
    for v in &obs {
        cards.push(v.support.cardinality().ok_or_else(|| {
            VerifyError::NonTabular(format!("{} has support {}", v.name, v.support))
        })?);
    }
    let total: usize = cards.iter().product();
    Ok((0..total)
        .map(|mut idx| {
            let mut a = Assignment::new();
            for (v, &c) in obs.iter().zip(&cards).rev() {
                a.insert(v.name.clone(), idx % c);
                idx /= c;
            }
            a
        })
        .collect())
}

/// Finite sample space with a multiset of samples given as point indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDataset {
    pub points: Vec<String>,
    pub samples: Vec<usize>,
}

impl DiscreteDataset {
    pub fn new(points: Vec<String>, samples: Vec<usize>) -> Result<Self, VerifyError> {
        if samples.is_empty() {
            return Err(VerifyError::EmptyDataset);
        }
        if let Some(&s) = samples.iter().find(|&&s| s >= points.len()) {
            return Err(VerifyError::InvalidDataset(format!(
                "sample {s} outside a space of {} points",
                points.len()
            )));
        }
        Ok(Self { points, samples })
    }

    /// Space `0..size` with numeric labels.
    pub fn over_indices(size: usize, samples: Vec<usize>) -> Result<Self, VerifyError> {
        Self::new((0..size).map(|i| i.to_string()).collect(), samples)
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.size()];
        for &s in &self.samples {
            c[s] += 1;
        }
        c
    }

    /// `q(x) = count(x) / |samples|`.
    pub fn empirical(&self) -> Vec<f64> {
        let n = self.samples.len() as f64;
        self.counts().into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Parses JSON lines, skipping blank lines. Each record maps variable
/// names to integer or boolean values.
pub fn parse_jsonl(text: &str) -> Result<Vec<Assignment>, VerifyError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| VerifyError::InvalidDataset(format!("line {}: {msg}", i + 1));
        let record: BTreeMap<String, Json> =
            serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let mut a = Assignment::new();
        for (k, v) in record {
            let x = match &v {
                Json::Bool(b) => *b as usize,
                Json::Number(n) => n
                    .as_u64()
                    .ok_or_else(|| bad(format!("{k}: {v} is not a non-negative integer")))?
                    as usize,
                _ => return Err(bad(format!("{k}: {v} is not a discrete value"))),
            };
            a.insert(k, x);
        }
        out.push(a);
    }
    Ok(out)
}

/// Dataset over the joint space of the observed variables.
pub fn dataset_from_records(model: &GraphicalModel, records: &[Assignment]) -> Result<DiscreteDataset, VerifyError> {
    let space = observation_space(model)?;
    let labels = space
        .iter()
        .map(|a| {
            a.iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        let idx = space.iter().position(|a| a == r).ok_or_else(|| {
            VerifyError::InvalidDataset(format!("record {r:?} is not an observation of {}", model.name))
        })?;
        samples.push(idx);
    }
    DiscreteDataset::new(labels, samples)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `sum_x q(x) log p(x)`, with `0 log 0 = 0`.
pub fn expected_log_likelihood(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * b.ln() })
        .sum()
}

/// Multiplicative-weights ascent of `sum_x q(x) log p(x)` over the simplex
/// from the uniform start, with step `0.5 / max gradient`.
pub fn multiplicative_weights(q: &[f64], iterations: usize) -> Vec<f64> {
    let n = q.len();
    let mut logp = vec![-(n as f64).ln(); n];
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..iterations {
        let grad: Vec<f64> = q.iter().zip(&p).map(|(&a, &b)| if a == 0.0 { 0.0 } else { a / b }).collect();
        let gmax = grad.iter().copied().fold(0.0, f64::max);
        if gmax == 0.0 {
            break;
        }
        let eta = 0.5 / gmax;
        for (l, g) in logp.iter_mut().zip(&grad) {
            *l += eta * g;
        }
        let z = log_sum_exp(&logp);
        for (l, v) in logp.iter_mut().zip(p.iter_mut()) {
            *l -= z;
            *v = l.exp();
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub optimum: Vec<f64>,
    pub empirical: Vec<f64>,
    pub total_variation: f64,
    /// `KL(q || optimum)`.
    pub kl: f64,
}

/// Maximum-likelihood distribution over the sample space found by
/// multiplicative weights, compared with the empirical distribution.
pub fn brute_force_mle(data: &DiscreteDataset) -> Result<MleResult, VerifyError> {
    if data.samples.is_empty() {
        return Err(VerifyError::EmptyDataset);
    }
    if data.size() > MAX_SPACE {
        return Err(VerifyError::InvalidDataset(format!(
            "sample space of {} points exceeds {MAX_SPACE}",
            data.size()
        )));
    }
    let q = data.empirical();
    let p = multiplicative_weights(&q, MLE_ITERATIONS);
    Ok(MleResult {
        total_variation: total_variation(&p, &q),
        kl: categorical_kl(&q, &p),
        optimum: p,
        empirical: q,
    })
}

/// Valid and invalid points of a sample space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityPartition {
    pub valid: Vec<bool>,
}

impl ValidityPartition {
    pub fn new(size: usize, valid: &[usize]) -> Result<Self, VerifyError> {
        let mut mask = vec![false; size];
        for &v in valid {
            *mask
                .get_mut(v)
                .ok_or_else(|| VerifyError::InvalidPartition(format!("point {v} outside 0..{size}")))? = true;
        }
        Ok(Self { valid: mask })
    }

    pub fn all_valid(size: usize) -> Self {
        Self { valid: vec![true; size] }
    }

    /// Points with positive probability under the model's marginal.
    pub fn from_model(model: &GraphicalModel) -> Result<Self, VerifyError> {
        let tm = TabularModel::compile(model)?;
        let valid = observation_space(model)?
            .iter()
            .map(|a| tm.log_evidence(a).map(|l| l > f64::NEG_INFINITY))
            .collect::<Result<_, _>>()?;
        Ok(Self { valid })
    }

    pub fn size(&self) -> usize {
        self.valid.len()
    }

    pub fn valid_points(&self) -> Vec<usize> {
        (0..self.size()).filter(|&i| self.valid[i]).collect()
    }

    pub fn invalid_points(&self) -> Vec<usize> {
        (0..self.size()).filter(|&i| !self.valid[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundnessReport {
    pub sound: bool,
    /// Invalid points carrying mass above the zero threshold.
    pub violations: Vec<usize>,
}

pub fn soundness_check(dist: &[f64], partition: &ValidityPartition) -> SoundnessReport {
    let violations: Vec<usize> = partition
        .invalid_points()
        .into_iter()
        .filter(|&i| dist.get(i).is_some_and(|&p| p > ZERO_MASS))
        .collect();
    SoundnessReport {
        sound: violations.is_empty(),
        violations,
    }
}

/// Moves the invalid mass `C` back onto the valid points by dividing them
/// by `1 - C`. `None` when every point with mass is invalid.
pub fn renormalize_valid(dist: &[f64], partition: &ValidityPartition) -> Option<Vec<f64>> {
    let c: f64 = partition.invalid_points().iter().map(|&i| dist[i]).sum();
    if c >= 1.0 {
        return None;
    }
    Some(
        dist.iter()
            .zip(&partition.valid)
            .map(|(&p, &ok)| if ok { p / (1.0 - c) } else { 0.0 })
            .collect(),
    )
}

/// Partition of a sample space into nonempty disjoint classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalencePartition {
    pub classes: Vec<Vec<usize>>,
}

impl EquivalencePartition {
    pub fn new(size: usize, classes: Vec<Vec<usize>>) -> Result<Self, VerifyError> {
        let mut seen = vec![false; size];
        for class in &classes {
            if class.is_empty() {
                return Err(VerifyError::InvalidPartition("empty class".into()));
            }
            for &x in class {
                match seen.get_mut(x) {
                    None => {
                        return Err(VerifyError::InvalidPartition(format!("point {x} outside 0..{size}")))
                    }
                    Some(true) => {
                        return Err(VerifyError::InvalidPartition(format!("point {x} in two classes")))
                    }
                    Some(s) => *s = true,
                }
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(VerifyError::InvalidPartition(format!("point {x} in no class")));
        }
        Ok(Self { classes })
    }

    pub fn singletons(size: usize) -> Self {
        Self {
            classes: (0..size).map(|i| vec![i]).collect(),
        }
    }

    /// From a class label per point (a restricted growth string or any
    /// labelling).
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (x, &l) in labels.iter().enumerate() {
            by.entry(l).or_default().push(x);
        }
        let mut classes: Vec<Vec<usize>> = by.into_values().collect();
        classes.sort();
        Self { classes }
    }

    pub fn size(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    pub fn class_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.size()];
        for (c, class) in self.classes.iter().enumerate() {
            for &x in class {
                out[x] = c;
            }
        }
        out
    }
}

/// All set partitions of `0..n`, via restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<EquivalencePartition> {
    fn grow(rgs: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<EquivalencePartition>) {
        if rgs.len() == n {
            out.push(EquivalencePartition::from_labels(rgs));
            return;
        }
        let limit = if rgs.is_empty() { 0 } else { max + 1 };
        for v in 0..=limit {
            rgs.push(v);
            grow(rgs, n, max.max(v), out);
            rgs.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(EquivalencePartition { classes: Vec::new() });
    } else {
        grow(&mut Vec::new(), n, 0, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessReport {
    pub complete: bool,
    pub generalizes: bool,
    pub sound: bool,
    pub optimum: Vec<f64>,
}

/// Class-constant maximum-likelihood optimum `q(C(x)) / |C(x)|` and whether
/// it covers every valid point.
pub fn completeness_check(
    data: &DiscreteDataset,
    partition: &ValidityPartition,
    classes: &EquivalencePartition,
) -> Result<CompletenessReport, VerifyError> {
    let n = data.size();
    if partition.size() != n || classes.size() != n {
        return Err(VerifyError::InvalidPartition(format!(
            "partition sizes {} and {} for a space of {n} points",
            partition.size(),
            classes.size()
        )));
    }
    let class_of = classes.class_of();
    let counts = data.counts();
    let mut owner: Vec<Option<usize>> = vec![None; classes.classes.len()];
    for x in (0..n).filter(|&x| counts[x] > 0) {
        if !partition.valid[x] {
            return Err(VerifyError::Hypothesis(format!("sample {} is invalid", data.points[x])));
        }
        match owner[class_of[x]] {
            Some(y) => {
                return Err(VerifyError::Hypothesis(format!(
                    "samples {} and {} share a class",
                    data.points[y], data.points[x]
                )))
            }
            None => owner[class_of[x]] = Some(x),
        }
    }
    let q = data.empirical();
    let class_mass: Vec<f64> = classes
        .classes
        .iter()
        .map(|c| c.iter().map(|&x| q[x]).sum())
        .collect();
    let optimum: Vec<f64> = (0..n)
        .map(|x| class_mass[class_of[x]] / classes.classes[class_of[x]].len() as f64)
        .collect();
    let generalizes = partition
        .valid_points()
        .iter()
        .all(|&x| owner[class_of[x]].is_some());
    let complete = partition.valid_points().iter().all(|&x| optimum[x] > ZERO_MASS);
    let sound = soundness_check(&optimum, partition).sound;
    Ok(CompletenessReport {
        complete,
        generalizes,
        sound,
        optimum,
    })
}

/// Optimizer under the class-constant constraint: multiplicative weights
/// over class masses, then spread uniformly within each class.
pub fn constrained_mle(data: &DiscreteDataset, classes: &EquivalencePartition) -> Vec<f64> {
    let q = data.empirical();
    let qc: Vec<f64> = classes
        .classes
        .iter()
        .map(|c| c.iter().map(|&x| q[x]).sum())
        .collect();
    let pc = multiplicative_weights(&qc, MLE_ITERATIONS);
    let mut out = vec![0.0; q.len()];
    for (class, mass) in classes.classes.iter().zip(pc) {
        for &x in class {
            out[x] = mass / class.len() as f64;
        }
    }
    out
}

/// `(1/n) sum g(x_i)` over `n` seeded draws, as a running mean so that a
/// constant `g` is reproduced exactly.
pub fn mc_expectation(
    d: &DistributionInstance,
    g: impl Fn(&Value) -> f64,
    n: usize,
    seed: u64,
) -> Result<f64, VerifyError> {
    if n == 0 {
        return Err(VerifyError::InvalidDataset("Monte Carlo needs n >= 1".into()));
    }
    let xs = d.sample(seed, n)?;
    let mut mean = 0.0;
    for (k, x) in xs.iter().enumerate() {
        mean += (g(x) - mean) / (k + 1) as f64;
    }
    Ok(mean)
}

fn marginals(joint: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let px = joint.iter().map(|r| r.iter().sum()).collect();
    let cols = joint.first().map_or(0, Vec::len);
    let py = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    (px, py)
}

/// Largest `|P(X=x or Y=y) - P(X=x) - P(Y=y) + P(x, y)|` over all cells,
/// with the disjunction summed directly from the joint.
pub fn inclusion_exclusion_check(joint: &[Vec<f64>]) -> f64 {
    let (px, py) = marginals(joint);
    let mut worst: f64 = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &pxy) in row.iter().enumerate() {
            let mut either = 0.0;
            for (i, r) in joint.iter().enumerate() {
                for (j, &v) in r.iter().enumerate() {
                    if i == x || j == y {
                        either += v;
                    }
                }
            }
            worst = worst.max((either - px[x] - py[y] + pxy).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyReport {
    pub joint: f64,
    pub x: f64,
    pub y: f64,
    /// `H(X | Y)` summed directly from conditionals.
    pub x_given_y: f64,
    /// `|H(X,Y) - H(Y) - H(X|Y)|`.
    pub chain_residual: f64,
    /// `H(X) + H(Y) - H(X,Y)`, the mutual information.
    pub slack: f64,
    pub holds: bool,
}

pub fn entropy_identities_check(joint: &[Vec<f64>]) -> EntropyReport {
    let h = |p: &[f64]| -> f64 { p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.ln()).sum() };
    let (px, py) = marginals(joint);
    let flat: Vec<f64> = joint.iter().flatten().copied().collect();
    let hxy = h(&flat);
    let mut x_given_y = 0.0;
    for row in joint {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                x_given_y -= v * (v / py[j]).ln();
            }
        }
    }
    let (hx, hy) = (h(&px), h(&py));
    let chain_residual = (hxy - hy - x_given_y).abs();
    let slack = hx + hy - hxy;
    EntropyReport {
        joint: hxy,
        x: hx,
        y: hy,
        x_given_y,
        chain_residual,
        slack,
        holds: chain_residual <= 1e-9 && slack >= -1e-9,
    }
}
