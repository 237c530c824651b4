//! Conjugate prior updates in pseudocount form.
//!
//! Beta and Dirichlet states are kept as a mean (success rate or category
//! distribution) plus a total pseudocount `n0`, so that `(alpha, beta) =
//! (theta0 * n0, (1 - theta0) * n0)`. Gaussian updates follow the
//! single-observation rules; batches are folds over those rules.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::error::ConjugateError;
use crate::zoo::{Dist, SIMPLEX_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ConjugateState {
    Beta { theta0: f64, n0: f64 },
    Dirichlet { p0: Vec<f64>, n0: f64 },
    /// Prior on a Gaussian mean: `mu ~ N(mu0, sigma2 / n0)` with known
    /// observation variance `sigma2`.
    NormalMean { mu0: f64, sigma2: f64, n0: f64 },
    ScaledInvChiSq { n0: f64, sigma2: f64 },
    /// Mean and variance prior sharing one pseudocount.
    Normal { mu0: f64, sigma2: f64, n0: f64 },
}

fn invalid(msg: impl Into<String>) -> ConjugateError {
    ConjugateError::InvalidState(msg.into())
}

fn check_count(n0: f64) -> Result<(), ConjugateError> {
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(invalid(format!("pseudocount must be finite and >= 0, got {n0}")));
    }
    Ok(())
}

impl ConjugateState {
    pub fn beta(theta0: f64, n0: f64) -> Result<Self, ConjugateError> {
        check_count(n0)?;
        if !(0.0..=1.0).contains(&theta0) {
            return Err(invalid(format!("theta0 must lie in [0, 1], got {theta0}")));
        }
        Ok(ConjugateState::Beta { theta0, n0 })
    }

    /// From success and failure pseudocounts.
    pub fn beta_from_counts(alpha: f64, beta: f64) -> Result<Self, ConjugateError> {
        check_count(alpha)?;
        check_count(beta)?;
        let n0 = alpha + beta;
        let theta0 = if n0 > 0.0 { alpha / n0 } else { 0.5 };
        Self::beta(theta0, n0)
    }

    pub fn dirichlet(p0: Vec<f64>, n0: f64) -> Result<Self, ConjugateError> {
        check_count(n0)?;
        if p0.len() < 2 {
            return Err(invalid("Dirichlet needs at least two categories"));
        }
        if p0.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("p0 entries must lie in [0, 1]"));
        }
        let total: f64 = p0.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(invalid(format!("p0 sums to {total}, not 1")));
        }
        Ok(ConjugateState::Dirichlet { p0, n0 })
    }

    pub fn dirichlet_from_counts(alpha: &[f64]) -> Result<Self, ConjugateError> {
        for &a in alpha {
            check_count(a)?;
        }
        let n0: f64 = alpha.iter().sum();
        let k = alpha.len() as f64;
        let p0 = if n0 > 0.0 {
            alpha.iter().map(|a| a / n0).collect()
        } else {
            vec![1.0 / k; alpha.len()]
        };
        Self::dirichlet(p0, n0)
    }

    pub fn normal_mean(mu0: f64, sigma2: f64, n0: f64) -> Result<Self, ConjugateError> {
        check_count(n0)?;
        if !mu0.is_finite() || !(sigma2 > 0.0) {
            return Err(invalid("normal-mean needs finite mu0 and sigma2 > 0"));
        }
        Ok(ConjugateState::NormalMean { mu0, sigma2, n0 })
    }

    pub fn scaled_inv_chi_sq(n0: f64, sigma2: f64) -> Result<Self, ConjugateError> {
        check_count(n0)?;
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(invalid("scale must be finite and >= 0"));
        }
        Ok(ConjugateState::ScaledInvChiSq { n0, sigma2 })
    }

    pub fn normal(mu0: f64, sigma2: f64, n0: f64) -> Result<Self, ConjugateError> {
        check_count(n0)?;
        if !mu0.is_finite() || !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(invalid("normal needs finite mu0 and sigma2 >= 0"));
        }
        Ok(ConjugateState::Normal { mu0, sigma2, n0 })
    }

    /// Named uninformative Beta priors: `jeffreys` (n0 = 1),
    /// `bayes-laplace` (n0 = 2) and `haldane` (n0 = 0, degenerate).
    pub fn preset(name: &str) -> Result<Self, ConjugateError> {
        match name.to_ascii_lowercase().as_str() {
            "jeffreys" => Self::beta(0.5, 1.0),
            "bayes-laplace" | "bayes_laplace" | "uniform" => Self::beta(0.5, 2.0),
            "haldane" => Self::beta(0.5, 0.0),
            other => Err(ConjugateError::UnknownFamily(format!("preset {other}"))),
        }
    }

    pub fn pseudocount(&self) -> f64 {
        match self {
            ConjugateState::Beta { n0, .. }
            | ConjugateState::Dirichlet { n0, .. }
            | ConjugateState::NormalMean { n0, .. }
            | ConjugateState::ScaledInvChiSq { n0, .. }
            | ConjugateState::Normal { n0, .. } => *n0,
        }
    }

    /// A zero pseudocount gives an improper (Haldane-type) prior.
    pub fn is_degenerate(&self) -> bool {
        self.pseudocount() == 0.0
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ConjugateState::Beta { .. } => "beta",
            ConjugateState::Dirichlet { .. } => "dirichlet",
            ConjugateState::NormalMean { .. } => "normal-mean",
            ConjugateState::ScaledInvChiSq { .. } => "scaled-inv-chi-sq",
            ConjugateState::Normal { .. } => "normal",
        }
    }

    /// Success and failure counts of a Beta state.
    pub fn beta_counts(&self) -> Option<(f64, f64)> {
        match self {
            ConjugateState::Beta { theta0, n0 } => Some((theta0 * n0, (1.0 - theta0) * n0)),
            _ => None,
        }
    }

    pub fn dirichlet_counts(&self) -> Option<Vec<f64>> {
        match self {
            ConjugateState::Dirichlet { p0, n0 } => Some(p0.iter().map(|p| p * n0).collect()),
            _ => None,
        }
    }

    /// Distribution over the parameter, when proper and numeric.
    pub fn parameter_distribution(&self) -> Option<Dist> {
        if self.is_degenerate() {
            return None;
        }
        match self {
            ConjugateState::Beta { theta0, n0 } => Dist::beta(*theta0, *n0).ok(),
            ConjugateState::Dirichlet { p0, n0 } => Dist::dirichlet(p0.clone(), *n0).ok(),
            ConjugateState::NormalMean { mu0, sigma2, n0 } => {
                Dist::normal(*mu0, (sigma2 / n0).sqrt()).ok()
            }
            _ => None,
        }
    }

    /// JSON in mean and pseudocount form.
    pub fn to_json(&self) -> Json {
        let mut v = serde_json::to_value(self).expect("state serializes");
        if self.is_degenerate() {
            v["degenerate"] = Json::Bool(true);
        }
        v
    }
}

/// Aggregated observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SufficientStatistic {
    Binary { n: u64, successes: u64 },
    Counts(Vec<u64>),
    Moments { n: u64, sum: f64, sum_sq: f64 },
    Natural { n: u64, aggregate: Vec<f64> },
}

impl SufficientStatistic {
    pub fn binary(successes: u64, n: u64) -> Result<Self, ConjugateError> {
        if successes > n {
            return Err(ConjugateError::InvalidObservations(format!(
                "{successes} successes in {n} trials"
            )));
        }
        Ok(SufficientStatistic::Binary { n, successes })
    }

    pub fn from_bernoulli(xs: &[bool]) -> Self {
        SufficientStatistic::Binary {
            n: xs.len() as u64,
            successes: xs.iter().filter(|&&x| x).count() as u64,
        }
    }

    pub fn from_categories(xs: &[usize], k: usize) -> Result<Self, ConjugateError> {
        let mut counts = vec![0u64; k];
        for &x in xs {
            *counts.get_mut(x).ok_or_else(|| {
                ConjugateError::InvalidObservations(format!("category {x} outside 0..{k}"))
            })? += 1;
        }
        Ok(SufficientStatistic::Counts(counts))
    }

    pub fn from_reals(xs: &[f64]) -> Self {
        SufficientStatistic::Moments {
            n: xs.len() as u64,
            sum: xs.iter().sum(),
            sum_sq: xs.iter().map(|x| x * x).sum(),
        }
    }

    pub fn count(&self) -> u64 {
        match self {
            SufficientStatistic::Binary { n, .. }
            | SufficientStatistic::Moments { n, .. }
            | SufficientStatistic::Natural { n, .. } => *n,
            SufficientStatistic::Counts(c) => c.iter().sum(),
        }
    }
}

fn expect_beta(prior: &ConjugateState) -> Result<(f64, f64), ConjugateError> {
    match prior {
        ConjugateState::Beta { theta0, n0 } => Ok((*theta0, *n0)),
        other => Err(invalid(format!("expected a beta state, got {}", other.family_name()))),
    }
}

/// `Beta((n0 theta0 + successes) / (n0 + n), n0 + n)`; identity when no
/// trials were observed.
pub fn beta_update(
    prior: &ConjugateState,
    obs: &SufficientStatistic,
) -> Result<ConjugateState, ConjugateError> {
    let (theta0, n0) = expect_beta(prior)?;
    let (n, successes) = match obs {
        SufficientStatistic::Binary { n, successes } if successes <= n => (*n, *successes),
        SufficientStatistic::Binary { .. } => {
            return Err(ConjugateError::InvalidObservations("more successes than trials".into()))
        }
        _ => return Err(ConjugateError::InvalidObservations("expected binary outcomes".into())),
    };
    if n == 0 {
        return Ok(prior.clone());
    }
    let total = n0 + n as f64;
    Ok(ConjugateState::Beta {
        theta0: (n0 * theta0 + successes as f64) / total,
        n0: total,
    })
}

/// Componentwise pseudocount addition.
pub fn dirichlet_update(prior: &ConjugateState, counts: &[u64]) -> Result<ConjugateState, ConjugateError> {
    let (p0, n0) = match prior {
        ConjugateState::Dirichlet { p0, n0 } => (p0, *n0),
        other => {
            return Err(invalid(format!(
                "expected a dirichlet state, got {}",
                other.family_name()
            )))
        }
    };
    if counts.len() != p0.len() {
        return Err(ConjugateError::DimensionMismatch {
            expected: p0.len(),
            found: counts.len(),
        });
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Ok(prior.clone());
    }
    let total = n0 + n as f64;
    let p = p0
        .iter()
        .zip(counts)
        .map(|(p, &c)| (n0 * p + c as f64) / total)
        .collect();
    Ok(ConjugateState::Dirichlet { p0: p, n0: total })
}

/// One observation `x` with known variance `sigma2`:
/// `mu_hat = (n0 mu0 + x) / (n0 + 1)`, count `n0 + 1`.
pub fn gaussian_mean_update(
    prior: &ConjugateState,
    x: f64,
    sigma2: f64,
) -> Result<ConjugateState, ConjugateError> {
    let (mu0, n0) = match prior {
        ConjugateState::NormalMean { mu0, n0, .. } => (*mu0, *n0),
        other => {
            return Err(invalid(format!(
                "expected a normal-mean state, got {}",
                other.family_name()
            )))
        }
    };
    if !(sigma2 > 0.0) {
        return Err(invalid("known variance must be positive"));
    }
    if !x.is_finite() {
        return Err(ConjugateError::InvalidObservations(format!("non-finite value {x}")));
    }
    Ok(ConjugateState::NormalMean {
        mu0: (n0 * mu0 + x) / (n0 + 1.0),
        sigma2,
        n0: n0 + 1.0,
    })
}

/// Folds [`gaussian_mean_update`] over `xs`.
pub fn gaussian_mean_update_all(
    prior: &ConjugateState,
    xs: &[f64],
    sigma2: f64,
) -> Result<ConjugateState, ConjugateError> {
    xs.iter()
        .try_fold(prior.clone(), |s, &x| gaussian_mean_update(&s, x, sigma2))
}

/// `sigma2_hat = ((n0 + 1) sigma2_0 + (x - mu_hat)(x - mu0)) / (n0 + 2)`,
/// count `n0 + 1`.
pub fn variance_update(
    prior: &ConjugateState,
    x: f64,
    mu0: f64,
    mu_hat: f64,
) -> Result<ConjugateState, ConjugateError> {
    let (n0, s0) = match prior {
        ConjugateState::ScaledInvChiSq { n0, sigma2 } => (*n0, *sigma2),
        other => {
            return Err(invalid(format!(
                "expected a scaled-inv-chi-sq state, got {}",
                other.family_name()
            )))
        }
    };
    Ok(ConjugateState::ScaledInvChiSq {
        n0: n0 + 1.0,
        sigma2: ((n0 + 1.0) * s0 + (x - mu_hat) * (x - mu0)) / (n0 + 2.0),
    })
}

/// Joint mean and variance update for one observation.
pub fn normal_update(prior: &ConjugateState, x: f64) -> Result<ConjugateState, ConjugateError> {
    let (mu0, s0, n0) = match prior {
        ConjugateState::Normal { mu0, sigma2, n0 } => (*mu0, *sigma2, *n0),
        other => {
            return Err(invalid(format!("expected a normal state, got {}", other.family_name())))
        }
    };
    if !x.is_finite() {
        return Err(ConjugateError::InvalidObservations(format!("non-finite value {x}")));
    }
    let mu_hat = (n0 * mu0 + x) / (n0 + 1.0);
    let sigma2 = ((n0 + 1.0) * s0 + (x - mu_hat) * (x - mu0)) / (n0 + 2.0);
    Ok(ConjugateState::Normal {
        mu0: mu_hat,
        sigma2,
        n0: n0 + 1.0,
    })
}

/// Exponential-family prior `A^N exp(C . M)` in natural form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaturalParams {
    pub n: f64,
    pub m: Vec<f64>,
}

/// `(N + n, M + sum_i D(x_i))`.
pub fn expfam_update(
    prior: &NaturalParams,
    xs: &[f64],
    statistic: impl Fn(f64) -> Vec<f64>,
) -> Result<NaturalParams, ConjugateError> {
    let mut total = vec![0.0; prior.m.len()];
    for &x in xs {
        let d = statistic(x);
        if d.len() != total.len() {
            return Err(ConjugateError::DimensionMismatch {
                expected: total.len(),
                found: d.len(),
            });
        }
        for (t, v) in total.iter_mut().zip(d) {
            *t += v;
        }
    }
    Ok(NaturalParams {
        n: prior.n + xs.len() as f64,
        m: prior.m.iter().zip(total).map(|(m, s)| m + s).collect(),
    })
}

/// `D(x) = [x]` for 0/1 outcomes.
pub fn bernoulli_statistic(x: f64) -> Vec<f64> {
    vec![x]
}

/// `D(x) = (1, x, x^2)`.
pub fn normal_statistic(x: f64) -> Vec<f64> {
    vec![1.0, x, x * x]
}

pub fn beta_to_natural(state: &ConjugateState) -> Result<NaturalParams, ConjugateError> {
    let (theta0, n0) = expect_beta(state)?;
    Ok(NaturalParams {
        n: n0,
        m: vec![n0 * theta0],
    })
}

pub fn natural_to_beta(nat: &NaturalParams) -> Result<ConjugateState, ConjugateError> {
    if nat.m.len() != 1 {
        return Err(ConjugateError::DimensionMismatch {
            expected: 1,
            found: nat.m.len(),
        });
    }
    if nat.n == 0.0 {
        return ConjugateState::beta(0.5, 0.0);
    }
    ConjugateState::beta(nat.m[0] / nat.n, nat.n)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BetaPrior {
    MeanCount { theta0: f64, n0: f64 },
    Counts { alpha: f64, beta: f64 },
    Preset { preset: String },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DirichletPrior {
    MeanCount { p0: Vec<f64>, n0: f64 },
    Counts { alpha: Vec<f64> },
}

#[derive(Debug, Deserialize)]
struct GaussianPrior {
    mu0: f64,
    n0: f64,
    sigma2: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BinaryData {
    Summary { successes: u64, trials: u64 },
    Flags(Vec<bool>),
    Numbers(Vec<u8>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CategoricalData {
    Summary { counts: Vec<u64> },
    Samples(Vec<usize>),
}

fn payload<T: serde::de::DeserializeOwned>(v: &Json, what: &str) -> Result<T, ConjugateError> {
    serde_json::from_value(v.clone()).map_err(|e| ConjugateError::Payload(format!("{what}: {e}")))
}

/// Runs one update from JSON prior and observations and returns the
/// posterior in mean and pseudocount JSON. Families: `beta`, `dirichlet`,
/// `normal-mean`, `normal`.
pub fn update_json(family: &str, prior: &Json, data: &Json) -> Result<Json, ConjugateError> {
    let posterior = match family.to_ascii_lowercase().as_str() {
        "beta" => {
            let prior = match payload::<BetaPrior>(prior, "prior")? {
                BetaPrior::MeanCount { theta0, n0 } => ConjugateState::beta(theta0, n0)?,
                BetaPrior::Counts { alpha, beta } => ConjugateState::beta_from_counts(alpha, beta)?,
                BetaPrior::Preset { preset } => ConjugateState::preset(&preset)?,
            };
            let stat = match payload::<BinaryData>(data, "observations")? {
                BinaryData::Summary { successes, trials } => {
                    SufficientStatistic::binary(successes, trials)?
                }
                BinaryData::Flags(xs) => SufficientStatistic::from_bernoulli(&xs),
                BinaryData::Numbers(xs) => {
                    if xs.iter().any(|&x| x > 1) {
                        return Err(ConjugateError::InvalidObservations(
                            "binary outcomes must be 0 or 1".into(),
                        ));
                    }
                    let flags: Vec<bool> = xs.iter().map(|&x| x == 1).collect();
                    SufficientStatistic::from_bernoulli(&flags)
                }
            };
            beta_update(&prior, &stat)?
        }
        "dirichlet" => {
            let prior = match payload::<DirichletPrior>(prior, "prior")? {
                DirichletPrior::MeanCount { p0, n0 } => ConjugateState::dirichlet(p0, n0)?,
                DirichletPrior::Counts { alpha } => ConjugateState::dirichlet_from_counts(&alpha)?,
            };
            let k = match &prior {
                ConjugateState::Dirichlet { p0, .. } => p0.len(),
                _ => unreachable!(),
            };
            let counts = match payload::<CategoricalData>(data, "observations")? {
                CategoricalData::Summary { counts } => counts,
                CategoricalData::Samples(xs) => match SufficientStatistic::from_categories(&xs, k)? {
                    SufficientStatistic::Counts(c) => c,
                    _ => unreachable!(),
                },
            };
            dirichlet_update(&prior, &counts)?
        }
        "normal-mean" => {
            let p: GaussianPrior = payload(prior, "prior")?;
            let xs: Vec<f64> = payload(data, "observations")?;
            let state = ConjugateState::normal_mean(p.mu0, p.sigma2, p.n0)?;
            gaussian_mean_update_all(&state, &xs, p.sigma2)?
        }
        "normal" => {
            let p: GaussianPrior = payload(prior, "prior")?;
            let xs: Vec<f64> = payload(data, "observations")?;
            let state = ConjugateState::normal(p.mu0, p.sigma2, p.n0)?;
            xs.iter().try_fold(state, |s, &x| normal_update(&s, x))?
        }
        other => return Err(ConjugateError::UnknownFamily(other.to_string())),
    };
    Ok(json!({ "family": family.to_ascii_lowercase(), "posterior": posterior.to_json() }))
}

/// `{"family": .., "prior": {..}, "observations": ..}` to posterior JSON.
pub fn update_payload(payload: &Json) -> Result<Json, ConjugateError> {
    let family = payload
        .get("family")
        .and_then(Json::as_str)
        .ok_or_else(|| ConjugateError::Payload("missing string field \"family\"".into()))?;
    let prior = payload
        .get("prior")
        .ok_or_else(|| ConjugateError::Payload("missing field \"prior\"".into()))?;
    let data = payload
        .get("observations")
        .ok_or_else(|| ConjugateError::Payload("missing field \"observations\"".into()))?;
    update_json(family, prior, data)
}
