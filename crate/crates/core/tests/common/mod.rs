//! Numerical oracles shared by the property and acceptance suites. Densities
//! here are written out directly rather than taken from the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use elbo_forge_core::quadrature::{gauss_legendre_on, integrate};
use elbo_forge_core::Dist;
use statrs::function::gamma::ln_gamma;

pub fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - (sigma * (2.0 * PI).sqrt()).ln()
}

pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

fn ln_dirichlet_norm(alpha: &[f64]) -> f64 {
    ln_gamma(alpha.iter().sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>()
}

/// Unnormalized log-density of a Dirichlet at `x`, without the constant.
fn dirichlet_kernel(x: &[f64], alpha: &[f64]) -> f64 {
    x.iter().zip(alpha).map(|(&xi, &a)| (a - 1.0) * xi.ln()).sum()
}

/// Collapsed coordinates of the 2-simplex: `(u, (1-u) v, (1-u)(1-v))`,
/// Jacobian `1 - u`.
pub fn simplex3(u: f64, v: f64) -> [f64; 3] {
    [u, (1.0 - u) * v, (1.0 - u) * (1.0 - v)]
}

/// Integral of `f` over the 2-simplex in collapsed coordinates.
pub fn integrate_simplex3(f: impl Fn([f64; 3]) -> f64) -> f64 {
    integrate(|u| (1.0 - u) * integrate(|v| f(simplex3(u, v)), 0.0, 1.0), 0.0, 1.0)
}

/// `KL(q || p)` by quadrature or summation over the support.
pub fn kl_oracle(q: &Dist, p: &Dist) -> f64 {
    let plogp = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    match (q, p) {
        (Dist::Normal { mu: mq, sigma: sq }, Dist::Normal { mu: mp, sigma: sp }) => {
            // Centre and scale the range on q so the rule sees the mass.
            let f = |t: f64| {
                let x = mq + sq * t;
                let lq = normal_logpdf(x, *mq, *sq);
                let lp = normal_logpdf(x, *mp, *sp);
                sq * lq.exp() * (lq - lp)
            };
            integrate(f, f64::NEG_INFINITY, f64::INFINITY)
        }
        (Dist::Bernoulli { p: a }, Dist::Bernoulli { p: b }) => {
            plogp(*a, *b) + plogp(1.0 - a, 1.0 - b)
        }
        (Dist::Categorical { probs: a }, Dist::Categorical { probs: b }) => {
            a.iter().zip(b).map(|(&x, &y)| plogp(x, y)).sum()
        }
        (Dist::Beta { .. }, Dist::Beta { .. }) => {
            let (aq, bq) = q.beta_counts().unwrap();
            let (ap, bp) = p.beta_counts().unwrap();
            let f = |x: f64| {
                let lq = beta_logpdf(x, aq, bq);
                let lp = beta_logpdf(x, ap, bp);
                lq.exp() * (lq - lp)
            };
            integrate(f, 0.0, 1.0)
        }
        (Dist::Dirichlet { .. }, Dist::Dirichlet { .. }) => {
            let aq = q.dirichlet_counts().unwrap();
            let ap = p.dirichlet_counts().unwrap();
            assert_eq!(aq.len(), 3, "oracle covers three categories");
            let (nq, np) = (ln_dirichlet_norm(&aq), ln_dirichlet_norm(&ap));
            integrate_simplex3(|x| {
                let lq = nq + dirichlet_kernel(&x, &aq);
                let lp = np + dirichlet_kernel(&x, &ap);
                lq.exp() * (lq - lp)
            })
        }
        _ => panic!("no oracle for this pair"),
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Largest pointwise relative error between the closed-form Beta posterior
/// `post` and prior times likelihood for `s` successes in `n` trials,
/// normalized by quadrature, on a 1000-point Gauss-Legendre grid.
pub fn beta_grid_error(prior: (f64, f64), s: u64, n: u64, post: &Dist) -> f64 {
    let (a, b) = prior;
    let (s, f) = (s as f64, (n - s) as f64);
    let log_u = |t: f64| beta_logpdf(t, a, b) + s * t.ln() + f * (1.0 - t).ln();
    let (grid, _) = gauss_legendre_on(1000, 0.0, 1.0);
    let shift = grid.iter().map(|&t| log_u(t)).fold(f64::NEG_INFINITY, f64::max);
    let z = integrate(|t| (log_u(t) - shift).exp(), 0.0, 1.0);
    let (pa, pb) = post.beta_counts().unwrap();
    grid.iter()
        .map(|&t| (log_u(t) - shift - z.ln() - beta_logpdf(t, pa, pb)).exp_m1().abs())
        .fold(0.0, f64::max)
}

/// As [`beta_grid_error`] for a three-category Dirichlet with category
/// counts, on a 32 x 32 collapsed Gauss-Legendre grid.
pub fn dirichlet3_grid_error(prior: &[f64], counts: &[u64], post: &Dist) -> f64 {
    let log_u = |x: [f64; 3]| {
        ln_dirichlet_norm(prior)
            + dirichlet_kernel(&x, prior)
            + x.iter().zip(counts).map(|(&xi, &c)| c as f64 * xi.ln()).sum::<f64>()
    };
    let (g, _) = gauss_legendre_on(32, 0.0, 1.0);
    let nodes: Vec<[f64; 3]> = g
        .iter()
        .flat_map(|&u| g.iter().map(move |&v| simplex3(u, v)))
        .collect();
    let shift = nodes.iter().map(|&x| log_u(x)).fold(f64::NEG_INFINITY, f64::max);
    let z = integrate_simplex3(|x| (log_u(x) - shift).exp());
    let ap = post.dirichlet_counts().unwrap();
    let np = ln_dirichlet_norm(&ap);
    nodes
        .iter()
        .map(|&x| (log_u(x) - shift - z.ln() - np - dirichlet_kernel(&x, &ap)).exp_m1().abs())
        .fold(0.0, f64::max)
}

/// Total mass of `d` by quadrature (continuous) or summation (discrete).
pub fn total_mass(d: &Dist) -> f64 {
    use elbo_forge_core::Value;
    let density = |x: Value| d.log_prob(&x).map(f64::exp).unwrap_or(0.0);
    match d {
        // Split at the location so the kink of the Laplace sits on an endpoint.
        Dist::Normal { mu, .. } | Dist::Laplace { mu, .. } => {
            integrate(|x| density(Value::Real(x)), f64::NEG_INFINITY, *mu)
                + integrate(|x| density(Value::Real(x)), *mu, f64::INFINITY)
        }
        Dist::Uniform { low, high } => integrate(|x| density(Value::Real(x)), *low, *high),
        // Reflect the upper half so nodes near 1 do not round onto the endpoint.
        Dist::Beta { .. } => {
            let (a, b) = d.beta_counts().unwrap();
            let mirror = Dist::beta_from_counts(b, a).unwrap();
            let upper = |t: f64| mirror.log_prob(&Value::Real(t)).map(f64::exp).unwrap_or(0.0);
            integrate(|x| density(Value::Real(x)), 0.0, 0.5) + integrate(upper, 0.0, 0.5)
        }
        Dist::Gamma { .. } => integrate(|x| density(Value::Real(x)), 0.0, f64::INFINITY),
        Dist::Dirichlet { p0, .. } if p0.len() == 2 => {
            integrate(|x| density(Value::Vector(vec![x, 1.0 - x])), 0.0, 0.5)
                + integrate(|t| density(Value::Vector(vec![1.0 - t, t])), 0.0, 0.5)
        }
        Dist::Dirichlet { .. } => integrate_simplex3(|x| density(Value::Vector(x.to_vec()))),
        _ => {
            let k = d.discrete_support().expect("finite support");
            (0..k).map(|i| density(Value::Index(i))).sum()
        }
    }
}

/// A random model with real-valued variables and opaque function calls as
/// parameters, plus a shared scale parameter and one guide per latent.
pub fn random_symbolic_model(seed: u64) -> elbo_forge_core::GraphicalModel {
    use elbo_forge_core::model::{DistributionSpec, Param, Role, Support, Variable};
    use elbo_forge_core::{Family, GraphicalModel};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5usize);
    let mut observed: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    observed[0] = false;
    observed[n - 1] = true;
    let names: Vec<String> = (0..n)
        .map(|i| format!("{}{i}", if observed[i] { "obs" } else { "lat" }))
        .collect();
    let mut m = GraphicalModel::new(format!("sym{seed}"));
    m.add_variable(
        Variable::new("sigma", Support::PositiveReal, Role::Parameter),
        DistributionSpec::new(Family::Const, vec![Param::Number(0.5 + (seed % 7) as f64)]),
    );
    for i in 0..n {
        let parents: Vec<String> = (0..i).filter(|_| rng.random_bool(0.5)).map(|p| names[p].clone()).collect();
        let mu = if parents.is_empty() {
            Param::Number(rng.random_range(-3..=3) as f64)
        } else {
            Param::Call { name: format!("f{i}"), args: parents }
        };
        let scale = if rng.random_bool(0.5) { Param::Symbol("sigma".into()) } else { Param::Number(1.5) };
        let role = if observed[i] { Role::Observed } else { Role::Latent };
        m.add_variable(
            Variable::new(names[i].clone(), Support::Real, role),
            DistributionSpec::new(Family::Normal, vec![mu, scale]),
        );
    }
    for i in (0..n).filter(|&i| !observed[i]) {
        let mut parents: Vec<String> = (0..n)
            .filter(|&j| observed[j] || (j < i && rng.random_bool(0.3)))
            .map(|j| names[j].clone())
            .collect();
        if parents.is_empty() {
            parents.push(names[n - 1].clone());
        }
        m.add_guide(
            vec![names[i].clone()],
            parents.clone(),
            DistributionSpec::new(
                Family::Normal,
                vec![Param::Call { name: format!("enc{i}"), args: parents }, Param::Number(1.0)],
            ),
        );
    }
    m
}
