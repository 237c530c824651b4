//! One check per acceptance criterion. Each prints a single pass/fail line;
//! the test fails if any criterion does.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{beta_grid_error, dirichlet3_grid_error, kl_oracle, random_symbolic_model, relative_error, total_mass};
use elbo_forge_core::conjugate::{
    beta_to_natural, beta_update, bernoulli_statistic, dirichlet_update, expfam_update, natural_to_beta,
    variance_update,
};
use elbo_forge_core::elbo::{
    derive, enumerate_qprime, heuristic_filter, partition, FactorRef, HeuristicReason, QPrimeSelection, RatioTag,
    Verdict,
};
use elbo_forge_core::examples::{ALL, LATPLAN, VAE, VEEGAN_FLIPPED};
use elbo_forge_core::expr::{Env, Syntax};
use elbo_forge_core::verify::{
    brute_force_mle, completeness_check, exact_log_evidence, numeric_elbo, observation_space, posterior_guides,
    random_tabular_model, set_partitions, soundness_check, DiscreteDataset, EquivalencePartition, Strategy,
    ValidityPartition,
};
use elbo_forge_core::zoo::{cross_entropy, kl, nll_formula, ParamValue};
use elbo_forge_core::{
    parse_model, render_model, ConjugateState, Dist, DistributionInstance, Family, GraphicalModel,
    SufficientStatistic, Value,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn labels(fs: &[FactorRef]) -> Vec<String> {
    fs.iter().map(FactorRef::label).collect()
}

fn sel(m: &GraphicalModel, l: &[&str]) -> QPrimeSelection {
    QPrimeSelection::from_labels(m, l).unwrap()
}

fn vae_reproduction() -> Outcome {
    let start = Instant::now();
    let m = parse_model(VAE).map_err(|e| e.to_string())?;
    let e = derive(&m, &sel(&m, &["q(z|x)"])).map_err(|e| e.to_string())?;
    ensure(e.reconstruction_terms.len() == 1 && e.ratio_terms.len() == 1, || e.render(Syntax::Text))?;
    let r = &e.reconstruction_terms[0];
    ensure(r.factor.label() == "p(x|z)" && labels(&r.context) == ["q(z|x)"], || e.render(Syntax::Text))?;
    let k = &e.ratio_terms[0];
    ensure(
        k.tag == RatioTag::ProperKl && k.q.label() == "q(z|x)" && k.p.label() == "p(z)" && k.context.is_empty(),
        || e.render(Syntax::Text),
    )?;
    within(start, Duration::from_secs(1))?;
    Ok(e.render(Syntax::Text))
}

fn latplan_reproduction() -> Outcome {
    let start = Instant::now();
    let m = parse_model(LATPLAN).map_err(|e| e.to_string())?;
    let q1 = sel(&m, &["q(z0|x0)", "q(a|x0,x1)"]);
    let p2: Vec<String> = partition(&m, &q1).p2.iter().map(|&i| m.generative_label(i)).collect();
    ensure(p2 == ["p(z1|z0,a)"], || format!("Q'1 p2 = {p2:?}"))?;
    let e1 = derive(&m, &q1).map_err(|e| e.to_string())?;
    ensure(e1.reconstruction_terms.len() == 2 && e1.ratio_terms.len() == 2, || e1.render(Syntax::Text))?;
    let q2 = sel(&m, &["q(z0|x0)", "q(z1|x1)", "q(a|x0,x1)"]);
    ensure(partition(&m, &q2).p2.is_empty(), || "Q'2 p2 not empty".into())?;
    let e2 = derive(&m, &q2).map_err(|e| e.to_string())?;
    ensure(
        e2.reconstruction_terms.len() == 2 && e2.ratio_terms.len() == 3 && e2.kl_count() == 3,
        || e2.render(Syntax::Text),
    )?;
    within(start, Duration::from_secs(1))?;
    Ok("Q'1: 2 + 2 with p2 = {p(z1|z0,a)}; Q'2: 2 + 3 KLs with p2 empty".into())
}

fn degenerate_bound() -> Outcome {
    let m = parse_model(VAE).map_err(|e| e.to_string())?;
    let empty = QPrimeSelection::empty();
    let text = derive(&m, &empty).map_err(|e| e.to_string())?.render(Syntax::Text);
    ensure(text == "E_{p(z)}[log p(x|z)]", || text.clone())?;
    let r = heuristic_filter(&m, &enumerate_qprime(&m)).map_err(|e| e.to_string())?;
    let a = r.assessments.iter().find(|a| a.selection.is_empty()).ok_or("no empty selection")?;
    ensure(
        a.verdict == Verdict::Rejected && a.reasons.contains(&HeuristicReason::IgnoresInput),
        || format!("{a:?}"),
    )?;
    Ok(format!("{text} rejected: {}", HeuristicReason::IgnoresInput.as_str()))
}

fn veegan_bound() -> Outcome {
    let m = parse_model(VEEGAN_FLIPPED).map_err(|e| e.to_string())?;
    let e = derive(&m, &sel(&m, &["p(x|z)"])).map_err(|e| e.to_string())?;
    let r = &e.reconstruction_terms;
    let k = &e.ratio_terms;
    ensure(
        r.len() == 1 && r[0].factor.label() == "q(z|x)" && labels(&r[0].context) == ["p(x|z)"],
        || e.render(Syntax::Text),
    )?;
    ensure(
        k.len() == 1 && k[0].tag == RatioTag::ProperKl && k[0].q.label() == "p(x|z)" && k[0].p.label() == "q(x)",
        || e.render(Syntax::Text),
    )?;
    Ok(e.render(Syntax::Text))
}

fn jensen_suite() -> Outcome {
    let start = Instant::now();
    let (mut bounds, mut worst_gap) = (0usize, 0.0f64);
    for seed in 0..100 {
        let m = random_tabular_model(seed);
        let tight = posterior_guides(&m).map_err(|e| e.to_string())?;
        let full = enumerate_qprime(&tight).pop().unwrap();
        for obs in observation_space(&m).map_err(|e| e.to_string())? {
            let exact = exact_log_evidence(&m, &obs).map_err(|e| e.to_string())?;
            for s in enumerate_qprime(&m) {
                let v = numeric_elbo(&m, &s, &obs, Strategy::Enumerate).map_err(|e| e.to_string())?;
                ensure(v <= exact + 1e-9, || format!("seed {seed}: elbo {v} > log evidence {exact}"))?;
                bounds += 1;
            }
            if exact > f64::NEG_INFINITY {
                let v = numeric_elbo(&tight, &full, &obs, Strategy::Enumerate).map_err(|e| e.to_string())?;
                worst_gap = worst_gap.max(exact - v);
            }
        }
    }
    ensure(worst_gap <= 1e-9, || format!("posterior-guide gap {worst_gap:e}"))?;
    within(start, Duration::from_secs(60))?;
    Ok(format!("{bounds} bounds checked, posterior gap {worst_gap:.1e}, {:.2?}", start.elapsed()))
}

fn perfect_overfitting() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let size = rng.random_range(1..=50);
        let n = rng.random_range(1..=200);
        let d = DiscreteDataset::over_indices(size, (0..n).map(|_| rng.random_range(0..size)).collect())
            .map_err(|e| e.to_string())?;
        let r = brute_force_mle(&d).map_err(|e| e.to_string())?;
        ensure(r.kl <= 1e-9, || format!("KL {:e}", r.kl))?;
        worst = worst.max(r.total_variation);
    }
    ensure(worst <= 1e-6, || format!("TV {worst:e}"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!("max TV {worst:.1e}, {:.2?}", start.elapsed()))
}

fn soundness_completeness() -> Outcome {
    let start = Instant::now();
    let mut cases = 0usize;
    for n in 1..=6usize {
        let partitions = set_partitions(n);
        for valid_mask in 1u32..(1 << n) {
            let valid: Vec<usize> = (0..n).filter(|i| valid_mask & (1 << i) != 0).collect();
            let part = ValidityPartition::new(n, &valid).map_err(|e| e.to_string())?;
            for data_mask in (1u32..(1 << n)).filter(|d| d & !valid_mask == 0) {
                let samples: Vec<usize> = (0..n).filter(|i| data_mask & (1 << i) != 0).collect();
                let d = DiscreteDataset::over_indices(n, samples).map_err(|e| e.to_string())?;
                let mle = brute_force_mle(&d).map_err(|e| e.to_string())?;
                ensure(soundness_check(&mle.optimum, &part).sound, || {
                    format!("unsound optimum, valid {valid:?} data {data_mask:b}")
                })?;
                for classes in &partitions {
                    if let Ok(r) = completeness_check(&d, &part, classes) {
                        ensure(!r.generalizes || r.complete, || format!("counterexample {classes:?}"))?;
                        cases += 1;
                    }
                }
                if data_mask != valid_mask {
                    let r = completeness_check(&d, &part, &EquivalencePartition::singletons(n))
                        .map_err(|e| e.to_string())?;
                    ensure(!r.complete, || format!("singletons not flagged, valid {valid:?}"))?;
                }
            }
        }
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!("{cases} hypothesis cases, 0 counterexamples, {:.2?}", start.elapsed()))
}

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn kl_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for family in 0..5 {
        for _ in 0..50 {
            let draw = |rng: &mut ChaCha8Rng| match family {
                0 => Dist::normal(rng.random_range(-3.0..3.0), rng.random_range(0.2..3.0)).unwrap(),
                1 => Dist::bernoulli(rng.random_range(0.01..0.99)).unwrap(),
                2 => Dist::categorical(simplex(rng, 4)).unwrap(),
                3 => Dist::beta_from_counts(rng.random_range(0.5..8.0), rng.random_range(0.5..8.0)).unwrap(),
                _ => {
                    let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..8.0)).collect();
                    Dist::dirichlet_from_counts(&a).unwrap()
                }
            };
            let (q, p) = (draw(&mut rng), draw(&mut rng));
            let closed = kl(&q, &p).map_err(|e| e.to_string())?;
            ensure(closed >= -1e-12, || format!("negative KL {closed} for {q:?} {p:?}"))?;
            let err = relative_error(closed, kl_oracle(&q, &p));
            ensure(err <= 1e-6, || format!("{q:?} {p:?}: relative error {err:e}"))?;
            worst = worst.max(err);
            let ce = cross_entropy(&q, &p).map_err(|e| e.to_string())?;
            let h = q.entropy().map_err(|e| e.to_string())?;
            ensure((ce - h - closed).abs() <= 1e-9, || format!("cross-entropy identity off for {q:?} {p:?}"))?;
        }
    }
    Ok(format!("250 pairs, max relative error {worst:.1e}"))
}

fn conjugate_updates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (a, b) = (rng.random_range(0.5..10.0), rng.random_range(0.5..10.0));
        let n = rng.random_range(0..200u64);
        let s = rng.random_range(0..=n);
        let prior = ConjugateState::beta_from_counts(a, b).map_err(|e| e.to_string())?;
        let post = beta_update(&prior, &SufficientStatistic::binary(s, n).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max(beta_grid_error((a, b), s, n, &post.parameter_distribution().unwrap()));

        let alpha: Vec<f64> = (0..3).map(|_| rng.random_range(0.8..6.0)).collect();
        let counts: Vec<u64> = (0..3).map(|_| rng.random_range(0..25)).collect();
        let prior = ConjugateState::dirichlet_from_counts(&alpha).map_err(|e| e.to_string())?;
        let post = dirichlet_update(&prior, &counts).map_err(|e| e.to_string())?;
        worst = worst.max(dirichlet3_grid_error(&alpha, &counts, &post.parameter_distribution().unwrap()));
    }
    ensure(worst <= 1e-4, || format!("grid-Bayes relative density error {worst:e}"))?;

    for case in 0..100 {
        let prior = ConjugateState::beta(rng.random_range(0.02..0.98), rng.random_range(0.1..30.0)).unwrap();
        let len = rng.random_range(1..60);
        let xs: Vec<bool> = (0..len).map(|_| rng.random_bool(0.5)).collect();
        let direct = beta_update(&prior, &SufficientStatistic::from_bernoulli(&xs)).map_err(|e| e.to_string())?;
        let ones: Vec<f64> = xs.iter().map(|&x| f64::from(u8::from(x))).collect();
        let nat = expfam_update(&beta_to_natural(&prior).unwrap(), &ones, bernoulli_statistic)
            .map_err(|e| e.to_string())?;
        let via = natural_to_beta(&nat).map_err(|e| e.to_string())?;
        let bits = |s: &ConjugateState| match s {
            ConjugateState::Beta { theta0, n0 } => (theta0.to_bits(), n0.to_bits()),
            _ => unreachable!(),
        };
        ensure(bits(&via) == bits(&direct), || format!("case {case}: {via:?} vs {direct:?}"))?;
    }

    let haldane = ConjugateState::preset("haldane").unwrap();
    let post = beta_update(&haldane, &SufficientStatistic::binary(520, 1000).unwrap()).map_err(|e| e.to_string())?;
    ensure(post == ConjugateState::Beta { theta0: 0.52, n0: 1000.0 }, || format!("{post:?}"))?;
    let prior = ConjugateState::scaled_inv_chi_sq(1.0, 1.0).map_err(|e| e.to_string())?;
    let v = variance_update(&prior, 2.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    ensure(v == ConjugateState::ScaledInvChiSq { n0: 2.0, sigma2: 4.0 / 3.0 }, || format!("{v:?}"))?;
    let mut s = ConjugateState::scaled_inv_chi_sq(1.0, 1.0).unwrap();
    let mut last = f64::INFINITY;
    for _ in 0..20 {
        s = variance_update(&s, 3.0, 3.0, 3.0).unwrap();
        let ConjugateState::ScaledInvChiSq { sigma2, .. } = s else { unreachable!() };
        ensure(sigma2 < last, || "variance did not shrink monotonically".into())?;
        last = sigma2;
    }
    Ok(format!("grid error {worst:.1e}, 100 bitwise matches, Beta(0.52, 1000), sigma2 = 4/3"))
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut families = 0;
    for _ in 0..5 {
        let dists = [
            Dist::normal(rng.random_range(-5.0..5.0), rng.random_range(0.1..4.0)).unwrap(),
            Dist::laplace(rng.random_range(-5.0..5.0), rng.random_range(0.1..4.0)).unwrap(),
            Dist::uniform(-1.0, rng.random_range(0.0..5.0)).unwrap(),
            Dist::beta(rng.random_range(0.05..0.95), rng.random_range(1.0..20.0)).unwrap(),
            Dist::gamma(rng.random_range(0.5..8.0), rng.random_range(0.2..3.0)).unwrap(),
            Dist::dirichlet(simplex(&mut rng, 2), rng.random_range(2.0..15.0)).unwrap(),
            Dist::dirichlet(simplex(&mut rng, 3), rng.random_range(3.0..15.0)).unwrap(),
            Dist::bernoulli(rng.random_range(0.0..1.0)).unwrap(),
            Dist::categorical(simplex(&mut rng, 5)).unwrap(),
            Dist::binomial(rng.random_range(0..40), rng.random_range(0.0..1.0)).unwrap(),
        ];
        for d in &dists {
            let tol = if d.discrete_support().is_some() { 1e-12 } else { 1e-6 };
            let mass = total_mass(d);
            ensure((mass - 1.0).abs() <= tol, || format!("{d:?}: mass {mass}"))?;
        }
        families = dists.len();
    }
    let inst = DistributionInstance::new(
        Family::Normal,
        vec![ParamValue::Symbol("mu".into()), ParamValue::Symbol("sigma".into())],
    );
    let f = nll_formula(&inst, "x", false).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x, mu, sigma) = (rng.random_range(-10.0..10.0), rng.random_range(-5.0..5.0), rng.random_range(0.05..5.0));
        let env = Env::new().set("x", x).set("mu", mu).set("sigma", sigma);
        let lp = Dist::normal(mu, sigma).unwrap().log_prob(&Value::Real(x)).unwrap();
        worst = worst.max((f.eval(&env).map_err(|e| e.to_string())? + lp).abs());
    }
    ensure(worst <= 1e-12, || format!("NLL formula off by {worst:e}"))?;
    Ok(format!("{families} families normalized, NLL max error {worst:.1e}"))
}

fn dsl_round_trip() -> Outcome {
    let mut models: Vec<GraphicalModel> = ALL.iter().map(|(_, s)| parse_model(s).unwrap()).collect();
    models.extend((0..10).map(random_tabular_model));
    models.extend((0..10).map(random_symbolic_model));
    for m in &models {
        let once = render_model(m);
        let back = parse_model(&once).map_err(|e| format!("{}: {e}", m.name))?;
        let twice = render_model(&back);
        ensure(once == twice, || format!("{} is not a fixpoint", m.name))?;
        ensure(render_model(&parse_model(&twice).unwrap()) == twice, || format!("{} drifted", m.name))?;
    }
    Ok(format!("{} models byte-stable", models.len()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 11] = [
        ("VAE ELBO reproduction", vae_reproduction),
        ("Latplan reproduction", latplan_reproduction),
        ("degenerate-bound detection", degenerate_bound),
        ("VEEGAN bound", veegan_bound),
        ("Jensen suite", jensen_suite),
        ("perfect overfitting", perfect_overfitting),
        ("soundness and completeness", soundness_completeness),
        ("KL closed forms", kl_closed_forms),
        ("conjugate updates", conjugate_updates),
        ("normalization", normalization),
        ("DSL round trip", dsl_round_trip),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let line = match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => format!("[PASS] criterion {}: {name}: {detail}", i + 1),
            Ok(Err(why)) => {
                failed.push(i + 1);
                format!("[FAIL] criterion {}: {name}: {why}", i + 1)
            }
            Err(_) => {
                failed.push(i + 1);
                format!("[FAIL] criterion {}: {name}: panicked", i + 1)
            }
        };
        let _ = writeln!(err, "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
