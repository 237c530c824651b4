mod common;

use common::{beta_grid_error, dirichlet3_grid_error, relative_error};
use elbo_forge_core::conjugate::{
    beta_to_natural, beta_update, bernoulli_statistic, dirichlet_update, expfam_update,
    gaussian_mean_update_all, natural_to_beta, normal_update, ConjugateState, SufficientStatistic,
};
use proptest::prelude::*;

fn counts_of(s: &ConjugateState) -> Vec<f64> {
    match s {
        ConjugateState::Beta { .. } => {
            let (a, b) = s.beta_counts().unwrap();
            vec![a, b]
        }
        ConjugateState::Dirichlet { .. } => s.dirichlet_counts().unwrap(),
        _ => unreachable!(),
    }
}

fn count_matches(state: &ConjugateState, expected: f64) -> bool {
    (state.pseudocount() - expected).abs() <= 1e-12 * expected.max(1.0)
}

fn close(a: &ConjugateState, b: &ConjugateState) -> bool {
    let pairs: Vec<(f64, f64)> = match (a, b) {
        (ConjugateState::Beta { theta0: t1, n0: n1 }, ConjugateState::Beta { theta0: t2, n0: n2 }) => {
            vec![(*t1, *t2), (*n1, *n2)]
        }
        (ConjugateState::Dirichlet { p0: p1, n0: n1 }, ConjugateState::Dirichlet { p0: p2, n0: n2 }) => {
            p1.iter().zip(p2).map(|(x, y)| (*x, *y)).chain([(*n1, *n2)]).collect()
        }
        (
            ConjugateState::NormalMean { mu0: m1, sigma2: s1, n0: n1 },
            ConjugateState::NormalMean { mu0: m2, sigma2: s2, n0: n2 },
        )
        | (
            ConjugateState::Normal { mu0: m1, sigma2: s1, n0: n1 },
            ConjugateState::Normal { mu0: m2, sigma2: s2, n0: n2 },
        ) => vec![(*m1, *m2), (*s1, *s2), (*n1, *n2)],
        _ => return false,
    };
    pairs.iter().all(|&(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
}

fn beta_prior() -> impl Strategy<Value = ConjugateState> {
    (0.02f64..0.98, 0.1f64..30.0).prop_map(|(t, n)| ConjugateState::beta(t, n).unwrap())
}

fn flips() -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn beta_batching_commutes(prior in beta_prior(), a in flips(), b in flips()) {
        let seq = beta_update(
            &beta_update(&prior, &SufficientStatistic::from_bernoulli(&a)).unwrap(),
            &SufficientStatistic::from_bernoulli(&b),
        ).unwrap();
        let all: Vec<bool> = a.iter().chain(&b).copied().collect();
        let once = beta_update(&prior, &SufficientStatistic::from_bernoulli(&all)).unwrap();
        prop_assert!(close(&seq, &once), "{seq:?} vs {once:?}");
        prop_assert_eq!(once.pseudocount(), prior.pseudocount() + all.len() as f64);
    }

    #[test]
    fn dirichlet_batching_commutes(
        p in prop::collection::vec(0.1f64..1.0, 3),
        n0 in 0.5f64..20.0,
        a in prop::collection::vec(0u64..20, 3),
        b in prop::collection::vec(0u64..20, 3),
    ) {
        let s: f64 = p.iter().sum();
        let prior = ConjugateState::dirichlet(p.iter().map(|x| x / s).collect(), n0);
        prop_assume!(prior.is_ok());
        let prior = prior.unwrap();
        let seq = dirichlet_update(&dirichlet_update(&prior, &a).unwrap(), &b).unwrap();
        let ab: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let once = dirichlet_update(&prior, &ab).unwrap();
        prop_assert!(close(&seq, &once));
        prop_assert_eq!(once.pseudocount(), n0 + ab.iter().sum::<u64>() as f64);
    }

    #[test]
    fn gaussian_batching_commutes(
        mu0 in -5.0f64..5.0,
        sigma2 in 0.1f64..4.0,
        n0 in 0.0f64..10.0,
        a in prop::collection::vec(-10.0f64..10.0, 0..20),
        b in prop::collection::vec(-10.0f64..10.0, 0..20),
    ) {
        let prior = ConjugateState::normal_mean(mu0, sigma2, n0).unwrap();
        let seq = gaussian_mean_update_all(&gaussian_mean_update_all(&prior, &a, sigma2).unwrap(), &b, sigma2).unwrap();
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let once = gaussian_mean_update_all(&prior, &all, sigma2).unwrap();
        prop_assert!(close(&seq, &once));
        prop_assert!(count_matches(&once, n0 + all.len() as f64));
        if n0 + all.len() as f64 > 0.0 {
            let closed = (n0 * mu0 + all.iter().sum::<f64>()) / (n0 + all.len() as f64);
            let ConjugateState::NormalMean { mu0: m, .. } = once else { unreachable!() };
            prop_assert!((m - closed).abs() <= 1e-9 * closed.abs().max(1.0));
        }

        let joint = ConjugateState::normal(mu0, sigma2, n0).unwrap();
        let fold = |s: ConjugateState, xs: &[f64]| xs.iter().try_fold(s, |s, &x| normal_update(&s, x)).unwrap();
        let joint_all = fold(joint.clone(), &all);
        prop_assert!(close(&fold(fold(joint, &a), &b), &joint_all));
        prop_assert!(count_matches(&joint_all, n0 + all.len() as f64));
    }

    #[test]
    fn expfam_reproduces_beta_bitwise(prior in beta_prior(), xs in flips()) {
        let direct = beta_update(&prior, &SufficientStatistic::from_bernoulli(&xs)).unwrap();
        let ones: Vec<f64> = xs.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
        let nat = expfam_update(&beta_to_natural(&prior).unwrap(), &ones, bernoulli_statistic).unwrap();
        let via = natural_to_beta(&nat).unwrap();
        if xs.is_empty() {
            prop_assert_eq!(counts_of(&via), counts_of(&direct));
        } else {
            let (ConjugateState::Beta { theta0: t1, n0: n1 }, ConjugateState::Beta { theta0: t2, n0: n2 }) = (&via, &direct) else {
                unreachable!()
            };
            prop_assert_eq!(t1.to_bits(), t2.to_bits());
            prop_assert_eq!(n1.to_bits(), n2.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn beta_matches_grid_bayes(a in 0.5f64..10.0, b in 0.5f64..10.0, n in 0u64..200, frac in 0.0f64..1.0) {
        let s = (frac * n as f64).floor() as u64;
        let prior = ConjugateState::beta_from_counts(a, b).unwrap();
        let post = beta_update(&prior, &SufficientStatistic::binary(s, n).unwrap()).unwrap();
        let err = beta_grid_error((a, b), s, n, &post.parameter_distribution().unwrap());
        prop_assert!(err <= 1e-4, "prior ({a}, {b}) data {s}/{n}: {err}");
    }

    #[test]
    fn dirichlet_matches_grid_bayes(alpha in prop::collection::vec(0.8f64..6.0, 3), counts in prop::collection::vec(0u64..25, 3)) {
        let prior = ConjugateState::dirichlet_from_counts(&alpha).unwrap();
        let post = dirichlet_update(&prior, &counts).unwrap();
        let err = dirichlet3_grid_error(&alpha, &counts, &post.parameter_distribution().unwrap());
        prop_assert!(err <= 1e-4, "prior {alpha:?} counts {counts:?}: {err}");
    }
}

#[test]
fn two_category_dirichlet_matches_beta_grid() {
    let prior = ConjugateState::dirichlet_from_counts(&[2.0, 3.5]).unwrap();
    let post = dirichlet_update(&prior, &[7, 4]).unwrap();
    let d = post.parameter_distribution().unwrap();
    let c = d.dirichlet_counts().unwrap();
    let beta = elbo_forge_core::Dist::beta_from_counts(c[0], c[1]).unwrap();
    assert!(beta_grid_error((2.0, 3.5), 7, 11, &beta) <= 1e-4);
}

#[test]
fn presets_and_degenerate_flag() {
    let j = ConjugateState::preset("jeffreys").unwrap();
    assert_eq!(counts_of(&j), vec![0.5, 0.5]);
    let bl = ConjugateState::preset("bayes-laplace").unwrap();
    assert_eq!(counts_of(&bl), vec![1.0, 1.0]);
    let h = ConjugateState::preset("haldane").unwrap();
    assert!(h.is_degenerate() && h.parameter_distribution().is_none());
    assert!(!j.is_degenerate());
    assert_eq!(h.to_json()["degenerate"], true);
    assert!(ConjugateState::beta(0.5, -0.0001).is_err());
    let post = beta_update(&h, &SufficientStatistic::binary(520, 1000).unwrap()).unwrap();
    assert_eq!(post, ConjugateState::Beta { theta0: 0.52, n0: 1000.0 });
    assert!(relative_error(post.beta_counts().unwrap().0, 520.0) < 1e-15);
}
