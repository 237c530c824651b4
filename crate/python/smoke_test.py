"""Smoke test for the elbo_forge extension module.

Build and install first, e.g. `maturin build -m crates/python/Cargo.toml`
then `pip install` the wheel.
"""

import json
import math

import elbo_forge as ef


def main():
    vae = ef.Model(ef.VAE_SOURCE)
    assert vae.validate() == []
    assert vae.selections() == [[], ["q(z|x)"]]
    assert vae.derive(["q(z|x)"]) == "E_{q(z|x)}[log p(x|z)] - KL(q(z|x) || p(z))"
    assert vae.derive([]) == "E_{p(z)}[log p(x|z)]"
    assert "\\mathrm{KL}" in vae.derive(format="latex")
    dump = json.loads(vae.derive(format="dump"))
    assert len(dump["ratio_terms"]) == 1
    verdicts = {tuple(sel): (v, r) for sel, v, r in vae.heuristic()}
    assert verdicts[()][0] == "rejected" and "ignores-input" in verdicts[()][1]

    latplan = ef.Model(ef.LATPLAN_SOURCE)
    assert len(latplan.selections()) == 8
    assert latplan.derive().count("KL(") == 3
    assert ef.Model(latplan.render()).render() == latplan.render()

    mix = ef.Model(ef.MIXTURE_SOURCE)
    for x in (0, 1):
        exact = mix.log_evidence({"x": x})
        bound = mix.elbo({"x": x})
        mc = mix.elbo({"x": x}, samples=20000, seed=3)
        assert bound <= exact + 1e-9
        assert abs(mc - bound) < 0.05

    q, p = ef.Dist.normal(0.0, 1.0), ef.Dist.normal(1.0, 2.0)
    expected = math.log(2.0) + (1.0 + 1.0) / 8.0 - 0.5
    assert abs(q.kl(p) - expected) < 1e-12
    assert abs(q.cross_entropy(p) - q.entropy() - q.kl(p)) < 1e-12
    assert abs(ef.Dist.bernoulli(0.3).log_prob(1) - math.log(0.3)) < 1e-12
    assert ef.Dist.dirichlet([1.0, 2.0, 3.0]).kl(ef.Dist.dirichlet([1.0, 2.0, 3.0])) == 0.0

    post = json.loads(ef.update("beta", '{"preset": "haldane"}', '{"successes": 520, "trials": 1000}'))
    assert post["posterior"] == {"family": "beta", "theta0": 0.52, "n0": 1000.0}

    optimum, tv, kl = ef.brute_force_mle(4, [0, 0, 1, 3])
    assert tv <= 1e-6 and kl <= 1e-9 and abs(sum(optimum) - 1.0) < 1e-12

    assert "Dirichlet" in ef.families()
    try:
        ef.Model("model broken {")
    except ValueError as e:
        assert "1:" in str(e)
    else:
        raise AssertionError("parse error not raised")
    print("python smoke test ok")


if __name__ == "__main__":
    main()
