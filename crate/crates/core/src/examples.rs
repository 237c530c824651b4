//! Reference model sources.

/// Variational autoencoder with a single latent code.
pub const VAE: &str = "model vae {
  param sigma : posreal ~ Const(1.0)
  latent z : real ~ Normal(0, 1)
  observed x : real ~ Normal(dec(z), sigma)
  guide q(z | x) ~ Normal(enc_mu(x), enc_sigma(x))
}
";

/// One step of a hidden Markov model.
pub const HMM: &str = "model hmm {
  param sigma : posreal ~ Const(1.0)
  latent z0 : real ~ Normal(0, 1)
  latent z1 : real ~ Normal(f2(z0), f3(z0))
  observed x0 : real ~ Normal(f1(z0), sigma)
  observed x1 : real ~ Normal(f1(z1), sigma)
  guide q(z0 | x0) ~ Normal(e_mu(x0), e_sigma(x0))
  guide q(z1 | x1) ~ Normal(e_mu(x1), e_sigma(x1))
}
";

/// Latent state transition model with a latent action.
pub const LATPLAN: &str = "model latplan {
  latent z0 : bool ~ Bernoulli(0.5)
  latent a : cat(4) ~ Categorical(applicable(z0))
  latent z1 : bool ~ Bernoulli(apply(z0, a))
  observed x0 : real ~ Normal(dec(z0), 1)
  observed x1 : real ~ Normal(dec(z1), 1)
  guide q(z0 | x0) ~ Bernoulli(enc(x0))
  guide q(z1 | x1) ~ Bernoulli(enc(x1))
  guide q(a | x0 x1) ~ Categorical(act(x0, x1))
}
";

/// Adversarial model written with roles flipped: the noise `z` is observed,
/// the data `x` is latent, and the generator plays the guide.
pub const VEEGAN_FLIPPED: &str = "model veegan {
  notation q p
  latent x : real ~ Normal(data_mu(), data_sigma())
  observed z : real ~ Normal(recon(x), 1)
  guide p(x | z) ~ Normal(gen(z), 1)
}
";

/// Two-state discrete model with literal tables.
pub const COIN_MIXTURE: &str = "model mixture {
  latent z : bool ~ Bernoulli(0.5)
  observed x : cat(2) ~ Categorical(table z -> [[0.9, 0.1], [0.2, 0.8]])
  guide q(z | x) ~ Bernoulli(table x -> [0.7, 0.3])
}
";

pub const ALL: [(&str, &str); 5] = [
    ("vae", VAE),
    ("hmm", HMM),
    ("latplan", LATPLAN),
    ("veegan", VEEGAN_FLIPPED),
    ("mixture", COIN_MIXTURE),
];
