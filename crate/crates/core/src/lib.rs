//! Graphical-model compiler: a small modeling language, structural
//! validation, symbolic ELBO derivation, a distribution registry, conjugate
//! updates and exact enumeration oracles for discrete models.

// `!(x > 0.0)` is used on purpose so that NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugate;
pub mod dsl;
pub mod elbo;
pub mod error;
pub mod examples;
pub mod expr;
pub mod model;
pub mod quadrature;
pub mod verify;
pub mod zoo;

pub use conjugate::{ConjugateState, SufficientStatistic};
pub use dsl::{parse_model, parse_source, render_model, ModelSource};
pub use error::{
    ConjugateError, DeriveError, DistError, Location, ModelError, ParseError, VerifyError,
};
pub use model::{
    structurally_equal, DistributionSpec, Factor, GraphicalModel, Param, Role, Support,
    ValidationReport, Variable, Violation,
};
pub use zoo::{Dist, DistributionInstance, Family, FamilyDescriptor, Value};
