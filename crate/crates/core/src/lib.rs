//! Agreement coefficients from a Gaussian copula model.
//!
//! Scores for a set of units are treated as a realization of a Gaussian copula
//! whose block-diagonal correlation matrix carries the agreement parameters
//! (inter-coder, intra-coder, gold-standard, and between-method). Marginals
//! are categorical for nominal/ordinal data and parametric or empirical for
//! interval/ratio data.
//!
//! Estimation paths:
//! * full likelihood for continuous marginals ([`fit::fit`] with [`Method::Ml`]),
//! * the distributional-transform approximation and the pairwise composite
//!   likelihood for categorical marginals,
//! * a two-stage semiparametric fit with empirical marginals,
//! * random-walk Metropolis-Hastings for continuous marginals ([`bayes`]).

pub mod bayes;
pub mod datasets;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod marginals;
pub mod normal;
pub mod objectives;
pub mod rng;
pub mod scores;
pub mod structure;

pub use error::{OmegaError, Result};
pub use marginals::{FamilyKind, MarginalFamily};
pub use objectives::Method;
pub use scores::{ColumnLabel, Level, ScoreMatrix};
pub use structure::{AgreementStructure, ParameterVector};
