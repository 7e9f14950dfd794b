//! Log-objectives for the copula model: full likelihood (ML), the
//! distributional-transform approximation (DT), the pairwise composite
//! likelihood (CML) and the copula-only semiparametric objective (SMP).

mod bvn;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use bvn::bivariate_normal_cdf;

use crate::error::{OmegaError, Result};
use crate::fit::{hessian, Constraints, SumCap};
use crate::marginals::{Categorical, FamilyKind, MarginalFamily, PROB_LOWER};
use crate::normal;
use crate::scores::ScoreMatrix;
use crate::structure::{AgreementStructure, Pair, OMEGA_UPPER};

/// Score vectors at least this long have their marginal terms evaluated in
/// parallel.
const PAR_MIN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ml,
    Dt,
    Cml,
    Smp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::Dt => "dt",
            Method::Cml => "cml",
            Method::Smp => "smp",
        }
    }

    /// True for the approximate objectives whose curvature needs a sandwich.
    pub fn is_misspecified(self) -> bool {
        matches!(self, Method::Dt | Method::Cml)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = OmegaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" => Ok(Method::Ml),
            "dt" => Ok(Method::Dt),
            "cml" => Ok(Method::Cml),
            "smp" => Ok(Method::Smp),
            _ => Err(OmegaError::UnknownName {
                what: "method",
                name: s.to_string(),
            }),
        }
    }
}

/// Checks that `method` can be used with marginal `family`.
pub fn check_compatible(method: Method, family: FamilyKind) -> Result<()> {
    let ok = match method {
        Method::Ml => family.is_continuous_parametric(),
        Method::Dt | Method::Cml => family == FamilyKind::Categorical,
        Method::Smp => family == FamilyKind::Empirical,
    };
    if ok {
        Ok(())
    } else {
        Err(OmegaError::Incompatible {
            objective: method.name(),
            family: family.name(),
        })
    }
}

/// Normal scores and summed log densities for one value of ψ.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTerms {
    pub z: Vec<f64>,
    pub log_f: f64,
}

/// A log-objective bound to one dataset.
///
/// θ is packed as (ω, ψ); for SMP ψ is empty and the values are the
/// standardized scores ẑ.
#[derive(Debug, Clone)]
pub struct Objective {
    method: Method,
    family: FamilyKind,
    categories: usize,
    structure: Arc<AgreementStructure>,
    pairs: Arc<Vec<Pair>>,
    values: Vec<f64>,
}

impl Objective {
    pub fn new(
        method: Method,
        family: FamilyKind,
        structure: Arc<AgreementStructure>,
        values: Vec<f64>,
        categories: usize,
    ) -> Result<Self> {
        check_compatible(method, family)?;
        if values.len() != structure.n() {
            return Err(OmegaError::Structure(format!(
                "{} values for a structure of {} scores",
                values.len(),
                structure.n()
            )));
        }
        if family != FamilyKind::Empirical {
            family.check_support(&values)?;
        }
        if family == FamilyKind::Categorical {
            if categories < 2 {
                return Err(OmegaError::Degenerate("categorical data need at least two categories".into()));
            }
            if values.iter().any(|&y| y as usize > categories) {
                return Err(OmegaError::Degenerate(format!("a score exceeds the {categories} categories")));
            }
        }
        let pairs = if method == Method::Cml {
            structure.pair_list()
        } else {
            Vec::new()
        };
        Ok(Objective {
            method,
            family,
            categories,
            structure,
            pairs: Arc::new(pairs),
            values,
        })
    }

    /// Objective over the observed scores of `data`.
    pub fn from_scores(method: Method, family: FamilyKind, data: &ScoreMatrix) -> Result<Self> {
        let structure = AgreementStructure::build(data.labels(), &data.observed_mask())?;
        Objective::new(method, family, Arc::new(structure), data.observed(), data.categories().unwrap_or(0))
    }

    /// Copula-only objective over standardized scores ẑ.
    pub fn semiparametric(structure: Arc<AgreementStructure>, zhat: Vec<f64>) -> Result<Self> {
        Objective::new(Method::Smp, FamilyKind::Empirical, structure, zhat, 0)
    }

    /// Same objective over another dataset with the same missingness pattern.
    pub fn with_values(&self, values: Vec<f64>) -> Objective {
        assert_eq!(values.len(), self.values.len(), "replacement values must keep the pattern");
        Objective {
            values,
            ..self.clone()
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn family(&self) -> FamilyKind {
        self.family
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn structure(&self) -> &AgreementStructure {
        &self.structure
    }

    pub fn structure_arc(&self) -> Arc<AgreementStructure> {
        Arc::clone(&self.structure)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_omega(&self) -> usize {
        self.structure.n_params()
    }

    pub fn n_params(&self) -> usize {
        self.n_omega() + self.family.param_names(self.categories).len()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.structure.param_names().to_vec();
        names.extend(self.family.param_names(self.categories));
        names
    }

    /// Box constraints for θ.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, OMEGA_UPPER); self.n_omega()];
        b.extend(self.family.param_bounds(self.categories));
        b
    }

    /// Box constraints plus, for categorical marginals, the cap
    /// `p1 + … + p(K-1) <= 1 - δ_p` that keeps p_K inside its box. The cap
    /// sits two difference steps inside so that gradients stay finite on it.
    pub fn constraints(&self) -> Constraints {
        let sum_cap = (self.family == FamilyKind::Categorical).then(|| SumCap {
            start: self.n_omega(),
            end: self.n_params(),
            cap: 1.0 - PROB_LOWER - 2.0 * f64::EPSILON.cbrt(),
        });
        Constraints {
            bounds: self.bounds(),
            sum_cap,
        }
    }

    /// Marginal family at the ψ part of θ, if valid.
    pub fn marginal(&self, theta: &[f64]) -> Option<MarginalFamily> {
        MarginalFamily::from_params(self.family, &theta[self.n_omega()..], self.categories)
    }

    /// Objective value; `-inf` outside the feasible region.
    pub fn value(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.n_params());
        let omega = &theta[..self.n_omega()];
        if omega.iter().any(|w| !(w.abs() < 1.0)) {
            return f64::NEG_INFINITY;
        }
        let v = match self.method {
            Method::Ml | Method::Dt => match self.marginal_terms(&theta[self.n_omega()..]) {
                Some(t) => copula_term(&self.structure, omega, &t.z, true) + t.log_f,
                None => f64::NEG_INFINITY,
            },
            Method::Smp => copula_term(&self.structure, omega, &self.values, false),
            Method::Cml => self.cml(omega, &theta[self.n_omega()..]),
        };
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Normal scores z and Σ log f at ψ (ML and DT only). `None` when ψ is
    /// infeasible or some term is not finite.
    pub fn marginal_terms(&self, psi: &[f64]) -> Option<MarginalTerms> {
        let fam = MarginalFamily::from_params(self.family, psi, self.categories)?;
        let (z, log_f) = match (self.method, &fam) {
            (Method::Dt, MarginalFamily::Categorical(c)) => dt_terms(c, &self.values),
            (Method::Ml, _) => {
                let term = |&y: &f64| {
                    let (p, ln_f) = fam.cdf_ln_density(y);
                    (normal::clamped_quantile(p), ln_f)
                };
                let terms: Vec<(f64, f64)> = if self.values.len() >= PAR_MIN {
                    self.values.par_iter().map(term).collect()
                } else {
                    self.values.iter().map(term).collect()
                };
                let log_f = terms.iter().map(|t| t.1).sum();
                (terms.into_iter().map(|t| t.0).collect(), log_f)
            }
            _ => return None,
        };
        (log_f.is_finite() && z.iter().all(|v| v.is_finite())).then_some(MarginalTerms { z, log_f })
    }

    /// Copula part at ω for precomputed z (full-likelihood form, with the
    /// `-I` correction).
    pub fn copula_value(&self, omega: &[f64], z: &[f64]) -> f64 {
        if omega.iter().any(|w| !(w.abs() < 1.0)) {
            return f64::NEG_INFINITY;
        }
        copula_term(&self.structure, omega, z, true)
    }

    fn cml(&self, omega: &[f64], psi: &[f64]) -> f64 {
        let Some(MarginalFamily::Categorical(c)) = MarginalFamily::from_params(self.family, psi, self.categories) else {
            return f64::NEG_INFINITY;
        };
        // Ω must be a correlation matrix even though only pairs are used
        let zero = vec![0.0; self.structure.n()];
        if self.structure.logdet_quadform(omega, &zero).is_none() {
            return f64::NEG_INFINITY;
        }
        let k = self.categories;
        // zq[j] = Φ⁻¹{F(j)}, exact at the ends
        let zq: Vec<f64> = (0..=k as i64).map(|j| exact_end_quantile(c.cdf_at(j))).collect();
        let mut cache = vec![f64::NAN; omega.len() * k * k];
        let mut total = 0.0;
        for p in self.pairs.iter() {
            let (a, b) = (self.values[p.i] as usize, self.values[p.j] as usize);
            let slot = (p.param * k + a - 1) * k + b - 1;
            if cache[slot].is_nan() {
                cache[slot] = rectangle_log_prob(zq[a - 1], zq[a], zq[b - 1], zq[b], omega[p.param]);
            }
            total += cache[slot];
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        total
    }

    /// Second derivatives of [`Objective::value`] for the information matrix.
    ///
    /// The laplace log density has a kink in μ, so its μμ curvature is taken
    /// at its expectation −n/σ²; every other term is differenced numerically
    /// or exact.
    pub fn hessian(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        if !(self.method == Method::Ml && self.family == FamilyKind::Laplace) {
            return hessian(|t| self.value(t), theta);
        }
        let q = self.n_omega();
        let laplace_log_f = |t: &[f64]| -> f64 {
            let (mu, sigma) = (t[q], t[q + 1]);
            -self.values.iter().map(|y| (y - mu).abs()).sum::<f64>() / sigma
                - self.values.len() as f64 * (2.0 * sigma).ln()
        };
        let mut h = hessian(|t| self.value(t) - laplace_log_f(t), theta)?;
        let (mu, sigma) = (theta[q], theta[q + 1]);
        let n = self.values.len() as f64;
        let abs: f64 = self.values.iter().map(|y| (y - mu).abs()).sum();
        let sign: f64 = self
            .values
            .iter()
            .map(|&y| match y.partial_cmp(&mu) {
                Some(std::cmp::Ordering::Greater) => 1.0,
                Some(std::cmp::Ordering::Less) => -1.0,
                _ => 0.0,
            })
            .sum();
        h[q][q] -= n / (sigma * sigma);
        h[q][q + 1] -= sign / (sigma * sigma);
        h[q + 1][q] -= sign / (sigma * sigma);
        h[q + 1][q + 1] += n / (sigma * sigma) - 2.0 * abs / sigma.powi(3);
        Ok(h)
    }

    /// Central finite-difference gradient of [`Objective::value`].
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        numerical_gradient(|t| self.value(t), theta, Some(&self.bounds()))
    }
}

fn exact_end_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        normal::clamped_quantile(p)
    }
}

/// log P(a0 < X <= a1, b0 < Y <= b1) for standard normals with correlation
/// `rho`; `-inf` when the probability is not positive.
fn rectangle_log_prob(a0: f64, a1: f64, b0: f64, b1: f64, rho: f64) -> f64 {
    let p = bivariate_normal_cdf(a1, b1, rho) - bivariate_normal_cdf(a0, b1, rho) - bivariate_normal_cdf(a1, b0, rho)
        + bivariate_normal_cdf(a0, b0, rho);
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn dt_terms(c: &Categorical, values: &[f64]) -> (Vec<f64>, f64) {
    let k = c.categories();
    let zq: Vec<f64> = (1..=k as i64)
        .map(|j| normal::clamped_quantile(0.5 * (c.cdf_at(j - 1) + c.cdf_at(j))))
        .collect();
    let lp: Vec<f64> = c.probabilities().iter().map(|p| p.ln()).collect();
    let mut log_f = 0.0;
    let z = values
        .iter()
        .map(|&y| {
            let j = y as usize - 1;
            log_f += lp[j];
            zq[j]
        })
        .collect();
    (z, log_f)
}

/// −½ log|Ω| − ½ zᵀΩ⁻¹z, plus ½ zᵀz when `minus_identity` is set.
fn copula_term(structure: &AgreementStructure, omega: &[f64], z: &[f64], minus_identity: bool) -> f64 {
    match structure.logdet_quadform(omega, z) {
        Some(lq) => {
            let mut v = -0.5 * lq.log_det - 0.5 * lq.quad_form;
            if minus_identity {
                v += 0.5 * z.iter().map(|x| x * x).sum::<f64>();
            }
            v
        }
        None => f64::NEG_INFINITY,
    }
}

/// Central-difference gradient with step `cbrt(eps) * max(1, |θ_j|)`. Near a
/// box edge the difference becomes one-sided. Errors when the objective is
/// not finite anywhere in the stencil.
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], bounds: Option<&[(f64, f64)]>) -> Result<Vec<f64>> {
    let f0 = f(theta);
    let mut x = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let h = f64::EPSILON.cbrt() * theta[j].abs().max(1.0);
        let (lo, hi) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| b[j]);
        let up = theta[j] + h <= hi;
        let down = theta[j] - h >= lo;
        let d = match (up, down) {
            (true, true) => {
                x[j] = theta[j] + h;
                let fp = f(&x);
                x[j] = theta[j] - h;
                let fm = f(&x);
                (fp - fm) / (2.0 * h)
            }
            (true, false) => {
                x[j] = theta[j] + h;
                (f(&x) - f0) / h
            }
            (false, true) => {
                x[j] = theta[j] - h;
                (f0 - f(&x)) / h
            }
            (false, false) => return Err(OmegaError::Gradient(j)),
        };
        x[j] = theta[j];
        if !d.is_finite() || !f0.is_finite() {
            return Err(OmegaError::Gradient(j));
        }
        g.push(d);
    }
    Ok(g)
}
