//! Influence statistics, simulation from a fit, information criteria, and
//! the Krippendorff's α baseline.

mod alpha;

use rayon::prelude::*;
use serde::Serialize;

pub use alpha::{krippendorff_alpha, krippendorff_alpha_bootstrap, AlphaResult};

use crate::error::{OmegaError, Result};
use crate::fit::{fit, simulate as draw, ConfintKind, FitResult};
use crate::objectives::Method;
use crate::rng;
use crate::scores::ScoreMatrix;

/// A coder within a method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoderRef {
    pub method: u32,
    pub coder: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceRow {
    /// Unit number (1-based original row) or coder number.
    pub entity: String,
    /// θ̂_full − θ̂ without the entity, over the expanded estimate.
    pub dfbeta: Option<Vec<f64>>,
    /// Why the refit failed, if it did.
    pub error: Option<String>,
}

impl InfluenceRow {
    /// |θ̂_(−e) − θ̂| / |θ̂|, elementwise.
    pub fn relative(&self, estimate: &[f64]) -> Option<Vec<f64>> {
        self.dfbeta
            .as_ref()
            .map(|d| d.iter().zip(estimate).map(|(d, e)| (d / e).abs()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceReport {
    pub names: Vec<String>,
    pub units: Vec<InfluenceRow>,
    pub coders: Vec<InfluenceRow>,
}

enum Entity {
    Unit(usize),
    Coder(CoderRef),
}

/// DFBETA for the given units (1-based original rows) and coders. Each
/// entity is removed in turn and the model refit with the base fit's method,
/// family and optimizer controls, without intervals.
pub fn influence(fit_result: &FitResult, units: &[usize], coders: &[CoderRef]) -> InfluenceReport {
    let mut opts = fit_result.options().clone();
    opts.method = Some(fit_result.method);
    opts.family = Some(fit_result.family);
    opts.confint = ConfintKind::None;
    opts.start = None;
    let full = fit_result.expanded_estimate();
    let data = fit_result.data();
    let entities: Vec<Entity> = units
        .iter()
        .map(|&u| Entity::Unit(u))
        .chain(coders.iter().map(|&c| Entity::Coder(c)))
        .collect();
    let mut rows: Vec<InfluenceRow> = entities
        .par_iter()
        .map(|e| {
            let (entity, reduced) = match *e {
                Entity::Unit(u) => (u.to_string(), data.drop_units(&[u.wrapping_sub(1)])),
                Entity::Coder(c) => (
                    if c.method == 1 {
                        c.coder.to_string()
                    } else {
                        format!("m{}.{}", c.method, c.coder)
                    },
                    data.drop_coder(c.method, c.coder),
                ),
            };
            let refit = reduced.and_then(|d| fit(&d, &opts));
            match refit {
                Ok(r) if r.converged && r.expanded_estimate().len() == full.len() => InfluenceRow {
                    entity,
                    dfbeta: Some(full.iter().zip(r.expanded_estimate()).map(|(a, b)| a - b).collect()),
                    error: None,
                },
                Ok(r) if !r.converged => InfluenceRow {
                    entity,
                    dfbeta: None,
                    error: Some(format!("refit did not converge: {}", r.message)),
                },
                Ok(_) => InfluenceRow {
                    entity,
                    dfbeta: None,
                    error: Some("removing the entity changes the parameter set".into()),
                },
                Err(err) => InfluenceRow {
                    entity,
                    dfbeta: None,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect();
    let coders = rows.split_off(units.len());
    InfluenceReport {
        names: fit_result.names(),
        units: rows,
        coders,
    }
}

/// A dataset drawn from the fitted model with the observed missingness.
/// Use [`ScoreMatrix::embed_original`] for the original row layout.
pub fn simulate(fit_result: &FitResult, seed: u64) -> Result<ScoreMatrix> {
    let obj = fit_result.objective();
    let y = draw::values(obj.structure(), fit_result.omega(), &fit_result.marginal(), &mut rng::stream(seed, 0))?;
    Ok(fit_result.data().with_observed(&y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
}

pub fn aic(loglik: f64, q: usize) -> f64 {
    2.0 * q as f64 - 2.0 * loglik
}

pub fn bic(loglik: f64, q: usize, n: usize) -> f64 {
    q as f64 * (n as f64).ln() - 2.0 * loglik
}

/// AIC and BIC of a full-likelihood fit, with n the number of observed
/// scores.
pub fn information_criteria(fit_result: &FitResult) -> Result<InformationCriteria> {
    if fit_result.method != Method::Ml {
        return Err(OmegaError::Undefined(format!(
            "information criteria need a full likelihood; the {} objective is not one",
            fit_result.method
        )));
    }
    let q = fit_result.theta.len();
    let l = fit_result.objective_value;
    Ok(InformationCriteria {
        aic: aic(l, q),
        bic: bic(l, q, fit_result.n_observed()),
    })
}

/// exp((min − max)/2) over a set of information criteria: the relative
/// likelihood of the worst model against the best.
pub fn model_probability(criteria: &[f64]) -> Result<f64> {
    if criteria.len() < 2 {
        return Err(OmegaError::Control("model probability needs at least two criteria".into()));
    }
    let min = criteria.iter().copied().fold(f64::INFINITY, f64::min);
    let max = criteria.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(((min - max) / 2.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::fit::FitOptions;
    use crate::marginals::FamilyKind;
    use crate::scores::{ColumnLabel, Level};

    fn nominal_fit() -> FitResult {
        let d = ScoreMatrix::prepare(&datasets::nominal_grid(), datasets::nominal_labels(), Level::Nominal).unwrap();
        fit(&d, &FitOptions::default()).unwrap()
    }

    #[test]
    fn criteria_arithmetic() {
        assert_eq!(aic(-593.5, 3), 1193.0);
        assert_eq!(bic(-593.5, 3, 200).round(), 1203.0);
        assert!((bic(-593.5, 3, 200) - (3.0 * 200f64.ln() + 1187.0)).abs() < 1e-12);
        assert_eq!(aic(0.0, 0), 0.0);
        assert_eq!(bic(0.0, 0, 50), 0.0);
    }

    #[test]
    fn model_probability_arithmetic() {
        assert_eq!(model_probability(&[1193.0, 1223.0]).unwrap(), (-15f64).exp());
        assert_eq!(model_probability(&[4.0, 4.0]).unwrap(), 1.0);
        assert!(model_probability(&[4.0]).is_err());
    }

    #[test]
    fn criteria_refused_for_approximate_objectives() {
        let f = nominal_fit();
        assert_eq!(f.method, Method::Dt);
        assert!(matches!(information_criteria(&f), Err(OmegaError::Undefined(_))));
    }

    #[test]
    fn criteria_of_a_likelihood_fit() {
        let labels = vec![ColumnLabel::coder(1, 1, 1), ColumnLabel::coder(1, 2, 1)];
        let raw: Vec<Vec<Option<f64>>> = (0..30)
            .map(|i| {
                let x = (i as f64 * 0.37).sin() * 3.0;
                vec![Some(x), Some(x + (i as f64 * 1.3).cos())]
            })
            .collect();
        let d = ScoreMatrix::prepare(&raw, labels, Level::Interval).unwrap();
        let f = fit(&d, &FitOptions::default()).unwrap();
        let ic = information_criteria(&f).unwrap();
        assert_eq!(ic.aic, 6.0 - 2.0 * f.objective_value);
        assert_eq!(ic.bic, 3.0 * 60f64.ln() - 2.0 * f.objective_value);
    }

    #[test]
    fn simulation_keeps_the_missingness_pattern() {
        let f = nominal_fit();
        let s = simulate(&f, 42).unwrap();
        let a = f.data().embed_original();
        let b = s.embed_original();
        assert_eq!(a.len(), b.len());
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert_eq!(x.is_none(), y.is_none());
            }
        }
        assert!(s.observed().iter().all(|&v| (1.0..=5.0).contains(&v) && v.fract() == 0.0));
        assert_eq!(simulate(&f, 42).unwrap(), s);
    }

    #[test]
    fn near_perfect_agreement_gives_identical_scores() {
        let labels: Vec<ColumnLabel> = (1..=4).map(|c| ColumnLabel::coder(1, c, 1)).collect();
        let raw: Vec<Vec<Option<f64>>> = (0..60).map(|i| vec![Some((i % 5 + 1) as f64); 4]).collect();
        let d = ScoreMatrix::prepare(&raw, labels, Level::Nominal).unwrap();
        let mut f = fit(&d, &FitOptions::default()).unwrap();
        f.theta[0] = 0.9999;
        let s = simulate(&f, 3).unwrap();
        let same = s.rows().iter().filter(|r| r.iter().all(|v| *v == r[0])).count();
        assert!(same as f64 >= 0.95 * s.n_units() as f64, "{same}");
    }

    #[test]
    fn influence_of_absent_entities_is_zero() {
        let f = nominal_fit();
        // row 12 has a single score and was never part of the fit
        let r = influence(&f, &[12, 40], &[CoderRef { method: 1, coder: 9 }]);
        for row in r.units.iter().chain(&r.coders) {
            assert!(row.dfbeta.as_ref().unwrap().iter().all(|&d| d == 0.0), "{row:?}");
        }
    }

    #[test]
    fn influence_of_nominal_units() {
        let f = nominal_fit();
        let r = influence(&f, &[6, 11], &[CoderRef { method: 1, coder: 2 }]);
        assert_eq!(r.names.len(), 6);
        let six = r.units[0].dfbeta.as_ref().unwrap();
        assert!((six[0] + 0.0791).abs() < 0.005, "{}", six[0]);
        let rel = r.units[0].relative(&f.expanded_estimate()).unwrap();
        assert!((rel[0] - 0.09).abs() < 0.01);
        assert!((r.units[1].dfbeta.as_ref().unwrap()[0] - 0.0110).abs() < 0.005);
        assert_eq!(r.coders[0].entity, "2");
        assert!(r.coders[0].dfbeta.is_some());
        assert_eq!(f.family, FamilyKind::Categorical);
    }
}
