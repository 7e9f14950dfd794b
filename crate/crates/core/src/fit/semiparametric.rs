//! Two-stage fit: empirical marginal first, then the copula objective over
//! the standardized scores.

use rayon::prelude::*;

use super::{
    apply_bootstrap, maximize, simulate, summarize_draws, BootInterval, BootstrapDraws, ConfintKind, FitOptions,
    FitResult, Intervals,
};
use crate::error::{OmegaError, Result};
use crate::marginals::{EcdfVariant, EmpiricalCdf, FamilyKind};
use crate::normal;
use crate::objectives::{Method, Objective};
use crate::rng;
use crate::scores::ScoreMatrix;
use crate::structure::AgreementStructure;

/// Below this many observed scores the empirical cdf is too coarse to trust.
pub const MIN_SCORES: usize = 30;

fn standardize(values: &[f64], variant: EcdfVariant) -> (EmpiricalCdf, Vec<f64>) {
    let e = EmpiricalCdf::new(values, variant, None);
    let z = values.iter().map(|&y| normal::quantile(e.cdf(y))).collect();
    (e, z)
}

/// Stage one ẑ = Φ⁻¹{F̂ₙ(y)}; stage two maximizes the copula objective in ω.
pub fn fit_semiparametric(data: &ScoreMatrix, opts: &FitOptions) -> Result<FitResult> {
    if data.level().is_discrete() {
        return Err(OmegaError::Incompatible {
            objective: "smp",
            family: data.level().name(),
        });
    }
    if opts.confint == ConfintKind::Asymptotic {
        return Err(OmegaError::Control(
            "asymptotic intervals are not available for the semiparametric fit; use the bootstrap".into(),
        ));
    }
    let structure = AgreementStructure::build(data.labels(), &data.observed_mask())?;
    let values = data.observed();
    let (ecdf, zhat) = standardize(&values, opts.ecdf);
    let obj = Objective::semiparametric(std::sync::Arc::new(structure), zhat)?;
    let start = opts.start.clone().unwrap_or_else(|| vec![0.5; obj.n_omega()]);
    let r = maximize(|t| obj.value(t), &start, &obj.constraints(), &opts.control)?;
    let mut res = FitResult {
        method: Method::Smp,
        family: FamilyKind::Empirical,
        theta: r.theta,
        objective_value: r.value,
        iterations: r.iterations,
        converged: r.converged,
        message: r.message,
        intervals: None,
        bootstrap: None,
        interval_error: None,
        warnings: Vec::new(),
        objective: obj,
        data: data.clone(),
        ecdf: Some(ecdf),
        options: opts.clone(),
    };
    if values.len() < MIN_SCORES {
        res.warnings.push(format!(
            "only {} observed scores; the empirical marginal is unreliable below {MIN_SCORES}",
            values.len()
        ));
    }
    if !res.converged {
        res.warnings.push(format!("optimizer did not converge: {}", res.message));
    }
    if opts.confint == ConfintKind::Bootstrap {
        let b = bootstrap(&res, opts.bootstrap_replicates(), opts.boot_interval, opts.seed)?;
        apply_bootstrap(&mut res, b);
    }
    Ok(res)
}

/// Copula uniforms at ω̂ mapped through median-unbiased sample quantiles,
/// then both stages repeated.
pub(super) fn bootstrap(
    fit: &FitResult,
    n_b: usize,
    interval: BootInterval,
    seed: u64,
) -> Result<(Intervals, BootstrapDraws)> {
    let obj = fit.objective();
    let ecdf = fit.ecdf.as_ref().expect("semiparametric fit keeps its ecdf");
    let variant = ecdf.variant();
    let region = obj.constraints();
    let control = &fit.options().control;
    let draws: Vec<Option<Vec<f64>>> = (0..n_b as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::stream(seed, j);
            let u = simulate::uniforms(obj.structure(), fit.omega(), &mut rng).ok()?;
            let y: Vec<f64> = u.into_iter().map(|u| ecdf.quantile(u)).collect();
            let (_, z) = standardize(&y, variant);
            let o = obj.with_values(z);
            let r = maximize(|t| o.value(t), &vec![0.5; o.n_omega()], &region, control).ok()?;
            r.converged.then_some(r.theta)
        })
        .collect();
    summarize_draws(&fit.theta, draws.into_iter().flatten().collect(), n_b, interval)
}
