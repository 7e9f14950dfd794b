//! Frequentist estimation: method selection, box-constrained maximization,
//! Wald and sandwich intervals, the parametric bootstrap, and the two-stage
//! semiparametric fit.

pub mod optim;
mod semiparametric;
pub mod simulate;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub use optim::{hessian, maximize, Constraints, OptimControl, OptimResult, SumCap};
pub use semiparametric::fit_semiparametric;

use crate::error::{OmegaError, Result};
use crate::marginals::{initial_family, median_unbiased_quantile, EcdfVariant, EmpiricalCdf, FamilyKind, MarginalFamily};
use crate::objectives::{check_compatible, Method, Objective};
use crate::rng;
use crate::scores::{Level, ScoreMatrix};
use crate::structure::ParameterVector;

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959964;

/// Fraction of dropped bootstrap replicates above which a warning is raised.
pub const DROP_WARNING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfintKind {
    None,
    Asymptotic,
    Bootstrap,
}

impl FromStr for ConfintKind {
    type Err = OmegaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ConfintKind::None),
            "asymptotic" => Ok(ConfintKind::Asymptotic),
            "bootstrap" => Ok(ConfintKind::Bootstrap),
            _ => Err(OmegaError::UnknownName {
                what: "interval kind",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for ConfintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfintKind::None => "none",
            ConfintKind::Asymptotic => "asymptotic",
            ConfintKind::Bootstrap => "bootstrap",
        })
    }
}

/// How a bootstrap interval is formed from the draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BootInterval {
    /// θ̂ ± z · sd(draws).
    Gaussian,
    /// Equal-tail sample quantiles of the draws.
    Quantile,
}

impl fmt::Display for BootInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BootInterval::Gaussian => "gaussian",
            BootInterval::Quantile => "quantile",
        })
    }
}

impl FromStr for BootInterval {
    type Err = OmegaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(BootInterval::Gaussian),
            "quantile" => Ok(BootInterval::Quantile),
            _ => Err(OmegaError::UnknownName {
                what: "bootstrap interval",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// `None` selects by level and category count.
    pub method: Option<Method>,
    /// `None` picks categorical for discrete levels, gaussian otherwise
    /// (empirical when the method is smp).
    pub family: Option<FamilyKind>,
    pub confint: ConfintKind,
    /// Replicates for the sandwich or the bootstrap; `None` uses 1000.
    pub n_boot: Option<usize>,
    pub boot_interval: BootInterval,
    pub ecdf: EcdfVariant,
    pub seed: u64,
    pub control: OptimControl,
    /// Packed starting θ; `None` uses ω = 0.5 and data-based ψ.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            method: None,
            family: None,
            confint: ConfintKind::None,
            n_boot: None,
            boot_interval: BootInterval::Gaussian,
            ecdf: EcdfVariant::Plain,
            seed: 0,
            control: OptimControl::default(),
            start: None,
        }
    }
}

impl FitOptions {
    pub fn sandwich_replicates(&self) -> usize {
        self.n_boot.unwrap_or(1000)
    }

    pub fn bootstrap_replicates(&self) -> usize {
        self.n_boot.unwrap_or(1000)
    }
}

/// Per-parameter intervals over the expanded parameter list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intervals {
    pub kind: ConfintKind,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Covariance of the expanded estimate.
    pub covariance: Vec<Vec<f64>>,
    /// Replicates used for the score covariance (sandwich only).
    pub sandwich_replicates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDraws {
    pub interval: BootInterval,
    pub requested: usize,
    pub dropped: usize,
    /// Expanded parameter vectors of the retained replicates.
    pub draws: Vec<Vec<f64>>,
    pub sd: Vec<f64>,
    /// Monte Carlo standard error of the bootstrap mean.
    pub mcse: Vec<f64>,
    /// More than 10% of replicates were dropped.
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: Method,
    pub family: FamilyKind,
    /// Packed θ̂ = (ω̂, ψ̂).
    pub theta: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
    pub intervals: Option<Intervals>,
    pub bootstrap: Option<BootstrapDraws>,
    /// Why a requested interval could not be formed.
    pub interval_error: Option<OmegaError>,
    pub warnings: Vec<String>,
    objective: Objective,
    data: ScoreMatrix,
    ecdf: Option<EmpiricalCdf>,
    options: FitOptions,
}

impl FitResult {
    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn data(&self) -> &ScoreMatrix {
        &self.data
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    pub fn categories(&self) -> usize {
        self.objective.categories()
    }

    pub fn estimate(&self) -> ParameterVector {
        ParameterVector::unpack(&self.theta, self.objective.n_omega())
    }

    pub fn omega(&self) -> &[f64] {
        &self.theta[..self.objective.n_omega()]
    }

    /// Fitted marginal distribution.
    pub fn marginal(&self) -> MarginalFamily {
        match &self.ecdf {
            Some(e) => MarginalFamily::Empirical(e.clone()),
            None => self.objective.marginal(&self.theta).expect("estimate is feasible"),
        }
    }

    /// Packed names, with `pK` appended for categorical marginals.
    pub fn names(&self) -> Vec<String> {
        let mut n = self.objective.param_names();
        if self.family == FamilyKind::Categorical {
            n.push(format!("p{}", self.categories()));
        }
        n
    }

    pub fn expanded_estimate(&self) -> Vec<f64> {
        expand(&self.theta, self.family == FamilyKind::Categorical, self.objective.n_omega())
    }

    pub fn coefficients(&self) -> Vec<Coefficient> {
        let est = self.expanded_estimate();
        self.names()
            .into_iter()
            .enumerate()
            .map(|(j, name)| Coefficient {
                name,
                estimate: est[j],
                lower: self.intervals.as_ref().map(|i| i.lower[j]),
                upper: self.intervals.as_ref().map(|i| i.upper[j]),
            })
            .collect()
    }

    /// Number of observed scores used in the fit.
    pub fn n_observed(&self) -> usize {
        self.objective.structure().n()
    }
}

/// Appends p_K = 1 − Σ p for categorical marginals.
fn expand(theta: &[f64], categorical: bool, n_omega: usize) -> Vec<f64> {
    let mut v = theta.to_vec();
    if categorical {
        v.push(1.0 - theta[n_omega..].iter().sum::<f64>());
    }
    v
}

/// Covariance of the expanded vector: A Σ Aᵀ with A the expansion map.
fn expand_covariance(cov: &DMatrix<f64>, categorical: bool, n_omega: usize) -> Vec<Vec<f64>> {
    let q = cov.nrows();
    let rows = if categorical { q + 1 } else { q };
    let mut a = DMatrix::zeros(rows, q);
    for j in 0..q {
        a[(j, j)] = 1.0;
    }
    if categorical {
        for j in n_omega..q {
            a[(q, j)] = -1.0;
        }
    }
    let out = &a * cov * a.transpose();
    (0..rows).map(|i| (0..rows).map(|j| 0.5 * (out[(i, j)] + out[(j, i)])).collect()).collect()
}

/// Default estimation method for a level and category count.
pub fn select_method(level: Level, categories: Option<usize>) -> Method {
    if !level.is_discrete() {
        Method::Ml
    } else if categories.unwrap_or(0) <= 4 {
        Method::Cml
    } else {
        Method::Dt
    }
}

/// Resolves the method and marginal family for a dataset.
pub fn resolve(data: &ScoreMatrix, opts: &FitOptions) -> Result<(Method, FamilyKind)> {
    let family = match (opts.family, opts.method) {
        (Some(f), _) => f,
        (None, _) if data.level().is_discrete() => FamilyKind::Categorical,
        (None, Some(Method::Smp)) => FamilyKind::Empirical,
        (None, _) => FamilyKind::Gaussian,
    };
    let method = match opts.method {
        Some(m) => m,
        None if family == FamilyKind::Empirical => Method::Smp,
        None => select_method(data.level(), data.categories()),
    };
    if data.level().is_discrete() != family.is_discrete() && family != FamilyKind::Empirical {
        return Err(OmegaError::Incompatible {
            objective: data.level().name(),
            family: family.name(),
        });
    }
    check_compatible(method, family)?;
    if method == Method::Smp && data.level().is_discrete() {
        return Err(OmegaError::Incompatible {
            objective: "smp",
            family: data.level().name(),
        });
    }
    Ok((method, family))
}

/// Starting θ: ω = 0.5 everywhere, ψ from the observed scores.
pub fn initial_theta(obj: &Objective) -> Result<Vec<f64>> {
    let mut theta = vec![0.5; obj.n_omega()];
    if obj.family() != FamilyKind::Empirical {
        theta.extend(initial_family(obj.values(), obj.family(), obj.categories())?.params());
    }
    Ok(theta)
}

/// Fits the copula model to `data`.
pub fn fit(data: &ScoreMatrix, opts: &FitOptions) -> Result<FitResult> {
    let (method, family) = resolve(data, opts)?;
    if method == Method::Smp {
        return fit_semiparametric(data, opts);
    }
    let obj = Objective::from_scores(method, family, data)?;
    let start = match &opts.start {
        Some(s) if s.len() == obj.n_params() => s.clone(),
        Some(s) => {
            return Err(OmegaError::Control(format!(
                "start has {} values, the model has {} parameters",
                s.len(),
                obj.n_params()
            )))
        }
        None => initial_theta(&obj)?,
    };
    let r = maximize(|t| obj.value(t), &start, &obj.constraints(), &opts.control)?;
    let mut res = FitResult {
        method,
        family,
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
        ecdf: None,
        options: opts.clone(),
    };
    if !res.converged {
        res.warnings.push(format!("optimizer did not converge: {}", res.message));
    }
    match opts.confint {
        ConfintKind::None => {}
        ConfintKind::Asymptotic => match asymptotic_interval(&res, opts.sandwich_replicates(), opts.seed) {
            Ok(i) => res.intervals = Some(i),
            Err(e) => {
                res.warnings.push(format!("asymptotic interval failed: {e}"));
                res.interval_error = Some(e);
            }
        },
        ConfintKind::Bootstrap => {
            let b = full_bootstrap(&res, opts.bootstrap_replicates(), opts.boot_interval, opts.seed)?;
            apply_bootstrap(&mut res, b);
        }
    }
    Ok(res)
}

pub(crate) fn apply_bootstrap(res: &mut FitResult, b: (Intervals, BootstrapDraws)) {
    if b.1.warning {
        res.warnings.push(format!(
            "{} of {} bootstrap replicates were dropped",
            b.1.dropped, b.1.requested
        ));
    }
    res.intervals = Some(b.0);
    res.bootstrap = Some(b.1);
}

/// Inverse of the observed information `-H`, failing with a diagnostic when
/// it is not positive definite.
pub fn inverse_information(h: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let q = h.len();
    let info = DMatrix::from_fn(q, q, |i, j| -0.5 * (h[i][j] + h[j][i]));
    let eig = info.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > 1e-10 * max.max(f64::MIN_POSITIVE)) {
        return Err(OmegaError::SingularHessian(format!(
            "eigenvalues range from {min:.3e} to {max:.3e}"
        )));
    }
    info.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| OmegaError::SingularHessian("Cholesky of the observed information failed".into()))
}

/// Wald interval for ML; sandwich interval `I⁻¹ J I⁻¹` for DT and CML with
/// `J` from `n_b` simulated datasets.
pub fn asymptotic_interval(fit: &FitResult, n_b: usize, seed: u64) -> Result<Intervals> {
    if fit.method == Method::Smp {
        return Err(OmegaError::Control(
            "asymptotic intervals are not available for the semiparametric fit; use the bootstrap".into(),
        ));
    }
    let obj = &fit.objective;
    let h = obj.hessian(&fit.theta)?;
    let iinv = inverse_information(&h)?;
    let (cov, used) = if fit.method.is_misspecified() {
        let (j, used) = sandwich_score_cov(obj, &fit.theta, n_b, seed)?;
        let j = DMatrix::from_fn(j.len(), j.len(), |a, b| j[a][b]);
        (&iinv * j * &iinv, Some(used))
    } else {
        (iinv, None)
    };
    let categorical = fit.family == FamilyKind::Categorical;
    let covariance = expand_covariance(&cov, categorical, obj.n_omega());
    let est = fit.expanded_estimate();
    let se: Vec<f64> = (0..est.len()).map(|j| covariance[j][j].max(0.0).sqrt()).collect();
    Ok(Intervals {
        kind: ConfintKind::Asymptotic,
        lower: est.iter().zip(&se).map(|(e, s)| e - Z_95 * s).collect(),
        upper: est.iter().zip(&se).map(|(e, s)| e + Z_95 * s).collect(),
        covariance,
        sandwich_replicates: used,
    })
}

/// Mean outer product of the objective gradient at θ over `n_b` datasets
/// simulated at θ with the observed missingness. Returns the matrix and the
/// number of replicates whose gradient was finite.
pub fn sandwich_score_cov(obj: &Objective, theta: &[f64], n_b: usize, seed: u64) -> Result<(Vec<Vec<f64>>, usize)> {
    let family = obj
        .marginal(theta)
        .ok_or_else(|| OmegaError::Numerical("estimate is outside the parameter space".into()))?;
    let omega = &theta[..obj.n_omega()];
    let grads: Vec<Option<Vec<f64>>> = (0..n_b as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::stream(seed, j);
            let y = simulate::values(obj.structure(), omega, &family, &mut rng).ok()?;
            obj.with_values(y).gradient(theta).ok()
        })
        .collect();
    let q = theta.len();
    let mut acc = vec![vec![0.0; q]; q];
    let mut used = 0;
    for g in grads.iter().flatten() {
        used += 1;
        for a in 0..q {
            for b in 0..q {
                acc[a][b] += g[a] * g[b];
            }
        }
    }
    if used == 0 {
        return Err(OmegaError::Numerical("no simulated dataset gave a finite score".into()));
    }
    acc.iter_mut().flatten().for_each(|v| *v /= used as f64);
    Ok((acc, used))
}

fn column_sd(draws: &[Vec<f64>], j: usize) -> f64 {
    let n = draws.len() as f64;
    if draws.len() < 2 {
        return f64::NAN;
    }
    let mean = draws.iter().map(|d| d[j]).sum::<f64>() / n;
    (draws.iter().map(|d| (d[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Summarizes expanded bootstrap draws around the expanded estimate.
pub(crate) fn summarize_draws(
    estimate: &[f64],
    draws: Vec<Vec<f64>>,
    requested: usize,
    interval: BootInterval,
) -> Result<(Intervals, BootstrapDraws)> {
    let dropped = requested - draws.len();
    if draws.len() < 2 {
        return Err(OmegaError::Numerical(format!(
            "only {} of {requested} bootstrap replicates converged",
            draws.len()
        )));
    }
    let q = estimate.len();
    let sd: Vec<f64> = (0..q).map(|j| column_sd(&draws, j)).collect();
    let mcse: Vec<f64> = sd.iter().map(|s| s / (draws.len() as f64).sqrt()).collect();
    let (lower, upper) = match interval {
        BootInterval::Gaussian => (
            estimate.iter().zip(&sd).map(|(e, s)| e - Z_95 * s).collect(),
            estimate.iter().zip(&sd).map(|(e, s)| e + Z_95 * s).collect(),
        ),
        BootInterval::Quantile => {
            let col = |j: usize| draws.iter().map(|d| d[j]).collect::<Vec<_>>();
            (
                (0..q).map(|j| median_unbiased_quantile(&col(j), 0.025)).collect(),
                (0..q).map(|j| median_unbiased_quantile(&col(j), 0.975)).collect(),
            )
        }
    };
    let n = draws.len() as f64;
    let means: Vec<f64> = (0..q).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n).collect();
    let covariance = (0..q)
        .map(|a| {
            (0..q)
                .map(|b| draws.iter().map(|d| (d[a] - means[a]) * (d[b] - means[b])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect();
    Ok((
        Intervals {
            kind: ConfintKind::Bootstrap,
            lower,
            upper,
            covariance,
            sandwich_replicates: None,
        },
        BootstrapDraws {
            interval,
            requested,
            dropped,
            draws,
            sd,
            mcse,
            warning: dropped as f64 > DROP_WARNING * requested as f64,
        },
    ))
}

/// Parametric bootstrap: `n_b` datasets simulated at θ̂, each refit from its
/// own data-based start. Non-converged replicates are dropped and counted.
pub fn full_bootstrap(fit: &FitResult, n_b: usize, interval: BootInterval, seed: u64) -> Result<(Intervals, BootstrapDraws)> {
    if fit.method == Method::Smp {
        return semiparametric::bootstrap(fit, n_b, interval, seed);
    }
    let obj = &fit.objective;
    let family = fit.marginal();
    let omega = fit.omega();
    let region = obj.constraints();
    let categorical = fit.family == FamilyKind::Categorical;
    let control = &fit.options.control;
    let draws: Vec<Option<Vec<f64>>> = (0..n_b as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::stream(seed, j);
            let y = simulate::values(obj.structure(), omega, &family, &mut rng).ok()?;
            let o = obj.with_values(y);
            let start = initial_theta(&o).unwrap_or_else(|_| fit.theta.clone());
            let r = maximize(|t| o.value(t), &start, &region, control).ok()?;
            r.converged.then(|| expand(&r.theta, categorical, obj.n_omega()))
        })
        .collect();
    summarize_draws(&fit.expanded_estimate(), draws.into_iter().flatten().collect(), n_b, interval)
}

/// Quantile of the chi-squared distribution, for confidence ellipsoids
/// `(θ − θ̂)ᵀ Σ⁻¹ (θ − θ̂) ≤ χ²_q(p)`.
pub fn chi_squared_quantile(p: f64, df: usize) -> Result<f64> {
    let d = ChiSquared::new(df as f64).map_err(|e| OmegaError::Control(e.to_string()))?;
    Ok(d.inverse_cdf(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::scores::ColumnLabel;
    use crate::structure::AgreementStructure;

    fn nominal() -> ScoreMatrix {
        ScoreMatrix::prepare(&datasets::nominal_grid(), datasets::nominal_labels(), Level::Nominal).unwrap()
    }

    #[test]
    fn method_selection() {
        assert_eq!(select_method(Level::Nominal, Some(5)), Method::Dt);
        assert_eq!(select_method(Level::Nominal, Some(2)), Method::Cml);
        assert_eq!(select_method(Level::Ordinal, Some(4)), Method::Cml);
        assert_eq!(select_method(Level::Interval, None), Method::Ml);
        assert_eq!(select_method(Level::Ratio, None), Method::Ml);
    }

    #[test]
    fn resolve_rejects_mismatches() {
        let d = nominal();
        let mut o = FitOptions::default();
        assert_eq!(resolve(&d, &o).unwrap(), (Method::Dt, FamilyKind::Categorical));
        o.method = Some(Method::Ml);
        assert!(resolve(&d, &o).is_err());
        o.method = None;
        o.family = Some(FamilyKind::Gaussian);
        assert!(resolve(&d, &o).is_err());
        o.family = Some(FamilyKind::Empirical);
        assert!(resolve(&d, &o).is_err());
    }

    #[test]
    fn nominal_dt_fit() {
        let r = fit(&nominal(), &FitOptions::default()).unwrap();
        assert!(r.converged, "{}", r.message);
        let est = r.expanded_estimate();
        let want = [0.8942, 0.2517, 0.2407, 0.2274, 0.1888, 0.09136];
        for (e, w) in est.iter().zip(want) {
            assert!((e - w).abs() < 0.002, "{est:?}");
        }
        assert!((r.objective_value + 40.42).abs() < 0.05);
        assert_eq!(r.names(), ["inter", "p1", "p2", "p3", "p4", "p5"]);
        // gradient vanishes at a tightly converged maximizer
        let tight = FitOptions {
            control: OptimControl {
                factr: 1e3,
                ..Default::default()
            },
            ..Default::default()
        };
        let r = fit(&nominal(), &tight).unwrap();
        let g = r.objective().gradient(&r.theta).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-4), "{g:?}");
    }

    #[test]
    fn gaussian_closed_form_mle_at_independence() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 37) % 11) as f64 * 0.7 + (i % 3) as f64).collect();
        let labels = vec![ColumnLabel::coder(1, 1, 1), ColumnLabel::coder(1, 2, 1)];
        let s = AgreementStructure::build(&labels, &vec![vec![0, 1]; 20]).unwrap();
        let obj = Objective::new(Method::Ml, FamilyKind::Gaussian, std::sync::Arc::new(s), y.clone(), 0).unwrap();
        let control = OptimControl {
            factr: 10.0,
            ..Default::default()
        };
        // ω pinned at zero via a degenerate box
        let mut b = obj.constraints();
        b.bounds[0] = (0.0, 0.0);
        let r = maximize(|t| obj.value(t), &[0.0, 1.0, 2.0], &b, &control).unwrap();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((r.theta[1] - mean).abs() < 1e-6, "{} vs {mean}", r.theta[1]);
        assert!((r.theta[2] - sd).abs() < 1e-6, "{} vs {sd}", r.theta[2]);
    }

    #[test]
    fn singular_information_is_diagnosed() {
        // flat in the second coordinate
        let h = hessian(|t: &[f64]| -t[0] * t[0], &[0.1, 0.3]).unwrap();
        assert!(matches!(inverse_information(&h), Err(OmegaError::SingularHessian(_))));
    }

    #[test]
    fn expansion_adds_last_probability_with_delta_variance() {
        let cov = DMatrix::from_row_slice(3, 3, &[0.04, 0.0, 0.0, 0.0, 0.01, 0.002, 0.0, 0.002, 0.03]);
        let e = expand_covariance(&cov, true, 1);
        assert_eq!(e.len(), 4);
        assert!((e[3][3] - (0.01 + 0.03 + 2.0 * 0.002)).abs() < 1e-15);
        assert!((e[3][1] + 0.012).abs() < 1e-15);
        assert_eq!(expand(&[0.5, 0.2, 0.3], true, 1), vec![0.5, 0.2, 0.3, 0.5]);
    }

    #[test]
    fn tiny_bootstrap_does_not_crash() {
        let mut o = FitOptions::default();
        o.confint = ConfintKind::Bootstrap;
        o.n_boot = Some(2);
        o.seed = 5;
        let r = fit(&nominal(), &o).unwrap();
        let b = r.bootstrap.as_ref().unwrap();
        assert_eq!(b.requested, 2);
        assert!(b.draws.len() <= 2);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let mut o = FitOptions::default();
        o.confint = ConfintKind::Bootstrap;
        o.n_boot = Some(20);
        o.seed = 11;
        let a = fit(&nominal(), &o).unwrap();
        let b = fit(&nominal(), &o).unwrap();
        assert_eq!(a.bootstrap.unwrap().draws, b.bootstrap.unwrap().draws);
    }

    #[test]
    fn sandwich_covariance_is_symmetric_and_nonnegative() {
        let mut o = FitOptions::default();
        o.confint = ConfintKind::Asymptotic;
        o.n_boot = Some(50);
        o.seed = 3;
        let r = fit(&nominal(), &o).unwrap();
        let i = r.intervals.as_ref().expect("interval");
        for a in 0..i.covariance.len() {
            assert!(i.covariance[a][a] >= 0.0);
            for b in 0..i.covariance.len() {
                assert!((i.covariance[a][b] - i.covariance[b][a]).abs() < 1e-12);
            }
        }
        for (c, (lo, hi)) in r.coefficients().iter().zip(i.lower.iter().zip(&i.upper)) {
            assert!(*lo <= c.estimate && c.estimate <= *hi);
        }
    }

    #[test]
    fn chi_squared_quantiles() {
        assert!((chi_squared_quantile(0.95, 1).unwrap() - Z_95 * Z_95).abs() < 1e-5);
        assert!((chi_squared_quantile(0.95, 2).unwrap() - 5.991465).abs() < 1e-5);
    }
}
