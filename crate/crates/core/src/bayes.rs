//! Random-walk Metropolis-Hastings for interval and ratio scores.
//!
//! ω components move on the logit scale and are accepted or rejected as one
//! block. Positive marginal parameters move on the log scale, the others by
//! a plain Gaussian step. Sampling stops by the fixed-width rule, checked
//! every `minit` draws.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{OmegaError, Result};
use crate::marginals::{initial_family, median_unbiased_quantile, FamilyKind};
use crate::objectives::{MarginalTerms, Method, Objective};
use crate::rng;
use crate::scores::ScoreMatrix;

/// Smallest allowed `minit`.
pub const MIN_MINIT: usize = 1000;
/// Default proposal standard deviation.
pub const DEFAULT_SD: f64 = 0.1;

const GAMMA_SHAPE: f64 = 0.01;
const GAMMA_RATE: f64 = 0.01;
const LOCATION_SD: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerControl {
    pub family: FamilyKind,
    pub minit: usize,
    pub maxit: usize,
    /// Fixed-width threshold on every coefficient of variation.
    pub tol: f64,
    /// Proposal sd for the first marginal parameter (and μ of the gaussian
    /// and laplace families).
    pub sigma1: f64,
    /// Proposal sd for the second marginal parameter (and μ of t).
    pub sigma2: f64,
    /// One sd per ω, a single sd for all of them, or empty for the default.
    pub sigma_omega: Vec<f64>,
}

impl Default for SamplerControl {
    fn default() -> Self {
        SamplerControl {
            family: FamilyKind::Gaussian,
            minit: MIN_MINIT,
            maxit: 10_000,
            tol: 0.1,
            sigma1: DEFAULT_SD,
            sigma2: DEFAULT_SD,
            sigma_omega: Vec::new(),
        }
    }
}

impl SamplerControl {
    /// Checks the settings and returns the ω proposal sd's.
    pub fn validate(&self, n_omega: usize) -> Result<Vec<f64>> {
        let bad = |m: String| Err(OmegaError::Control(m));
        if self.minit < MIN_MINIT {
            return bad(format!("minit must be at least {MIN_MINIT}, got {}", self.minit));
        }
        if self.maxit < self.minit {
            return bad(format!("maxit ({}) is below minit ({})", self.maxit, self.minit));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.sigma1) || !positive(self.sigma2) || !self.sigma_omega.iter().all(|&s| positive(s)) {
            return bad("proposal standard deviations must be positive".into());
        }
        match self.sigma_omega.len() {
            0 => Ok(vec![DEFAULT_SD; n_omega]),
            1 => Ok(vec![self.sigma_omega[0]; n_omega]),
            n if n == n_omega => Ok(self.sigma_omega.clone()),
            n => bad(format!("sigma.omega has {n} entries, the model has {n_omega} agreement parameters")),
        }
    }
}

/// A likelihood split into an expensive marginal part, recomputed only when
/// ψ moves, and a cheap copula part in ω.
pub trait LogLikelihood {
    type Terms;

    fn n_omega(&self) -> usize;

    /// One flag per marginal parameter: proposed on the log scale if set.
    fn positive(&self) -> Vec<bool>;

    /// Marginal work at ψ; `None` when ψ is infeasible.
    fn terms(&self, psi: &[f64]) -> Option<Self::Terms>;

    fn value(&self, omega: &[f64], terms: &Self::Terms) -> f64;
}

impl LogLikelihood for Objective {
    type Terms = MarginalTerms;

    fn n_omega(&self) -> usize {
        Objective::n_omega(self)
    }

    fn positive(&self) -> Vec<bool> {
        let n = self.n_params() - Objective::n_omega(self);
        let pos = self.family().positive_params();
        (0..n).map(|i| pos.contains(&i)).collect()
    }

    fn terms(&self, psi: &[f64]) -> Option<MarginalTerms> {
        self.marginal_terms(psi)
    }

    fn value(&self, omega: &[f64], terms: &MarginalTerms) -> f64 {
        self.copula_value(omega, &terms.z) + terms.log_f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Acceptance {
    /// Fraction of iterations in which the ω block moved.
    pub omega: f64,
    /// Per marginal parameter.
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PosteriorResult {
    pub names: Vec<String>,
    /// One row per draw, θ = (ω, ψ).
    pub samples: Vec<Vec<f64>>,
    /// Log likelihood at every draw.
    pub loglik: Vec<f64>,
    pub means: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mcse: Vec<f64>,
    pub cv: Vec<f64>,
    pub acceptance: Acceptance,
    pub dic: Option<f64>,
    pub draws_taken: usize,
    /// Every cv fell below `tol` before `maxit`.
    pub converged: bool,
    pub control: SamplerControl,
    pub warnings: Vec<String>,
}

impl PosteriorResult {
    /// Draws as CSV, header = parameter names.
    pub fn write_draws<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        for row in &self.samples {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| OmegaError::Csv(e.to_string()))
    }

    /// Column `j` of the draws.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|r| r[j]).collect()
    }
}

/// Batch-means Monte Carlo standard error with batch size ⌊√n⌋.
pub fn mcse(chain: &[f64]) -> f64 {
    let n = chain.len();
    let b = (n as f64).sqrt().floor() as usize;
    if b == 0 || n / b < 2 {
        return f64::NAN;
    }
    let a = n / b;
    let means: Vec<f64> = chain[..a * b].chunks(b).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    let grand = means.iter().sum::<f64>() / a as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (a - 1) as f64;
    (var / a as f64).sqrt()
}

/// mcse/|mean|; an exactly zero mean cannot be certified.
pub fn coefficient_of_variation(mcse: f64, mean: f64) -> f64 {
    if mean == 0.0 {
        f64::INFINITY
    } else {
        mcse / mean.abs()
    }
}

/// Fixed-width rule: stop once every cv is below `tol`.
pub fn fixed_width_stop(cv: &[f64], tol: f64) -> bool {
    cv.iter().all(|&c| c < tol)
}

/// DIC = 2·mean(D) − D(θ̄) with D = −2 log L.
pub fn dic(deviances: &[f64], deviance_at_mean: f64) -> Result<f64> {
    if !deviance_at_mean.is_finite() {
        return Err(OmegaError::Numerical("deviance at the posterior mean is not finite".into()));
    }
    let mean = deviances.iter().sum::<f64>() / deviances.len() as f64;
    Ok(2.0 * mean - deviance_at_mean)
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn ln_prior(x: f64, positive: bool) -> f64 {
    if positive {
        (GAMMA_SHAPE - 1.0) * x.ln() - GAMMA_RATE * x
    } else {
        -0.5 * (x / LOCATION_SD).powi(2)
    }
}

/// Runs the chain from (ω₀, ψ₀). `names` label θ in the result.
pub fn run_chain<L: LogLikelihood>(
    lik: &L,
    names: Vec<String>,
    omega0: &[f64],
    psi0: &[f64],
    control: &SamplerControl,
    seed: u64,
) -> Result<PosteriorResult> {
    let sd_omega = control.validate(lik.n_omega())?;
    let positive = lik.positive();
    if omega0.len() != lik.n_omega() || psi0.len() != positive.len() {
        return Err(OmegaError::Control("starting values do not match the model".into()));
    }
    let mut omega = omega0.to_vec();
    let mut psi = psi0.to_vec();
    let mut terms = lik
        .terms(&psi)
        .ok_or_else(|| OmegaError::Numerical("marginal parameters infeasible at the start".into()))?;
    let mut ll = lik.value(&omega, &terms);
    if !ll.is_finite() {
        return Err(OmegaError::Numerical("log likelihood is not finite at the starting values".into()));
    }

    let mut rng = rng::stream(seed, 0);
    let dim = omega.len() + psi.len();
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(control.minit);
    let mut loglik = Vec::with_capacity(control.minit);
    let mut accepted_omega = 0usize;
    let mut accepted_psi = vec![0usize; psi.len()];
    let mut cv = vec![f64::INFINITY; dim];
    let mut converged = false;

    while samples.len() < control.maxit {
        let mut proposal = omega.clone();
        let mut log_jacobian = 0.0;
        for (k, w) in proposal.iter_mut().enumerate() {
            let eta = (*w / (1.0 - *w)).ln() + sd_omega[k] * rng.sample::<f64, _>(StandardNormal);
            let new = logistic(eta);
            log_jacobian += (new * (1.0 - new)).ln() - (*w * (1.0 - *w)).ln();
            *w = new;
        }
        let u: f64 = rng.random();
        if proposal.iter().all(|&w| w > 0.0 && w < 1.0) {
            let ll_new = lik.value(&proposal, &terms);
            if ll_new.is_finite() && u.ln() < ll_new - ll + log_jacobian {
                omega = proposal;
                ll = ll_new;
                accepted_omega += 1;
            }
        }

        for i in 0..psi.len() {
            let sd = if i == 0 { control.sigma1 } else { control.sigma2 };
            let step = sd * rng.sample::<f64, _>(StandardNormal);
            let u: f64 = rng.random();
            let old = psi[i];
            let (new, log_q) = if positive[i] {
                let new = old * step.exp();
                (new, new.ln() - old.ln())
            } else {
                (old + step, 0.0)
            };
            if positive[i] && !(new > 0.0 && new.is_finite()) {
                continue;
            }
            psi[i] = new;
            let candidate = lik.terms(&psi).map(|t| {
                let v = lik.value(&omega, &t);
                (t, v)
            });
            match candidate {
                Some((t, v))
                    if v.is_finite()
                        && u.ln() < v - ll + ln_prior(new, positive[i]) - ln_prior(old, positive[i]) + log_q =>
                {
                    terms = t;
                    ll = v;
                    accepted_psi[i] += 1;
                }
                _ => psi[i] = old,
            }
        }

        samples.push(omega.iter().chain(&psi).copied().collect());
        loglik.push(ll);
        let n = samples.len();
        if n % control.minit == 0 || n == control.maxit {
            cv = column_stats(&samples, dim).map(|(m, e)| coefficient_of_variation(e, m)).collect();
            if fixed_width_stop(&cv, control.tol) {
                converged = true;
                break;
            }
        }
    }

    let n = samples.len();
    let stats: Vec<(f64, f64)> = column_stats(&samples, dim).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (mut lower, mut upper) = (Vec::with_capacity(dim), Vec::with_capacity(dim));
    for j in 0..dim {
        let col: Vec<f64> = samples.iter().map(|r| r[j]).collect();
        lower.push(median_unbiased_quantile(&col, 0.025));
        upper.push(median_unbiased_quantile(&col, 0.975));
    }
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("fixed-width rule not met after {n} draws (tol {})", control.tol));
    }
    let n_omega = omega.len();
    let at_mean = lik
        .terms(&means[n_omega..])
        .map(|t| -2.0 * lik.value(&means[..n_omega], &t))
        .unwrap_or(f64::NAN);
    let deviances: Vec<f64> = loglik.iter().map(|l| -2.0 * l).collect();
    let dic = match dic(&deviances, at_mean) {
        Ok(d) => Some(d),
        Err(e) => {
            warnings.push(format!("DIC unavailable: {e}"));
            None
        }
    };
    Ok(PosteriorResult {
        names,
        means,
        lower,
        upper,
        mcse: stats.iter().map(|s| s.1).collect(),
        cv,
        acceptance: Acceptance {
            omega: accepted_omega as f64 / n as f64,
            psi: accepted_psi.iter().map(|&a| a as f64 / n as f64).collect(),
        },
        dic,
        draws_taken: n,
        converged,
        control: control.clone(),
        warnings,
        samples,
        loglik,
    })
}

fn column_stats(samples: &[Vec<f64>], dim: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..dim).map(move |j| {
        let col: Vec<f64> = samples.iter().map(|r| r[j]).collect();
        (col.iter().sum::<f64>() / col.len() as f64, mcse(&col))
    })
}

/// Posterior sampling for interval or ratio scores. The chain starts at the
/// data-based marginal starting values with every ω at 0.5.
pub fn sample_posterior(data: &ScoreMatrix, control: &SamplerControl, seed: u64) -> Result<PosteriorResult> {
    if data.level().is_discrete() {
        return Err(OmegaError::Control(format!(
            "posterior sampling needs interval or ratio scores, not {}",
            data.level()
        )));
    }
    if !control.family.is_continuous_parametric() {
        return Err(OmegaError::Incompatible {
            objective: "bayes",
            family: control.family.name(),
        });
    }
    let obj = Objective::from_scores(Method::Ml, control.family, data)?;
    let psi0 = initial_family(obj.values(), control.family, 0)?.params();
    let omega0 = vec![0.5; LogLikelihood::n_omega(&obj)];
    run_chain(&obj, obj.param_names(), &omega0, &psi0, control, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::simulate;
    use crate::marginals::MarginalFamily;
    use crate::scores::{ColumnLabel, Level};
    use crate::structure::AgreementStructure;

    /// Likelihood depending on ω only.
    struct OmegaOnly<F: Fn(&[f64]) -> f64> {
        n: usize,
        f: F,
    }

    impl<F: Fn(&[f64]) -> f64> LogLikelihood for OmegaOnly<F> {
        type Terms = ();
        fn n_omega(&self) -> usize {
            self.n
        }
        fn positive(&self) -> Vec<bool> {
            Vec::new()
        }
        fn terms(&self, _: &[f64]) -> Option<()> {
            Some(())
        }
        fn value(&self, omega: &[f64], _: &()) -> f64 {
            (self.f)(omega)
        }
    }

    fn long_run(maxit: usize, sd: f64) -> SamplerControl {
        SamplerControl {
            maxit,
            tol: 1e-12,
            sigma_omega: vec![sd],
            ..Default::default()
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn mcse_of_iid_normals() {
        let mut rng = rng::stream(5, 0);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let e = mcse(&x);
        assert!((e - 0.01).abs() < 0.003, "{e}");
        assert_eq!(mcse(&[2.5; 500]), 0.0);
        let doubled: Vec<f64> = x[..5000].iter().flat_map(|&v| [v, v]).collect();
        assert!(mcse(&doubled) > e);
    }

    #[test]
    fn fixed_width_rule() {
        assert!(fixed_width_stop(&[0.05, 0.05], 0.1));
        assert!(!fixed_width_stop(&[0.05, 0.2], 0.1));
        assert_eq!(coefficient_of_variation(0.1, 0.0), f64::INFINITY);
    }

    #[test]
    fn dic_of_constant_deviance() {
        assert_eq!(dic(&[7.0], 7.0).unwrap(), 7.0);
        assert!(dic(&[7.0], f64::NAN).is_err());
        let d = 1193.0f64.min(1224.0) - 1193.0f64.max(1224.0);
        assert!(((d / 2.0).exp() - 1.8e-7).abs() < 5e-8);
    }

    #[test]
    fn controls_are_checked() {
        let c = SamplerControl {
            minit: 500,
            ..Default::default()
        };
        assert!(c.validate(1).is_err());
        let c = SamplerControl {
            sigma_omega: vec![0.1, 0.2],
            ..Default::default()
        };
        assert!(c.validate(3).is_err());
        assert_eq!(c.validate(2).unwrap(), vec![0.1, 0.2]);
        assert_eq!(SamplerControl::default().validate(2).unwrap(), vec![0.1, 0.1]);
    }

    #[test]
    fn stationary_distribution_of_a_step_target() {
        // density 1 on (0, .5), 3 on [.5, 1): three quarters of the mass above .5
        let lik = OmegaOnly {
            n: 1,
            f: |w: &[f64]| if w[0] >= 0.5 { 3f64.ln() } else { 0.0 },
        };
        let r = run_chain(&lik, names(1), &[0.5], &[], &long_run(100_000, 2.0), 11).unwrap();
        let high = r.samples.iter().filter(|s| s[0] >= 0.5).count() as f64 / r.draws_taken as f64;
        assert_eq!(r.draws_taken, 100_000);
        assert!((high - 0.75).abs() < 0.02, "{high}");
    }

    #[test]
    fn flat_likelihood_returns_the_uniform_prior() {
        let lik = OmegaOnly { n: 1, f: |_: &[f64]| 0.0 };
        let r = run_chain(&lik, names(1), &[0.5], &[], &long_run(40_000, 1.5), 3).unwrap();
        assert!((r.means[0] - 0.5).abs() < 0.02, "{}", r.means[0]);
        assert!(r.samples.iter().all(|s| s[0] > 0.0 && s[0] < 1.0));
    }

    #[test]
    fn omega_block_moves_together() {
        let lik = OmegaOnly {
            n: 3,
            f: |w: &[f64]| -50.0 * w.iter().map(|x| (x - 0.6).powi(2)).sum::<f64>(),
        };
        let r = run_chain(&lik, names(3), &[0.5; 3], &[], &long_run(1000, 0.3), 1).unwrap();
        let mut prev = vec![0.5; 3];
        for s in &r.samples {
            let moved = s.iter().zip(&prev).filter(|(a, b)| a != b).count();
            assert!(moved == 0 || moved == 3);
            prev = s.clone();
        }
        assert!(r.acceptance.omega > 0.1 && r.acceptance.omega < 0.95);
    }

    #[test]
    fn vanishing_proposal_is_always_accepted() {
        let lik = OmegaOnly {
            n: 1,
            f: |w: &[f64]| -10.0 * (w[0] - 0.3).powi(2),
        };
        let r = run_chain(&lik, names(1), &[0.5], &[], &long_run(1000, 1e-9), 2).unwrap();
        assert!(r.acceptance.omega > 0.99);
    }

    fn laplace_pairs(n: usize, seed: u64) -> ScoreMatrix {
        let labels = vec![ColumnLabel::coder(1, 1, 1), ColumnLabel::coder(1, 2, 1)];
        let s = AgreementStructure::build(&labels, &vec![vec![0, 1]; n]).unwrap();
        let f = MarginalFamily::Laplace { mu: 26.5, sigma: 4.7 };
        let y = simulate::values(&s, &[0.8], &f, &mut rng::stream(seed, 0)).unwrap();
        let raw: Vec<Vec<Option<f64>>> = y.chunks(2).map(|c| vec![Some(c[0]), Some(c[1])]).collect();
        ScoreMatrix::prepare(&raw, labels, Level::Ratio).unwrap()
    }

    fn laplace_control() -> SamplerControl {
        SamplerControl {
            family: FamilyKind::Laplace,
            sigma1: 1.0,
            sigma2: 0.1,
            sigma_omega: vec![0.2],
            ..Default::default()
        }
    }

    #[test]
    fn laplace_posterior_covers_the_truth() {
        let d = laplace_pairs(300, 21);
        let r = sample_posterior(&d, &laplace_control(), 4).unwrap();
        assert!(r.converged);
        assert_eq!(r.draws_taken % 1000, 0);
        let truth = [0.8, 26.5, 4.7];
        for (j, t) in truth.iter().enumerate() {
            let col = r.column(j);
            let sd = (col.iter().map(|v| (v - r.means[j]).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!((r.means[j] - t).abs() < 3.0 * sd, "{} {} {sd}", r.names[j], r.means[j]);
            assert!(r.lower[j] < r.means[j] && r.means[j] < r.upper[j]);
        }
        assert!(r.cv.iter().all(|&c| c < 0.1));
        assert!(r.dic.unwrap().is_finite());
        assert!(r.samples.iter().all(|s| s[2] > 0.0));
    }

    #[test]
    fn chain_is_reproducible() {
        let d = laplace_pairs(40, 1);
        let a = sample_posterior(&d, &laplace_control(), 9).unwrap();
        let b = sample_posterior(&d, &laplace_control(), 9).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = sample_posterior(&d, &laplace_control(), 10).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn discrete_scores_are_refused() {
        let labels = vec![ColumnLabel::coder(1, 1, 1), ColumnLabel::coder(1, 2, 1)];
        let d = ScoreMatrix::prepare(&[vec![Some(1.0), Some(2.0)], vec![Some(2.0), Some(2.0)]], labels, Level::Nominal)
            .unwrap();
        assert!(sample_posterior(&d, &SamplerControl::default(), 1).is_err());
        let d = laplace_pairs(20, 1);
        let c = SamplerControl {
            family: FamilyKind::Empirical,
            ..Default::default()
        };
        assert!(sample_posterior(&d, &c, 1).is_err());
    }

    #[test]
    fn draw_dump_has_a_header_and_one_row_per_draw() {
        let d = laplace_pairs(30, 2);
        let r = sample_posterior(&d, &laplace_control(), 1).unwrap();
        let mut buf = Vec::new();
        r.write_draws(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "inter,mu,sigma");
        assert_eq!(text.lines().count(), r.draws_taken + 1);
    }
}
