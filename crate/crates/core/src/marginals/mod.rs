//! Marginal distribution families: cdf, density or mass, quantile, and
//! data-driven starting values.

mod empirical;
pub mod noncentral_t;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{OmegaError, Result};
use crate::normal;

pub use empirical::{default_truncation, median_unbiased_quantile, EcdfVariant, EmpiricalCdf};

/// Lower box bound for strictly positive parameters.
pub const POSITIVE_LOWER: f64 = 1e-6;
/// Free category probabilities live in `[PROB_LOWER, 1 - PROB_LOWER]`, and the
/// last one must also be at least `PROB_LOWER`.
pub const PROB_LOWER: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Categorical,
    Gaussian,
    Laplace,
    #[serde(rename = "t")]
    StudentT,
    Gamma,
    Beta,
    Kumaraswamy,
    Empirical,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Categorical => "categorical",
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Laplace => "laplace",
            FamilyKind::StudentT => "t",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Beta => "beta",
            FamilyKind::Kumaraswamy => "kumaraswamy",
            FamilyKind::Empirical => "empirical",
        }
    }

    pub fn is_discrete(self) -> bool {
        self == FamilyKind::Categorical
    }

    /// Parametric continuous families (usable by ML and the sampler).
    pub fn is_continuous_parametric(self) -> bool {
        !matches!(self, FamilyKind::Categorical | FamilyKind::Empirical)
    }

    /// Names of the packed parameters. Categorical packs `p1..p(K-1)`.
    pub fn param_names(self, categories: usize) -> Vec<String> {
        let fixed: &[&str] = match self {
            FamilyKind::Categorical => {
                return (1..categories).map(|k| format!("p{k}")).collect();
            }
            FamilyKind::Gaussian | FamilyKind::Laplace => &["mu", "sigma"],
            FamilyKind::StudentT => &["nu", "mu"],
            FamilyKind::Gamma | FamilyKind::Beta => &["alpha", "beta"],
            FamilyKind::Kumaraswamy => &["a", "b"],
            FamilyKind::Empirical => &[],
        };
        fixed.iter().map(|s| s.to_string()).collect()
    }

    /// Box constraints of the packed parameters.
    pub fn param_bounds(self, categories: usize) -> Vec<(f64, f64)> {
        let pos = (POSITIVE_LOWER, f64::INFINITY);
        let free = (f64::NEG_INFINITY, f64::INFINITY);
        match self {
            FamilyKind::Categorical => vec![(PROB_LOWER, 1.0 - PROB_LOWER); categories.saturating_sub(1)],
            FamilyKind::Gaussian | FamilyKind::Laplace => vec![free, pos],
            FamilyKind::StudentT => vec![pos, free],
            FamilyKind::Gamma | FamilyKind::Beta | FamilyKind::Kumaraswamy => vec![pos, pos],
            FamilyKind::Empirical => Vec::new(),
        }
    }

    /// Indices of packed parameters that are strictly positive.
    pub fn positive_params(self) -> Vec<usize> {
        match self {
            FamilyKind::Gaussian | FamilyKind::Laplace => vec![1],
            FamilyKind::StudentT => vec![0],
            FamilyKind::Gamma | FamilyKind::Beta | FamilyKind::Kumaraswamy => vec![0, 1],
            FamilyKind::Categorical | FamilyKind::Empirical => Vec::new(),
        }
    }

    /// Checks that every value lies in the family's support.
    pub fn check_support(self, data: &[f64]) -> Result<()> {
        let ok = |f: &dyn Fn(f64) -> bool, what: &str| {
            match data.iter().find(|&&y| !f(y)) {
                Some(y) => Err(OmegaError::Degenerate(format!("{y} is outside the {what} support"))),
                None => Ok(()),
            }
        };
        match self {
            FamilyKind::Gamma => ok(&|y| y > 0.0, "gamma"),
            FamilyKind::Beta | FamilyKind::Kumaraswamy => ok(&|y| y > 0.0 && y < 1.0, self.name()),
            FamilyKind::Categorical => ok(&|y| y >= 1.0 && y.fract() == 0.0, "categorical"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = OmegaError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "categorical" => FamilyKind::Categorical,
            "gaussian" => FamilyKind::Gaussian,
            "laplace" => FamilyKind::Laplace,
            "t" => FamilyKind::StudentT,
            "gamma" => FamilyKind::Gamma,
            "beta" => FamilyKind::Beta,
            "kumaraswamy" => FamilyKind::Kumaraswamy,
            "empirical" => FamilyKind::Empirical,
            _ => {
                return Err(OmegaError::UnknownName {
                    what: "marginal family",
                    name: s.to_string(),
                })
            }
        })
    }
}

/// Categorical distribution on `1..=K` with cached cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    p: Vec<f64>,
    cum: Vec<f64>,
}

impl Categorical {
    pub fn new(p: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cum = p
            .iter()
            .map(|&pk| {
                acc += pk;
                acc
            })
            .collect();
        Categorical { p, cum }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn categories(&self) -> usize {
        self.p.len()
    }

    /// F(k) for integer k; F(0) = 0 and F(K) = 1.
    #[inline]
    pub fn cdf_at(&self, k: i64) -> f64 {
        if k <= 0 {
            0.0
        } else if k as usize >= self.p.len() {
            1.0
        } else {
            self.cum[k as usize - 1]
        }
    }

    #[inline]
    pub fn pmf_at(&self, k: i64) -> f64 {
        if k >= 1 && (k as usize) <= self.p.len() {
            self.p[k as usize - 1]
        } else {
            0.0
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cum.iter().position(|&c| c >= u).unwrap_or(self.p.len() - 1);
        (k + 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarginalFamily {
    Categorical(Categorical),
    Gaussian { mu: f64, sigma: f64 },
    Laplace { mu: f64, sigma: f64 },
    /// Noncentral t with `nu` degrees of freedom and noncentrality `mu`.
    StudentT { nu: f64, mu: f64 },
    /// Shape and rate.
    Gamma { shape: f64, rate: f64 },
    Beta { a: f64, b: f64 },
    Kumaraswamy { a: f64, b: f64 },
    Empirical(EmpiricalCdf),
}

impl MarginalFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            MarginalFamily::Categorical(_) => FamilyKind::Categorical,
            MarginalFamily::Gaussian { .. } => FamilyKind::Gaussian,
            MarginalFamily::Laplace { .. } => FamilyKind::Laplace,
            MarginalFamily::StudentT { .. } => FamilyKind::StudentT,
            MarginalFamily::Gamma { .. } => FamilyKind::Gamma,
            MarginalFamily::Beta { .. } => FamilyKind::Beta,
            MarginalFamily::Kumaraswamy { .. } => FamilyKind::Kumaraswamy,
            MarginalFamily::Empirical(_) => FamilyKind::Empirical,
        }
    }

    /// Builds a family from packed parameters. Returns `None` when the
    /// parameters are invalid (non-positive scale, simplex violated).
    pub fn from_params(kind: FamilyKind, psi: &[f64], categories: usize) -> Option<MarginalFamily> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match kind {
            FamilyKind::Categorical => {
                if psi.len() + 1 != categories || psi.iter().any(|&p| !(p >= 0.0)) {
                    return None;
                }
                let last = 1.0 - psi.iter().sum::<f64>();
                if last < PROB_LOWER {
                    return None;
                }
                let mut p = psi.to_vec();
                p.push(last);
                Some(MarginalFamily::Categorical(Categorical::new(p)))
            }
            FamilyKind::Gaussian if psi[0].is_finite() && pos(psi[1]) => {
                Some(MarginalFamily::Gaussian { mu: psi[0], sigma: psi[1] })
            }
            FamilyKind::Laplace if psi[0].is_finite() && pos(psi[1]) => {
                Some(MarginalFamily::Laplace { mu: psi[0], sigma: psi[1] })
            }
            FamilyKind::StudentT if pos(psi[0]) && psi[1].is_finite() => {
                Some(MarginalFamily::StudentT { nu: psi[0], mu: psi[1] })
            }
            FamilyKind::Gamma if pos(psi[0]) && pos(psi[1]) => Some(MarginalFamily::Gamma {
                shape: psi[0],
                rate: psi[1],
            }),
            FamilyKind::Beta if pos(psi[0]) && pos(psi[1]) => Some(MarginalFamily::Beta { a: psi[0], b: psi[1] }),
            FamilyKind::Kumaraswamy if pos(psi[0]) && pos(psi[1]) => {
                Some(MarginalFamily::Kumaraswamy { a: psi[0], b: psi[1] })
            }
            _ => None,
        }
    }

    /// Packed parameters (inverse of [`MarginalFamily::from_params`]).
    pub fn params(&self) -> Vec<f64> {
        match self {
            MarginalFamily::Categorical(c) => c.p[..c.p.len() - 1].to_vec(),
            MarginalFamily::Gaussian { mu, sigma } | MarginalFamily::Laplace { mu, sigma } => vec![*mu, *sigma],
            MarginalFamily::StudentT { nu, mu } => vec![*nu, *mu],
            MarginalFamily::Gamma { shape, rate } => vec![*shape, *rate],
            MarginalFamily::Beta { a, b } | MarginalFamily::Kumaraswamy { a, b } => vec![*a, *b],
            MarginalFamily::Empirical(_) => Vec::new(),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            MarginalFamily::Categorical(c) => c.cdf_at(y.floor() as i64),
            MarginalFamily::Gaussian { mu, sigma } => normal::cdf((y - mu) / sigma),
            MarginalFamily::Laplace { mu, sigma } => {
                let x = (y - mu) / sigma;
                if x < 0.0 {
                    0.5 * x.exp()
                } else {
                    1.0 - 0.5 * (-x).exp()
                }
            }
            MarginalFamily::StudentT { nu, mu } => noncentral_t::cdf(y, *nu, *mu),
            MarginalFamily::Gamma { shape, rate } => {
                if y <= 0.0 {
                    0.0
                } else if y.is_infinite() {
                    1.0
                } else {
                    gamma_lr(*shape, rate * y)
                }
            }
            MarginalFamily::Beta { a, b } => {
                if y <= 0.0 {
                    0.0
                } else if y >= 1.0 {
                    1.0
                } else {
                    beta_reg(*a, *b, y)
                }
            }
            MarginalFamily::Kumaraswamy { a, b } => {
                if y <= 0.0 {
                    0.0
                } else if y >= 1.0 {
                    1.0
                } else {
                    // 1 - (1 - y^a)^b, computed without cancellation
                    -(b * (-y.powf(*a)).ln_1p()).exp_m1()
                }
            }
            MarginalFamily::Empirical(e) => e.cdf(y),
        }
    }

    /// Log density (continuous) or log mass (categorical). The empirical
    /// family has no density and yields NaN.
    pub fn ln_density(&self, y: f64) -> f64 {
        match self {
            MarginalFamily::Categorical(c) => {
                if y.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                c.pmf_at(y as i64).ln()
            }
            MarginalFamily::Gaussian { mu, sigma } => normal::ln_pdf((y - mu) / sigma) - sigma.ln(),
            MarginalFamily::Laplace { mu, sigma } => -(y - mu).abs() / sigma - (2.0 * sigma).ln(),
            MarginalFamily::StudentT { nu, mu } => noncentral_t::ln_pdf(y, *nu, *mu),
            MarginalFamily::Gamma { shape, rate } => {
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(*shape) + (shape - 1.0) * y.ln() - rate * y
            }
            MarginalFamily::Beta { a, b } => {
                if y <= 0.0 || y >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ln_beta(*a, *b)
            }
            MarginalFamily::Kumaraswamy { a, b } => {
                if y <= 0.0 || y >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                a.ln() + b.ln() + (a - 1.0) * y.ln() + (b - 1.0) * (-y.powf(*a)).ln_1p()
            }
            MarginalFamily::Empirical(_) => f64::NAN,
        }
    }

    /// `(cdf(y), ln_density(y))`, sharing work where the family allows.
    pub fn cdf_ln_density(&self, y: f64) -> (f64, f64) {
        match self {
            MarginalFamily::StudentT { nu, mu } => noncentral_t::cdf_ln_pdf(y, *nu, *mu),
            _ => (self.cdf(y), self.ln_density(y)),
        }
    }

    /// Distributional-transform midpoint `{F(y-1) + F(y)} / 2`.
    pub fn dt_cdf(&self, y: i64) -> Result<f64> {
        match self {
            MarginalFamily::Categorical(c) => Ok(0.5 * (c.cdf_at(y - 1) + c.cdf_at(y))),
            _ => Err(OmegaError::NotDiscrete("the distributional transform")),
        }
    }

    /// Inverse cdf: the smallest support point with `F(y) >= u`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            MarginalFamily::Categorical(c) => c.quantile(u),
            MarginalFamily::Gaussian { mu, sigma } => mu + sigma * normal::quantile(u),
            MarginalFamily::Laplace { mu, sigma } => {
                if u < 0.5 {
                    mu + sigma * (2.0 * u).ln()
                } else {
                    mu - sigma * (2.0 * (1.0 - u)).ln()
                }
            }
            MarginalFamily::Kumaraswamy { a, b } => {
                // (1 - (1 - u)^{1/b})^{1/a}
                (-((-u).ln_1p() / b).exp_m1()).powf(1.0 / a)
            }
            MarginalFamily::Gamma { shape, rate } => {
                let mean = shape / rate;
                self.invert(u, (0.0, f64::INFINITY), mean)
            }
            MarginalFamily::Beta { a, b } => self.invert(u, (0.0, 1.0), a / (a + b)),
            MarginalFamily::StudentT { mu, .. } => self.invert(u, (f64::NEG_INFINITY, f64::INFINITY), *mu),
            MarginalFamily::Empirical(e) => e.quantile(u),
        }
    }

    /// Safeguarded Newton inversion of the cdf on a (possibly unbounded)
    /// support.
    fn invert(&self, u: f64, support: (f64, f64), start: f64) -> f64 {
        if u <= 0.0 {
            return support.0;
        }
        if u >= 1.0 {
            return support.1;
        }
        let (mut lo, mut hi) = support;
        let mut step = start.abs().max(1.0);
        if !lo.is_finite() || !hi.is_finite() {
            // bracket by expansion around the start point
            let mut a = start;
            let mut b = start;
            while self.cdf(a) > u {
                if lo.is_finite() {
                    a = lo;
                    break;
                }
                a -= step;
                step *= 2.0;
            }
            step = start.abs().max(1.0);
            while self.cdf(b) < u {
                b += step;
                step *= 2.0;
                if !b.is_finite() {
                    break;
                }
            }
            lo = a.max(support.0);
            hi = b;
        }
        let mut x = start.clamp(lo, hi);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..300 {
            let fx = self.cdf(x) - u;
            if fx == 0.0 {
                return x;
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let dens = self.ln_density(x).exp();
            let mut next = x - fx / dens;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
                return next;
            }
            x = next;
        }
        x
    }
}

fn mean_var(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn median(data: &[f64]) -> f64 {
    let mut s = data.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Starting family for optimization or sampling, from the observed scores.
///
/// Categorical probabilities with no observations are floored so that the
/// start lies strictly inside the box.
pub fn initial_family(data: &[f64], kind: FamilyKind, categories: usize) -> Result<MarginalFamily> {
    if data.len() < 2 {
        return Err(OmegaError::Degenerate("need at least two observed scores".into()));
    }
    kind.check_support(data)?;
    match kind {
        FamilyKind::Categorical => {
            if categories < 2 {
                return Err(OmegaError::Degenerate("categorical data need at least two categories".into()));
            }
            let mut counts = vec![0.0; categories];
            for &y in data {
                let k = y as usize;
                if k >= 1 && k <= categories {
                    counts[k - 1] += 1.0;
                }
            }
            let n = counts.iter().sum::<f64>();
            let mut p: Vec<f64> = counts.iter().map(|c| c / n).collect();
            let floor = 10.0 * PROB_LOWER;
            if p.iter().any(|&pk| pk < floor) {
                p.iter_mut().for_each(|pk| *pk = pk.max(floor));
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|pk| *pk /= total);
            }
            Ok(MarginalFamily::Categorical(Categorical::new(p)))
        }
        FamilyKind::Gaussian | FamilyKind::Laplace => {
            let (mean, var) = mean_var(data);
            if !(var > 0.0) {
                return Err(OmegaError::Degenerate("zero sample variance".into()));
            }
            let sigma = var.sqrt();
            Ok(if kind == FamilyKind::Gaussian {
                MarginalFamily::Gaussian { mu: mean, sigma }
            } else {
                MarginalFamily::Laplace { mu: mean, sigma }
            })
        }
        FamilyKind::StudentT => {
            let med = median(data);
            let dev: Vec<f64> = data.iter().map(|y| (y - med).abs()).collect();
            // scaled MAD, consistent for the normal standard deviation
            let mad = 1.4826 * median(&dev);
            if !(mad > 0.0) {
                return Err(OmegaError::Degenerate("zero median absolute deviation".into()));
            }
            Ok(MarginalFamily::StudentT { nu: mad, mu: med })
        }
        FamilyKind::Gamma => {
            let (mean, var) = mean_var(data);
            if !(var > 0.0) {
                return Err(OmegaError::Degenerate("zero sample variance".into()));
            }
            Ok(MarginalFamily::Gamma {
                shape: mean * mean / var,
                rate: mean / var,
            })
        }
        FamilyKind::Beta => {
            let (mean, var) = mean_var(data);
            if !(var > 0.0) {
                return Err(OmegaError::Degenerate("zero sample variance".into()));
            }
            let factor = mean * (1.0 - mean) / var - 1.0;
            if !(factor > 0.0) {
                return Err(OmegaError::Degenerate("sample variance too large for a beta start".into()));
            }
            Ok(MarginalFamily::Beta {
                a: mean * factor,
                b: (1.0 - mean) * factor,
            })
        }
        FamilyKind::Kumaraswamy => Ok(MarginalFamily::Kumaraswamy { a: 1.0, b: 1.0 }),
        FamilyKind::Empirical => Err(OmegaError::Incompatible {
            objective: "parametric starting values",
            family: "empirical",
        }),
    }
}

/// Upper bound on the correlation of two Bernoulli variables with means
/// `p1` and `p2`.
pub fn max_binary_correlation(p1: f64, p2: f64) -> f64 {
    let r = (p1 * (1.0 - p2)) / (p2 * (1.0 - p1));
    r.sqrt().min((1.0 / r).sqrt())
}
