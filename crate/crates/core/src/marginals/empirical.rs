use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EcdfVariant {
    /// Clamped into `[1/(n+1), n/(n+1)]` so the normal quantile stays finite.
    Plain,
    /// Clamped into `[eps, 1 - eps]`.
    Winsorized,
}

impl std::str::FromStr for EcdfVariant {
    type Err = crate::error::OmegaError;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "plain" => Ok(EcdfVariant::Plain),
            "winsorized" => Ok(EcdfVariant::Winsorized),
            _ => Err(crate::error::OmegaError::UnknownName {
                what: "ecdf variant",
                name: s.to_string(),
            }),
        }
    }
}

/// Default truncation `1 / (4 n^{1/4} sqrt(pi log n))`.
pub fn default_truncation(n: usize) -> f64 {
    let n = n.max(2) as f64;
    let eps = 1.0 / (4.0 * n.powf(0.25) * (std::f64::consts::PI * n.ln()).sqrt());
    eps.min(0.49)
}

/// Empirical distribution function of a sample with clamped tails.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    variant: EcdfVariant,
    lower: f64,
    upper: f64,
}

impl EmpiricalCdf {
    /// `eps` is only used by the Winsorized variant; `None` picks
    /// [`default_truncation`].
    pub fn new(sample: &[f64], variant: EcdfVariant, eps: Option<f64>) -> Self {
        assert!(!sample.is_empty(), "empirical cdf of an empty sample");
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let (lower, upper) = match variant {
            EcdfVariant::Plain => (1.0 / (n + 1.0), n / (n + 1.0)),
            EcdfVariant::Winsorized => {
                let e = eps.unwrap_or_else(|| default_truncation(sorted.len()));
                (e, 1.0 - e)
            }
        };
        EmpiricalCdf {
            sorted,
            variant,
            lower,
            upper,
        }
    }

    pub fn variant(&self) -> EcdfVariant {
        self.variant
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn sample(&self) -> &[f64] {
        &self.sorted
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let count = self.sorted.partition_point(|&x| x <= y);
        let raw = count as f64 / self.sorted.len() as f64;
        raw.clamp(self.lower, self.upper)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        sorted_type8_quantile(&self.sorted, p)
    }
}

/// Median-unbiased (Hyndman-Fan type 8) sample quantile.
pub fn median_unbiased_quantile(sample: &[f64], p: f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_type8_quantile(&sorted, p)
}

pub(crate) fn sorted_type8_quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    let h = (n as f64 + 1.0 / 3.0) * p + 1.0 / 3.0;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_clamps_to_inner_band() {
        let e = EmpiricalCdf::new(&[4.0, 1.0, 3.0, 2.0], EcdfVariant::Plain, None);
        assert_eq!(e.cdf(2.0), 0.5);
        assert_eq!(e.cdf(0.0), 0.2);
        let two = EmpiricalCdf::new(&[1.0, 2.0], EcdfVariant::Plain, None);
        assert!((two.cdf(2.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn winsorized_clamps_at_truncation() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        let e = EmpiricalCdf::new(&s, EcdfVariant::Winsorized, Some(0.05));
        assert!((e.cdf(10.0) - 0.95).abs() < 1e-15);
        assert!((e.cdf(-3.0) - 0.05).abs() < 1e-15);
        assert_eq!(e.cdf(5.0), 0.5);
    }

    #[test]
    fn default_truncation_is_in_range() {
        for n in [1, 2, 10, 100, 10_000] {
            let e = default_truncation(n);
            assert!(e > 0.0 && e < 0.5, "n={n} eps={e}");
        }
        assert!(default_truncation(1000) < default_truncation(100));
    }

    #[test]
    fn type8_quantiles() {
        assert_eq!(median_unbiased_quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(median_unbiased_quantile(&[7.0], 0.1), 7.0);
        assert_eq!(median_unbiased_quantile(&[7.0], 0.9), 7.0);
        assert_eq!(median_unbiased_quantile(&[10.0, 0.0], 0.5), 5.0);
        assert_eq!(median_unbiased_quantile(&[1.0, 2.0, 3.0], 0.0001), 1.0);
        assert_eq!(median_unbiased_quantile(&[1.0, 2.0, 3.0], 0.9999), 3.0);
    }
}
