//! Draws from the copula model with a fixed missingness pattern.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{OmegaError, Result};
use crate::marginals::MarginalFamily;
use crate::normal;
use crate::structure::AgreementStructure;

/// Latent Z ~ N(0, Ω(ω)), flattened unit by unit.
pub fn latent<R: Rng + ?Sized>(structure: &AgreementStructure, omega: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut z = Vec::with_capacity(structure.n());
    let mut e = Vec::new();
    for (u, b) in structure.blocks().iter().enumerate() {
        let m = b.size();
        let l = b
            .cholesky(omega)
            .ok_or_else(|| OmegaError::Numerical(format!("correlation block of unit {} is not positive definite", u + 1)))?;
        e.clear();
        e.extend((0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for i in 0..m {
            z.push((0..=i).map(|k| l[i * m + k] * e[k]).sum());
        }
    }
    Ok(z)
}

/// Copula uniforms U = Φ(Z).
pub fn uniforms<R: Rng + ?Sized>(structure: &AgreementStructure, omega: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    Ok(latent(structure, omega, rng)?.into_iter().map(normal::cdf).collect())
}

/// Scores Y = F⁻¹(Φ(Z)).
pub fn values<R: Rng + ?Sized>(
    structure: &AgreementStructure,
    omega: &[f64],
    family: &MarginalFamily,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(uniforms(structure, omega, rng)?.into_iter().map(|u| family.quantile(u)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::Categorical;
    use crate::scores::ColumnLabel;

    fn pairs(n: usize) -> AgreementStructure {
        let labels = vec![ColumnLabel::coder(1, 1, 1), ColumnLabel::coder(1, 2, 1)];
        AgreementStructure::build(&labels, &vec![vec![0, 1]; n]).unwrap()
    }

    #[test]
    fn latent_correlation_matches_omega() {
        let s = pairs(20_000);
        let z = latent(&s, &[0.6], &mut crate::rng::stream(1, 0)).unwrap();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for c in z.chunks(2) {
            sxy += c[0] * c[1];
            sxx += c[0] * c[0];
            syy += c[1] * c[1];
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!((r - 0.6).abs() < 0.02, "{r}");
        assert!((sxx / 20_000.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_marginal_gives_constant_scores() {
        let s = pairs(50);
        let f = MarginalFamily::Categorical(Categorical::new(vec![1.0, 0.0, 0.0]));
        let y = values(&s, &[0.0], &f, &mut crate::rng::stream(3, 0)).unwrap();
        assert!(y.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn same_stream_same_draws() {
        let s = pairs(10);
        let a = latent(&s, &[0.3], &mut crate::rng::stream(9, 4)).unwrap();
        let b = latent(&s, &[0.3], &mut crate::rng::stream(9, 4)).unwrap();
        let c = latent(&s, &[0.3], &mut crate::rng::stream(9, 5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
