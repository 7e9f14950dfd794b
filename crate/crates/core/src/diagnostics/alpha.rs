//! Krippendorff's α with the discrete (nominal) metric.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OmegaError, Result};
use crate::fit::Z_95;
use crate::marginals::median_unbiased_quantile;
use crate::rng;
use crate::scores::ScoreMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub requested: usize,
    /// Replicates where α was defined.
    pub used: usize,
    pub sd: f64,
    pub gaussian: (f64, f64),
    pub quantile: (f64, f64),
}

/// α = 1 − D_o/D_e from the coincidence matrix, computed from integer
/// counts so that relabeling the categories cannot change the result.
fn alpha_of_rows<'a>(rows: impl Iterator<Item = &'a Vec<Option<f64>>>) -> Result<f64> {
    let mut totals: HashMap<u64, u64> = HashMap::new();
    let mut n = 0u64;
    let mut observed = 0.0;
    let mut counts: HashMap<u64, u64> = HashMap::new();
    for row in rows {
        counts.clear();
        for v in row.iter().flatten() {
            *counts.entry(v.to_bits()).or_default() += 1;
        }
        let m: u64 = counts.values().sum();
        if m < 2 {
            continue;
        }
        let same: u64 = counts.values().map(|c| c * c).sum();
        observed += (m * m - same) as f64 / (m - 1) as f64;
        n += m;
        for (&k, &c) in &counts {
            *totals.entry(k).or_default() += c;
        }
    }
    let expected = n * n - totals.values().map(|c| c * c).sum::<u64>();
    if n < 2 || expected == 0 {
        return Err(OmegaError::Undefined("α needs at least two distinct pairable values".into()));
    }
    Ok(1.0 - (n - 1) as f64 * observed / expected as f64)
}

/// Point estimate over the retained units.
pub fn krippendorff_alpha(data: &ScoreMatrix) -> Result<f64> {
    if !data.level().is_discrete() {
        return Err(OmegaError::NotDiscrete("Krippendorff's α with the discrete metric"));
    }
    if data.n_units() < 2 {
        return Err(OmegaError::Undefined("α needs at least two units".into()));
    }
    alpha_of_rows(data.rows().iter())
}

/// α with a nonparametric bootstrap over units (`n_b` resamples of the
/// retained rows, with replacement). Resamples where α is undefined are
/// skipped.
pub fn krippendorff_alpha_bootstrap(data: &ScoreMatrix, n_b: usize, seed: u64) -> Result<AlphaResult> {
    let alpha = krippendorff_alpha(data)?;
    let rows = data.rows();
    let draws: Vec<f64> = (0..n_b as u64)
        .into_par_iter()
        .filter_map(|j| {
            let mut rng = rng::stream(seed, j);
            let idx: Vec<usize> = (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect();
            alpha_of_rows(idx.iter().map(|&i| &rows[i])).ok()
        })
        .collect();
    if draws.len() < 2 {
        return Err(OmegaError::Undefined("α was undefined in nearly every bootstrap resample".into()));
    }
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
    Ok(AlphaResult {
        alpha,
        requested: n_b,
        used: draws.len(),
        sd,
        gaussian: (alpha - Z_95 * sd, alpha + Z_95 * sd),
        quantile: (
            median_unbiased_quantile(&draws, 0.025),
            median_unbiased_quantile(&draws, 0.975),
        ),
    })
}
