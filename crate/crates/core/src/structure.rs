//! Block-diagonal copula correlation structures.
//!
//! Every retained unit contributes one block, indexed by its observed scores.
//! Off-diagonal entries name the agreement parameter shared by the two
//! scores, chosen by their most specific common scope.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{OmegaError, Result};
use crate::scores::{ColumnLabel, LabelKind};

/// Distance of the agreement upper bound from one.
pub const OMEGA_MARGIN: f64 = 1e-3;
pub const OMEGA_UPPER: f64 = 1.0 - OMEGA_MARGIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    One,
    Zero,
    Param(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Scope {
    Gold(u32),
    Intra(u32, u32),
    Inter(u32),
    Between,
}

impl Scope {
    fn sort_key(self) -> (u32, u8, u32) {
        match self {
            Scope::Gold(m) => (m, 0, 0),
            Scope::Intra(m, c) => (m, 1, c),
            Scope::Inter(m) => (m, 2, 0),
            Scope::Between => (u32::MAX, 0, 0),
        }
    }
}

fn pair_scope(a: &ColumnLabel, b: &ColumnLabel) -> Option<Scope> {
    match (a.kind, b.kind) {
        (LabelKind::Gold, _) | (_, LabelKind::Gold) => (a.method == b.method).then_some(Scope::Gold(a.method)),
        (LabelKind::Coder, LabelKind::Coder) => {
            if a.method != b.method {
                Some(Scope::Between)
            } else if a.coder == b.coder {
                Some(Scope::Intra(a.method, a.coder.unwrap_or(0)))
            } else {
                Some(Scope::Inter(a.method))
            }
        }
    }
}

/// One unit's block: the observed columns, their offset into the flattened
/// score vector, and the symmetric entry grid (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitBlock {
    pub columns: Vec<usize>,
    pub offset: usize,
    entries: Vec<Entry>,
}

impl UnitBlock {
    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> Entry {
        self.entries[i * self.size() + j]
    }

    fn value(&self, i: usize, j: usize, omega: &[f64]) -> f64 {
        match self.entry(i, j) {
            Entry::One => 1.0,
            Entry::Zero => 0.0,
            Entry::Param(k) => omega[k],
        }
    }

    /// Dense block at `omega`, row-major.
    pub fn dense(&self, omega: &[f64]) -> Vec<f64> {
        let m = self.size();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = self.value(i, j, omega);
            }
        }
        out
    }

    /// Lower Cholesky factor (row-major) or `None` if not positive definite.
    pub fn cholesky(&self, omega: &[f64]) -> Option<Vec<f64>> {
        let mut l = self.dense(omega);
        cholesky_in_place(&mut l, self.size()).then_some(l)
    }
}

/// Cholesky of a row-major `m × m` symmetric matrix, overwriting the lower
/// triangle with L and zeroing the upper triangle.
pub(crate) fn cholesky_in_place(a: &mut [f64], m: usize) -> bool {
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in (j + 1)..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
        for i in 0..j {
            a[i * m + j] = 0.0;
        }
    }
    true
}

/// Agreement parameter names plus per-unit symbolic blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementStructure {
    param_names: Vec<String>,
    blocks: Vec<UnitBlock>,
    n: usize,
}

/// A within-block score pair with nonzero correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub param: usize,
}

/// Log-determinant and quadratic form of Ω summed over blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogdetQuad {
    pub log_det: f64,
    pub quad_form: f64,
}

impl AgreementStructure {
    /// Builds the structure from column labels and each unit's observed
    /// column indices.
    pub fn build(labels: &[ColumnLabel], observed: &[Vec<usize>]) -> Result<Self> {
        let coder_methods: BTreeSet<u32> = labels.iter().filter(|l| !l.is_gold()).map(|l| l.method).collect();
        if let Some(g) = labels.iter().find(|l| l.is_gold() && !coder_methods.contains(&l.method)) {
            return Err(OmegaError::Structure(format!(
                "gold standard for method {} but no coder scores for that method",
                g.method
            )));
        }
        let methods: BTreeSet<u32> = labels.iter().map(|l| l.method).collect();
        let has_gold = labels.iter().any(|l| l.is_gold());
        let mut scores_per_coder: std::collections::BTreeMap<(u32, u32), BTreeSet<u32>> = Default::default();
        for l in labels.iter().filter(|l| !l.is_gold()) {
            scores_per_coder
                .entry((l.method, l.coder.unwrap_or(0)))
                .or_default()
                .insert(l.score.unwrap_or(0));
        }
        let simple = methods.len() == 1 && !has_gold && scores_per_coder.values().all(|s| s.len() == 1);

        // collect the scopes actually used
        let mut used = BTreeSet::new();
        for (u, cols) in observed.iter().enumerate() {
            if cols.len() < 2 {
                return Err(OmegaError::Structure(format!("unit {} has fewer than two scores", u + 1)));
            }
            for (a, &ca) in cols.iter().enumerate() {
                for &cb in &cols[a + 1..] {
                    if let Some(s) = pair_scope(&labels[ca], &labels[cb]) {
                        used.insert(s);
                    }
                }
            }
        }
        let mut scopes: Vec<Scope> = used.into_iter().collect();
        scopes.sort_by_key(|s| s.sort_key());
        let param_names: Vec<String> = scopes
            .iter()
            .map(|s| match *s {
                Scope::Gold(m) => format!("gold.m{m}"),
                Scope::Intra(m, c) => format!("intra.m{m}.c{c}"),
                Scope::Inter(_) if simple => "inter".to_string(),
                Scope::Inter(m) => format!("inter.m{m}"),
                Scope::Between => "between".to_string(),
            })
            .collect();

        let mut blocks = Vec::with_capacity(observed.len());
        let mut offset = 0;
        for cols in observed {
            let m = cols.len();
            let mut entries = vec![Entry::Zero; m * m];
            for i in 0..m {
                entries[i * m + i] = Entry::One;
                for j in (i + 1)..m {
                    let e = match pair_scope(&labels[cols[i]], &labels[cols[j]]) {
                        Some(s) => Entry::Param(scopes.iter().position(|&t| t == s).expect("scope collected")),
                        None => Entry::Zero,
                    };
                    entries[i * m + j] = e;
                    entries[j * m + i] = e;
                }
            }
            blocks.push(UnitBlock {
                columns: cols.clone(),
                offset,
                entries,
            });
            offset += m;
        }
        Ok(AgreementStructure {
            param_names,
            blocks,
            n: offset,
        })
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn blocks(&self) -> &[UnitBlock] {
        &self.blocks
    }

    /// Total number of observed scores.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Per-block Cholesky; `None` when some block is not positive definite.
    pub fn logdet_quadform(&self, omega: &[f64], z: &[f64]) -> Option<LogdetQuad> {
        debug_assert_eq!(omega.len(), self.n_params());
        debug_assert_eq!(z.len(), self.n);
        let mut scratch = Vec::new();
        let mut w = Vec::new();
        let mut log_det = 0.0;
        let mut quad_form = 0.0;
        for b in &self.blocks {
            let m = b.size();
            scratch.clear();
            scratch.extend((0..m * m).map(|k| b.value(k / m, k % m, omega)));
            if !cholesky_in_place(&mut scratch, m) {
                return None;
            }
            w.clear();
            for i in 0..m {
                let mut s = z[b.offset + i];
                for k in 0..i {
                    s -= scratch[i * m + k] * w[k];
                }
                let wi = s / scratch[i * m + i];
                w.push(wi);
                quad_form += wi * wi;
                log_det += 2.0 * scratch[i * m + i].ln();
            }
        }
        Some(LogdetQuad { log_det, quad_form })
    }

    /// All within-block pairs `i < j` (flattened score indices) whose
    /// correlation is a parameter.
    pub fn pair_list(&self) -> Vec<Pair> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for i in 0..b.size() {
                for j in (i + 1)..b.size() {
                    if let Entry::Param(k) = b.entry(i, j) {
                        out.push(Pair {
                            i: b.offset + i,
                            j: b.offset + j,
                            param: k,
                        });
                    }
                }
            }
        }
        out
    }

    /// Parameter names followed by the block size of every unit.
    pub fn summary(&self) -> String {
        let mut s = format!("parameters: {}\n", self.param_names.join(", "));
        let sizes: Vec<String> = self.blocks.iter().map(|b| b.size().to_string()).collect();
        let _ = writeln!(s, "block sizes: {}", sizes.join(" "));
        s
    }
}

/// θ = (ω, ψ) with ω the agreement parameters and ψ the marginal parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterVector {
    pub omega: Vec<f64>,
    pub psi: Vec<f64>,
}

impl ParameterVector {
    pub fn pack(&self) -> Vec<f64> {
        self.omega.iter().chain(&self.psi).copied().collect()
    }

    pub fn unpack(theta: &[f64], n_omega: usize) -> Self {
        ParameterVector {
            omega: theta[..n_omega].to_vec(),
            psi: theta[n_omega..].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::parse_labels;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn labels(text: &[&str]) -> Vec<ColumnLabel> {
        parse_labels(text).into_labels().unwrap()
    }

    fn full(m: usize) -> Vec<Vec<usize>> {
        vec![(0..m).collect()]
    }

    /// Dense oracle: log det and z' Ω^{-1} z over all blocks.
    fn dense_oracle(s: &AgreementStructure, omega: &[f64], z: &[f64]) -> (f64, f64) {
        let mut ld = 0.0;
        let mut q = 0.0;
        for b in s.blocks() {
            let m = b.size();
            let a = DMatrix::from_row_slice(m, m, &b.dense(omega));
            ld += a.determinant().ln();
            let zb = nalgebra::DVector::from_column_slice(&z[b.offset..b.offset + m]);
            q += zb.dot(&(a.try_inverse().unwrap() * &zb));
        }
        (ld, q)
    }

    #[test]
    fn nominal_example_has_one_parameter() {
        let m = crate::scores::ScoreMatrix::prepare(
            &crate::datasets::nominal_grid(),
            crate::datasets::nominal_labels(),
            crate::scores::Level::Nominal,
        )
        .unwrap();
        let s = AgreementStructure::build(m.labels(), &m.observed_mask()).unwrap();
        assert_eq!(s.param_names(), &["inter".to_string()]);
        assert_eq!(s.blocks()[0].size(), 3);
        assert_eq!(s.blocks()[1].size(), 4);
        let d = s.blocks()[0].dense(&[0.1]);
        assert_eq!(d, vec![1.0, 0.1, 0.1, 0.1, 1.0, 0.1, 0.1, 0.1, 1.0]);
        assert_eq!(s.n(), 40);
        // sizes 3, 4 x 8, 3, 2 => 3 + 48 + 3 + 1 pairs
        assert_eq!(s.pair_list().len(), 3 + 8 * 6 + 3 + 1);
    }

    #[test]
    fn gold_standard_block() {
        let s = AgreementStructure::build(&labels(&["g", "c.1.1", "c.2.1"]), &full(3)).unwrap();
        assert_eq!(s.param_names(), &["gold.m1".to_string(), "inter.m1".to_string()]);
        let b = &s.blocks()[0];
        assert_eq!(b.entry(0, 1), Entry::Param(0));
        assert_eq!(b.entry(0, 2), Entry::Param(0));
        assert_eq!(b.entry(1, 2), Entry::Param(1));
    }

    #[test]
    fn multi_method_block() {
        let l = labels(&[
            "g.m1", "m1.c.1.1", "m1.c.1.2", "m1.c.2.1", "m1.c.2.2", "m2.c.1.1", "m2.c.1.2", "m2.c.2.1", "m2.c.2.2",
        ]);
        let s = AgreementStructure::build(&l, &full(9)).unwrap();
        let want = [
            "gold.m1", "intra.m1.c1", "intra.m1.c2", "inter.m1", "intra.m2.c1", "intra.m2.c2", "inter.m2", "between",
        ];
        assert_eq!(s.param_names(), &want.map(String::from));
        let b = &s.blocks()[0];
        for j in 5..9 {
            assert_eq!(b.entry(0, j), Entry::Zero);
        }
        assert_eq!(b.entry(1, 2), Entry::Param(1));
        assert_eq!(b.entry(1, 3), Entry::Param(3));
        assert_eq!(b.entry(3, 4), Entry::Param(2));
        assert_eq!(b.entry(2, 7), Entry::Param(7));
        assert_eq!(b.entry(7, 8), Entry::Param(5));
    }

    #[test]
    fn gold_without_coders_is_an_error() {
        let l = labels(&["g.m2", "c.1.1", "c.2.1"]);
        assert!(matches!(AgreementStructure::build(&l, &full(3)), Err(OmegaError::Structure(_))));
    }

    #[test]
    fn identity_at_zero() {
        let s = AgreementStructure::build(&labels(&["c.1.1", "c.2.1", "c.3.1"]), &full(3)).unwrap();
        let z = [0.3, -1.2, 2.0];
        let r = s.logdet_quadform(&[0.0], &z).unwrap();
        assert_eq!(r.log_det, 0.0);
        assert_eq!(r.quad_form, z.iter().map(|v| v * v).sum::<f64>());
    }

    #[test]
    fn compound_symmetry_closed_form() {
        for m in 2..7usize {
            let text: Vec<String> = (1..=m).map(|c| format!("c.{c}.1")).collect();
            let s = AgreementStructure::build(&parse_labels(&text).into_labels().unwrap(), &full(m)).unwrap();
            for &w in &[0.0f64, 0.2, 0.55, 0.9, 0.999] {
                let mf = m as f64;
                let exact = (mf - 1.0) * (1.0 - w).ln() + (1.0 + (mf - 1.0) * w).ln();
                let got = s.logdet_quadform(&[w], &vec![0.0; m]).unwrap().log_det;
                assert!((got - exact).abs() < 1e-10, "m={m} w={w}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn multi_method_can_fail_positive_definiteness() {
        let l = labels(&["m1.c.1.1", "m1.c.2.1", "m2.c.1.1", "m2.c.2.1"]);
        let s = AgreementStructure::build(&l, &full(4)).unwrap();
        assert_eq!(s.param_names(), &["inter.m1", "inter.m2", "between"].map(String::from));
        let omega = [0.0, 0.0, 0.99];
        let dense = DMatrix::from_row_slice(4, 4, &s.blocks()[0].dense(&omega));
        let min_eig = dense.symmetric_eigenvalues().min();
        assert!(min_eig < 0.0);
        assert!(s.logdet_quadform(&omega, &[0.1; 4]).is_none());
    }

    #[test]
    fn pair_counts() {
        let s = AgreementStructure::build(&labels(&["c.1.1", "c.2.1", "c.3.1"]), &full(3)).unwrap();
        assert_eq!(s.pair_list().len(), 3);
        let l = labels(&["g.m1", "c.1.1", "m2.c.1.1", "m2.c.2.1"]);
        let s = AgreementStructure::build(&l, &[vec![0, 1], vec![0, 2]]).unwrap();
        // second unit pairs gold with a method-2 score only: a structural zero
        assert_eq!(s.pair_list().len(), 1);
        assert_eq!(s.param_names(), &["gold.m1".to_string()]);
    }

    proptest! {
        #[test]
        fn agrees_with_dense_oracle(
            sizes in prop::collection::vec(2usize..6, 1..6),
            w in 0.0..0.95f64,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let width = *sizes.iter().max().unwrap();
            let text: Vec<String> = (1..=width).map(|c| format!("c.{c}.1")).collect();
            let l = parse_labels(&text).into_labels().unwrap();
            let mask: Vec<Vec<usize>> = sizes.iter().map(|&m| (0..m).collect()).collect();
            let s = AgreementStructure::build(&l, &mask).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..s.n()).map(|_| rng.random_range(-2.5..2.5)).collect();
            let got = s.logdet_quadform(&[w], &z).unwrap();
            let (ld, q) = dense_oracle(&s, &[w], &z);
            prop_assert!((got.log_det - ld).abs() < 1e-9);
            prop_assert!((got.quad_form - q).abs() < 1e-9 * q.abs().max(1.0));
        }

        #[test]
        fn column_order_is_irrelevant(perm_seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let text = ["g", "c.1.1", "c.1.2", "c.2.1", "c.3.1"];
            let mut order: Vec<usize> = (0..text.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            let l = labels(&text);
            let lp: Vec<ColumnLabel> = order.iter().map(|&i| l[i]).collect();
            let a = AgreementStructure::build(&l, &full(5)).unwrap();
            let b = AgreementStructure::build(&lp, &full(5)).unwrap();
            prop_assert_eq!(a.param_names(), b.param_names());
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert_eq!(a.blocks()[0].entry(order[i], order[j]), b.blocks()[0].entry(i, j));
                }
            }
        }
    }
}
