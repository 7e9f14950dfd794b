//! Small reference datasets used in examples and tests.

use crate::scores::{ColumnLabel, RawGrid};

/// Krippendorff's classic nominal reliability example: twelve units scored
/// by four coders on five categories, seven cells missing.
pub fn nominal_grid() -> RawGrid {
    let cols: [[Option<u8>; 12]; 4] = [
        [Some(1), Some(2), Some(3), Some(3), Some(2), Some(1), Some(4), Some(1), Some(2), None, None, None],
        [Some(1), Some(2), Some(3), Some(3), Some(2), Some(2), Some(4), Some(1), Some(2), Some(5), None, Some(3)],
        [None, Some(3), Some(3), Some(3), Some(2), Some(3), Some(4), Some(2), Some(2), Some(5), Some(1), None],
        [Some(1), Some(2), Some(3), Some(3), Some(2), Some(4), Some(4), Some(1), Some(2), Some(5), Some(1), None],
    ];
    (0..12)
        .map(|u| cols.iter().map(|c| c[u].map(f64::from)).collect())
        .collect()
}

pub fn nominal_labels() -> Vec<ColumnLabel> {
    (1..=4).map(|c| ColumnLabel::coder(1, c, 1)).collect()
}
