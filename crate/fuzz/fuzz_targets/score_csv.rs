#![no_main]

use libfuzzer_sys::fuzz_target;
use omega_core::scores::{read_csv, write_csv};
use omega_core::{Level, ScoreMatrix};

fuzz_target!(|data: &[u8]| {
    let _ = read_csv(data);
    for level in [Level::Nominal, Level::Ordinal, Level::Interval, Level::Ratio] {
        if let Ok(m) = ScoreMatrix::from_csv(data, level) {
            assert!(m.n_units() <= m.original_rows());
            let mut buf = Vec::new();
            write_csv(&mut buf, m.labels(), &m.embed_original()).expect("write to memory");
            let back = ScoreMatrix::from_csv(buf.as_slice(), level).expect("written csv reads back");
            assert_eq!(back.observed(), m.observed());
        }
    }
});
