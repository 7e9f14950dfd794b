#![no_main]

use libfuzzer_sys::fuzz_target;
use omega_core::scores::parse_labels;
use omega_core::ColumnLabel;

fuzz_target!(|data: &str| {
    let headers: Vec<&str> = data.split(',').collect();
    let check = parse_labels(&headers);
    if check.success {
        assert!(check.bad_columns.is_empty());
    }
    for h in &headers {
        if let Ok(label) = h.parse::<ColumnLabel>() {
            // printing and parsing again is the identity
            let again: ColumnLabel = label.to_string().parse().expect("printed label parses");
            assert_eq!(again, label);
        }
    }
    let _ = check.into_labels();
});
