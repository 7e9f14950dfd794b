#![no_main]

use libfuzzer_sys::fuzz_target;
use omega_core::fit::{BootInterval, ConfintKind};
use omega_core::marginals::EcdfVariant;
use omega_core::{FamilyKind, Level, Method};

fn roundtrip<T>(s: &str)
where
    T: std::str::FromStr + std::fmt::Display + PartialEq + std::fmt::Debug,
{
    if let Ok(v) = s.parse::<T>() {
        assert_eq!(v.to_string().parse::<T>().ok(), Some(v));
    }
}

fuzz_target!(|data: &str| {
    roundtrip::<Level>(data);
    roundtrip::<FamilyKind>(data);
    roundtrip::<Method>(data);
    roundtrip::<ConfintKind>(data);
    roundtrip::<BootInterval>(data);
    let _ = data.parse::<EcdfVariant>();
});
