#![no_main]

use arbeval::analysis::Rule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|src: &str| {
    if let Ok(rule) = src.parse::<Rule>() {
        // the displayed source must parse to the same rule
        assert_eq!(rule.to_string().parse::<Rule>().ok(), Some(rule));
    }
});
