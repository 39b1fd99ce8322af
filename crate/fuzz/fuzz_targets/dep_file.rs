#![no_main]

use arbeval::treebank::{parse_dependency_file, DepFormat, Split};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for format in [DepFormat::compact(), DepFormat::conllx()] {
        if let Ok(c) = parse_dependency_file(data, &format, Split::Dev) {
            let _ = c.stats();
        }
    }
});
