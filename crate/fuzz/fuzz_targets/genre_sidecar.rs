#![no_main]

use arbeval::treebank::GenreSidecar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = GenreSidecar::parse(data) {
        let _ = s.genres();
    }
});
