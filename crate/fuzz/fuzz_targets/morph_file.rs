#![no_main]

use arbeval::treebank::{parse_morph_file, FeatureVocab, Split};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_morph_file(data, &FeatureVocab::default(), Split::Train);
});
