#![no_main]

use arbeval::gateway::ModelConfig;
use arbeval::runner::ProjectConfig;
use arbeval::tok::NormalizationTable;
use arbeval::treebank::FeatureVocab;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = ProjectConfig::from_toml(text, std::path::Path::new("."));
    let _ = ModelConfig::from_toml(text);
    let _ = FeatureVocab::from_toml(text);
    let _ = NormalizationTable::from_toml(text);
});
