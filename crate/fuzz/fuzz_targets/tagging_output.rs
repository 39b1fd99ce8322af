#![no_main]

use arbeval::protocol::parse_tagging_output;
use arbeval::tok::NormalizationTable;
use arbeval::treebank::FeatureVocab;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|raw: &str| {
    let gold = ["و+", "قال", "الولد", "."];
    let out = parse_tagging_output(raw, &gold, &FeatureVocab::default(), &NormalizationTable::default());
    assert_eq!(out.alignment.map(|a| a.gold_to_pred().len()), Some(gold.len()));
});
