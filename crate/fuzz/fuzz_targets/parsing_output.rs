#![no_main]

use arbeval::protocol::parse_parsing_output;
use arbeval::tok::NormalizationTable;
use arbeval::treebank::LabelSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|raw: &str| {
    let gold = ["ذهب", "الولد", "إلى", "المدرسة"];
    let labels = LabelSet::catib();
    let table = NormalizationTable::default();
    let out = parse_parsing_output(raw, Some(&gold[..]), &labels, &table);
    for a in &out.arcs {
        if let Some(h) = a.head {
            assert!(h <= out.arcs.len());
        }
    }
    let _ = parse_parsing_output::<&str>(raw, None, &labels, &table);
});
