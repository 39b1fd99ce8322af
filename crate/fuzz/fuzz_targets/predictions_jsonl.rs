#![no_main]

use arbeval::gateway::parse_reply;
use arbeval::runner::records_from_jsonl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let _ = records_from_jsonl(text);
    let _ = parse_reply(text);
});
