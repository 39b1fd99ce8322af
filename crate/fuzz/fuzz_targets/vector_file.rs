#![no_main]

use arbeval::retrieval::VectorSet;
use libfuzzer_sys::fuzz_target;

// First line of the input is the id list, one id per space-separated word;
// the rest is the binary file.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let ids = String::from_utf8_lossy(&data[..split]).replace(' ', "\n");
    let bytes = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(set) = VectorSet::read(bytes, &ids) {
        let (again, ids) = set.write();
        assert!(VectorSet::read(&again, &ids).is_ok());
    }
});
