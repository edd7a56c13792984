#![no_main]

use libfuzzer_sys::fuzz_target;
use testimonium::dataset::parse_dataset_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        // must never panic; any accepted line carries a content-consistent hash
        if let Ok((hash, header, _)) = parse_dataset_line(line) {
            assert_eq!(testimonium::chain::hash_header(&header), hash);
        }
    }
});
