#![no_main]

use libfuzzer_sys::fuzz_target;
use testimonium::chain::{decode_header, encode_header, hash_header};

fuzz_target!(|data: &[u8]| {
    if let Ok(header) = decode_header(data) {
        // anything that decodes must re-encode to the same bytes and hash stably
        let bytes = encode_header(&header);
        assert_eq!(bytes, data);
        let again = decode_header(&bytes).unwrap();
        assert_eq!(hash_header(&again), hash_header(&header));
    }
});
