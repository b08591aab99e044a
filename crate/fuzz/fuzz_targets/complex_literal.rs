#![no_main]
use libfuzzer_sys::fuzz_target;
use steklov::pipeline::parse_complex;

fuzz_target!(|data: &[u8]| {
    let _ = std::str::from_utf8(data).map(|s| parse_complex(s));
});
