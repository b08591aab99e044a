#![no_main]
use libfuzzer_sys::fuzz_target;
use steklov::forward::CauchyData;

fuzz_target!(|data: &[u8]| {
    let _ = std::str::from_utf8(data).map(|s| CauchyData::from_text(s));
});
