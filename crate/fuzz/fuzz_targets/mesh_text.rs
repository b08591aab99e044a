#![no_main]
use libfuzzer_sys::fuzz_target;
use steklov::mesh::Mesh;

fuzz_target!(|data: &[u8]| {
    let _ = std::str::from_utf8(data).map(|s| Mesh::from_text(s));
});
