#![no_main]

use libfuzzer_sys::fuzz_target;
use wbary::schema::{self, EntropyConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = schema::parse::<EntropyConfig>(data, "fuzz") {
        let _ = file.build(None);
    }
});
