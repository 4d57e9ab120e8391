#![no_main]

use libfuzzer_sys::fuzz_target;
use wbary::schema::{self, EnsembleFile};

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = schema::parse::<EnsembleFile>(data, "fuzz") {
        let _ = file.build();
    }
});
