#![no_main]

use libfuzzer_sys::fuzz_target;
use wbary::schema::{self, FamilyFile};

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = schema::parse::<FamilyFile>(data, "fuzz") {
        let _ = file.build(None);
    }
});
