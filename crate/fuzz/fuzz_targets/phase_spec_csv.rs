#![no_main]

use eldt_core::datagen::{parse_phase_spec, phase_spec_order};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_phase_spec(data) {
        let order = phase_spec_order(data).expect("a parsed table lists its types");
        assert!(order.iter().all(|t| table.contains_key(t)));
    }
});
