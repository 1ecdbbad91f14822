#![no_main]

use eldt_core::datagen::read_jobs;
use eldt_core::hfs::{decode_list_schedule, default_machine_types, HfsInstance};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let types = default_machine_types();
    let Ok(jobs) = read_jobs(data, &types) else { return };
    if jobs.len() > 64 {
        return;
    }
    if let Ok(inst) = HfsInstance::with_defaults(jobs) {
        let perm: Vec<usize> = (0..inst.jobs().len()).collect();
        let _ = decode_list_schedule(&inst, &perm);
    }
});
