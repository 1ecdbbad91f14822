#![no_main]

use eldt_core::datagen::{gen_hfs, HfsVariant};
use eldt_core::hfs::{check_feasible, decode_list_schedule, is_permutation, lower_bounds};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else { return };
    let variant = [HfsVariant::D1, HfsVariant::D2, HfsVariant::D3, HfsVariant::D4][(head % 4) as usize];
    let n = rest.len().min(40);
    let inst = gen_hfs(variant, n, head as u64);
    let perm: Vec<usize> = rest[..n].iter().map(|&b| b as usize % (n + 1)).collect();
    match decode_list_schedule(&inst, &perm) {
        Ok(s) => {
            assert!(is_permutation(&perm, n));
            assert!(check_feasible(&inst, &s).is_empty());
            assert!(s.makespan() >= lower_bounds(&inst) - 1e-9);
        }
        Err(_) => assert!(!is_permutation(&perm, n)),
    }
});
