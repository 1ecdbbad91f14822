#![no_main]

use eldt_core::env::toy_spec;
use eldt_core::ge::{decode, Genotype, Grammar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let spec = toy_spec();
    let grammar = Grammar::for_spec(&spec, 9);
    let codons: Vec<u32> = data.chunks(2).map(|c| c.iter().fold(0u32, |a, &b| a << 8 | b as u32)).collect();
    let Ok(genotype) = Genotype::new(codons, 65_536) else { return };
    if let Ok(tree) = decode(&genotype, &grammar, &spec) {
        assert!(tree.check_schema(&spec).is_ok());
    }
});
