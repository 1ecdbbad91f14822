#![no_main]

use eldt_core::ge::{Genotype, Grammar};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = Grammar::parse(text) {
        let codons: Vec<u32> = data.iter().map(|&b| b as u32).collect();
        if let Ok(genotype) = Genotype::new(codons, 256) {
            let _ = g.derive(&genotype).map(|d| d.text());
        }
    }
});
