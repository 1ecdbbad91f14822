#![no_main]

use eldt_bench::ExperimentConfig;
use eldt_core::ge::EvolutionConfig;
use eldt_core::makeorbuy::MakeOrBuyParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ExperimentConfig::from_toml(text) {
        let _ = c.validate();
        let back = ExperimentConfig::from_toml(&c.to_toml()).expect("serialized config parses");
        assert_eq!(back.to_toml(), c.to_toml());
    }
    let _ = EvolutionConfig::from_toml(text);
    let _ = MakeOrBuyParams::from_toml(text);
});
