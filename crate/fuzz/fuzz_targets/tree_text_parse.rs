#![no_main]

use eldt_core::env::toy_spec;
use eldt_core::tree::{export, DecisionTree, ExportFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let spec = toy_spec();
    for s in [Some(&spec), None] {
        if let Ok(tree) = DecisionTree::parse(text, spec.action_count(), s) {
            // Exported text parses back to the same export.
            let once = export(&tree, ExportFormat::Text, s);
            let again = DecisionTree::parse(&once, spec.action_count(), s).expect("exported text parses");
            assert_eq!(export(&again, ExportFormat::Text, s), once);
            let _ = export(&tree, ExportFormat::Dot, s);
        }
    }
});
