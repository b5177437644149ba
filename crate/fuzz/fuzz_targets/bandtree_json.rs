#![no_main]

use libfuzzer_sys::fuzz_target;
use sturmspec::bands::BandTree;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tree) = BandTree::from_json(text) {
        // anything accepted must survive a round trip unchanged
        let back = BandTree::from_json(&tree.to_json()).expect("re-encoded tree decodes");
        assert_eq!(back, tree);
    }
});
