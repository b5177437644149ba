#![no_main]

use libfuzzer_sys::fuzz_target;
use sturmspec::bands::FrequencySpec;
use sturmspec::coding::Word;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let spec = FrequencySpec::new(vec![0, 2, 1], 1).expect("fixed spec");
    for (w, rooted) in [(Word::parse_rooted(text, &spec), true), (Word::parse_free(text, 2), false)] {
        if let Ok(w) = w {
            // printing and reparsing must be the identity
            let again = if rooted {
                Word::parse_rooted(&w.to_string(), &spec)
            } else {
                Word::parse_free(&w.to_string(), 2)
            };
            assert_eq!(again.as_ref(), Ok(&w));
        }
    }
});
