#![no_main]

use libfuzzer_sys::fuzz_target;
use sturmspec::bands::FrequencySpec;

fuzz_target!(|data: &[u8]| {
    if data.is_empty() {
        return;
    }
    let kappa = u32::from(data[0] % 12);
    let Ok(text) = std::str::from_utf8(&data[1..]) else { return };
    if let Ok(spec) = FrequencySpec::parse_prefix(text, kappa) {
        assert!(spec.kappa() >= 1);
        let joined: Vec<String> = spec.prefix().iter().map(u32::to_string).collect();
        assert_eq!(FrequencySpec::parse_prefix(&joined.join(","), kappa).as_ref(), Ok(&spec));
        let _ = spec.q(spec.n_hat() as i64 + 3);
    }
});
