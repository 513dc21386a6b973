#![no_main]

use libfuzzer_sys::fuzz_target;
use pffplan::learning::Mlp;
use pffplan::StateVec;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Mlp::read_json(data) {
        let y = m.predict(&StateVec::new(0.5, -0.5, 0.1, 1.0));
        assert_eq!(y.len(), m.output_dim());
    }
});
