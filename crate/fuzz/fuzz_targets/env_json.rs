#![no_main]

use libfuzzer_sys::fuzz_target;
use pffplan::environment::Env;

fuzz_target!(|data: &[u8]| {
    if let Ok(env) = Env::read_json(data) {
        let mut out = Vec::new();
        env.write_json(&mut out).unwrap();
        assert_eq!(Env::read_json(out.as_slice()).unwrap(), env);
    }
});
