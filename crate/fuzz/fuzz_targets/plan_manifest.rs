#![no_main]

use libfuzzer_sys::fuzz_target;
use pffplan::planner::PlanManifest;

fuzz_target!(|data: &[u8]| {
    let _ = PlanManifest::read_json(data);
});
