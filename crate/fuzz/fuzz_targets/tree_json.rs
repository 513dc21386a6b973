#![no_main]

use libfuzzer_sys::fuzz_target;
use pffplan::planner::TreeFile;

fuzz_target!(|data: &[u8]| {
    let _ = TreeFile::read_json(data);
});
