#![no_main]

use libfuzzer_sys::fuzz_target;
use pffplan::benchmark::{read_events_csv, read_summary_csv};

fuzz_target!(|data: &[u8]| {
    let _ = read_events_csv(data);
    let _ = read_summary_csv(data);
});
