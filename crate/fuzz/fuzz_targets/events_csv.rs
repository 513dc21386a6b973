#![no_main]

use libfuzzer_sys::fuzz_target;
use pffplan::planner::{read_events_csv, write_events_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(ev) = read_events_csv(data) {
        let mut out = Vec::new();
        write_events_csv(&ev, &mut out).unwrap();
        assert_eq!(read_events_csv(out.as_slice()).unwrap(), ev);
    }
});
