#![no_main]

use libfuzzer_sys::fuzz_target;
use pffplan::dynamics::{read_trajectory_csv, write_trajectory_csv};
use pffplan::SystemModel;

fuzz_target!(|data: &[u8]| {
    for model in [SystemModel::double_integrator(), SystemModel::kinematic_car()] {
        if let Ok(t) = read_trajectory_csv(data, &model) {
            let mut out = Vec::new();
            write_trajectory_csv(&t, &mut out).unwrap();
            let back = read_trajectory_csv(out.as_slice(), &model).unwrap();
            assert_eq!(back.states, t.states);
            assert_eq!(back.controls, t.controls);
        }
    }
});
