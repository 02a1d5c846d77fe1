#![no_main]

use libfuzzer_sys::fuzz_target;
use mlmoments::io::{read_trajectory, write_trajectory};
use mlmoments::moment_bounds::Provenance;

fuzz_target!(|data: &[u8]| {
    if let Ok(traj) = read_trajectory(data, Provenance::Simulated) {
        let mut out = Vec::new();
        write_trajectory(&traj, &mut out).expect("write to memory");
        read_trajectory(out.as_slice(), Provenance::Simulated).expect("written trajectory must read back");
    }
});
