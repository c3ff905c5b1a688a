//! Trajectory dump decoder: no panics or huge allocations on hostile
//! input, and encoding is a fixed point once a dump has been accepted.

#![no_main]

use gravcollapse::dump::TrajectoryDump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(dump) = TrajectoryDump::decode(data) {
        let bytes = dump.encode().expect("decoded dump re-encodes");
        let again = TrajectoryDump::decode(&bytes).expect("re-encoded dump decodes");
        assert_eq!(again.encode().expect("re-encodes"), bytes);
    }
});
