#![no_main]

use crc::{Crc, CRC_64_XZ};
use invlab::snapshot::Snapshot;
use libfuzzer_sys::fuzz_target;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

fn round_trip(bytes: &[u8]) {
    if let Ok(s) = Snapshot::decode(bytes) {
        assert_eq!(s.encode().expect("decoded snapshot encodes"), bytes);
    }
}

fuzz_target!(|data: &[u8]| {
    round_trip(data);
    // Also treat the input as a body with a valid trailing checksum, so
    // mutations reach the header and payload checks.
    let mut sealed = data.to_vec();
    sealed.extend_from_slice(&CRC64.checksum(data).to_le_bytes());
    round_trip(&sealed);
});
