#![no_main]

use invlab::snapshot::SnapshotHeader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(h) = SnapshotHeader::decode(data) {
        let _ = h.file_len();
    }
});
