#![no_main]

use binfleet_core::telemetry::{decode, decode_ack};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let ack = decode_ack(data);
    let reading = decode(data);
    // a line is at most one of the two
    assert!(!(ack.is_ok() && reading.is_ok()));
});
