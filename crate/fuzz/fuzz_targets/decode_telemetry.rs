#![no_main]

use binfleet_core::telemetry::{decode_line, encode, encode_ack, WireLine};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // anything that decodes must re-encode to a line that decodes the same
    match decode_line(data) {
        Ok(WireLine::Reading(m)) => assert_eq!(decode_line(&encode(&m)).unwrap(), WireLine::Reading(m)),
        Ok(WireLine::Ack(a)) => assert_eq!(decode_line(&encode_ack(&a)).unwrap(), WireLine::Ack(a)),
        Err(_) => {}
    }
});
