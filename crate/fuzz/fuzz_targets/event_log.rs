#![no_main]

use binfleet_core::eventlog::{parse_log, to_bytes};
use binfleet_core::monitoring::{replay, replay_events};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((header, events)) = parse_log(data) else {
        return;
    };
    // a parsed log re-serializes to one that replays identically
    let again = to_bytes(&header, &events);
    match (replay(data), replay_events(&events)) {
        (Ok(a), Ok(b)) => {
            assert_eq!(a, b);
            assert_eq!(replay(&again).unwrap(), a);
        }
        (Err(_), Err(_)) => {}
        (a, b) => panic!("replay paths disagree: {:?} vs {:?}", a.is_ok(), b.is_ok()),
    }
});
