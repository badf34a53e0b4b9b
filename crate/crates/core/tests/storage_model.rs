mod common;

use common::Op;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn storage_matches_reference(ops in common::sequence_strategy()) {
        common::check_against_model(&ops).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn abort_discards_every_provisional_write() {
    let ops = [
        Op::Write(0, 1, None),
        Op::Write(0, 2, Some(0)),
        Op::Write(1, 3, Some(0)),
        Op::ReadIn(0, 0),
        Op::Read(0),
        Op::Signal(false, 0),
        Op::Read(0),
    ];
    common::check_against_model(&ops).unwrap();
}

#[test]
fn foreign_signal_and_write_are_refused() {
    let ops = [
        Op::Write(2, 9, Some(1)),
        Op::Signal(true, 2),
        Op::Write(2, 8, Some(2)),
        Op::Write(2, 8, None),
        Op::Signal(true, 1),
        Op::Signal(true, 1),
    ];
    common::check_against_model(&ops).unwrap();
}
