use factedit_core::harness::{reverse_consistency_fuzz, REVERSE_TOLERANCE};
use factedit_core::KernelMutation;

#[test]
fn reverse_logprobs_match_enumerated_reverse_moves() {
    let r = reverse_consistency_fuzz(2_000, 3, None).unwrap();
    assert!(r.proposals > 1_500, "{r:?}");
    assert!(r.passed(REVERSE_TOLERANCE), "{r:?}");
}

#[test]
fn corrupted_reverse_is_caught() {
    let r = reverse_consistency_fuzz(500, 3, Some(KernelMutation::CorruptReverse)).unwrap();
    assert!(!r.passed(REVERSE_TOLERANCE), "{r:?}");
    assert!((r.max_error - 0.1).abs() < 1e-9, "{r:?}");
}

#[test]
fn stale_reverse_positions_are_caught() {
    let r = reverse_consistency_fuzz(500, 3, Some(KernelMutation::StaleReverseP1)).unwrap();
    assert!(!r.passed(REVERSE_TOLERANCE), "{r:?}");
}
