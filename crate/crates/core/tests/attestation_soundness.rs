mod common;

use common::{baseline, soundness_case, CaseKind, CASE_KINDS};
use gpact_core::attestation::{AttestationMode, EventProof};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn no_mutation_kind_is_ever_accepted() {
    let direct = baseline(AttestationMode::Direct);
    let header = baseline(AttestationMode::Header);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in CASE_KINDS {
        for _ in 0..300 {
            assert!(
                !soundness_case(&direct, &header, kind, &mut rng),
                "{kind:?} accepted"
            );
        }
    }
}

/// The mutations above start from a quorum that does verify.
#[test]
fn exact_quorum_is_accepted() {
    let direct = baseline(AttestationMode::Direct);
    for (dest, att) in &direct.valid {
        let mut att = att.clone();
        let threshold = direct
            .sim
            .validators(att.source_chain)
            .unwrap()
            .set
            .threshold as usize;
        if let EventProof::ThresholdSignatures(sigs) = &mut att.proof {
            sigs.truncate(threshold);
        }
        assert!(direct.verify(*dest, &att));
    }
}

#[test]
fn header_baseline_uses_relayed_headers() {
    let header = baseline(AttestationMode::Header);
    assert!(header
        .valid
        .iter()
        .all(|(_, a)| matches!(a.proof, EventProof::HeaderProof { .. })));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(!soundness_case(
        &baseline(AttestationMode::Direct),
        &header,
        CaseKind::HeaderNotRelayed,
        &mut rng
    ));
}
