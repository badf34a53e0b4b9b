use gpact_core::crypto::Digest;
use gpact_core::merkle::{build_proof, leaf_digest, root_of};
use proptest::prelude::*;
use sha2::{Digest as _, Sha256};

fn h(parts: &[&[u8]]) -> [u8; 32] {
    let mut s = Sha256::new();
    for p in parts {
        s.update(p);
    }
    s.finalize().into()
}

/// Straight recursive construction, duplicating an odd last node per level.
fn naive_root(items: &[Vec<u8>]) -> [u8; 32] {
    if items.is_empty() {
        return [0; 32];
    }
    let mut level: Vec<[u8; 32]> = items.iter().map(|d| h(&[&[0u8], d])).collect();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().unwrap());
        }
        level = level
            .chunks(2)
            .map(|p| h(&[&[1u8], &p[0], &p[1]]))
            .collect();
    }
    level[0]
}

proptest! {
    #[test]
    fn root_matches_naive(items in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..16), 0..20)) {
        prop_assert_eq!(root_of(&items).0, naive_root(&items));
    }

    #[test]
    fn every_proof_verifies_and_binds_its_leaf(
        items in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..8), 1..20),
        pick in any::<prop::sample::Index>(),
    ) {
        let leaves: Vec<Digest> = items.iter().map(|d| leaf_digest(d)).collect();
        let root = root_of(&items);
        let i = pick.index(items.len());
        let proof = build_proof(&leaves, i).unwrap();
        prop_assert!(proof.verify(&root));
        let mut other = proof.clone();
        other.leaf_digest = leaf_digest(b"not a member");
        prop_assert!(!other.verify(&root));
    }
}

#[test]
fn empty_tree_has_zero_root() {
    assert_eq!(root_of::<Vec<u8>>(&[]), Digest::ZERO);
}
