//! Binary Merkle tree over receipt encodings.
//!
//! Leaves are `H(0x00 || data)`, interior nodes `H(0x01 || left || right)`.
//! A level with an odd number of nodes pairs its last node with itself.
//! The root of an empty list is the all-zero digest.

use serde::Serialize;

use crate::codec::{CodecError, Decode, Decoder, Encode, Encoder};
use crate::crypto::{hash_parts, Digest};

const LEAF_PREFIX: &[u8] = &[0x00];
const NODE_PREFIX: &[u8] = &[0x01];

/// Which side of the running hash a sibling sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MerkleProof {
    pub leaf_digest: Digest,
    pub siblings: Vec<(Side, Digest)>,
}

pub fn leaf_digest(data: &[u8]) -> Digest {
    hash_parts(&[LEAF_PREFIX, data])
}

pub fn node_digest(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[NODE_PREFIX, &left.0, &right.0])
}

fn next_level(level: &[Digest]) -> Vec<Digest> {
    level
        .chunks(2)
        .map(|pair| match pair {
            [l, r] => node_digest(l, r),
            [l] => node_digest(l, l),
            _ => unreachable!(),
        })
        .collect()
}

/// Root over pre-hashed leaves.
pub fn root_from_leaves(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return Digest::ZERO;
    }
    let mut level = leaves.to_vec();
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

pub fn root_of<T: AsRef<[u8]>>(items: &[T]) -> Digest {
    let leaves: Vec<Digest> = items.iter().map(|i| leaf_digest(i.as_ref())).collect();
    root_from_leaves(&leaves)
}

/// Sibling path for `index`, or `None` when the index is out of range.
pub fn build_proof(leaves: &[Digest], index: usize) -> Option<MerkleProof> {
    if index >= leaves.len() {
        return None;
    }
    let mut siblings = Vec::new();
    let mut level = leaves.to_vec();
    let mut idx = index;
    while level.len() > 1 {
        let sibling = if idx.is_multiple_of(2) {
            (Side::Right, *level.get(idx + 1).unwrap_or(&level[idx]))
        } else {
            (Side::Left, level[idx - 1])
        };
        siblings.push(sibling);
        level = next_level(&level);
        idx /= 2;
    }
    Some(MerkleProof {
        leaf_digest: leaves[index],
        siblings,
    })
}

impl MerkleProof {
    pub fn computed_root(&self) -> Digest {
        self.siblings
            .iter()
            .fold(self.leaf_digest, |acc, (side, sib)| match side {
                Side::Left => node_digest(sib, &acc),
                Side::Right => node_digest(&acc, sib),
            })
    }

    pub fn verify(&self, root: &Digest) -> bool {
        self.computed_root() == *root
    }
}

impl Encode for MerkleProof {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.digest(&self.leaf_digest);
        enc.u32(self.siblings.len() as u32);
        for (side, d) in &self.siblings {
            enc.u8(match side {
                Side::Left => 0,
                Side::Right => 1,
            });
            enc.digest(d);
        }
    }
}

impl Decode for MerkleProof {
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let leaf_digest = dec.digest()?;
        let n = dec.u32()? as usize;
        let mut siblings = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let side = match dec.u8()? {
                0 => Side::Left,
                1 => Side::Right,
                tag => return Err(CodecError::InvalidTag { ty: "Side", tag }),
            };
            siblings.push((side, dec.digest()?));
        }
        Ok(Self {
            leaf_digest,
            siblings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Level-by-level builder written against the raw hash, independent of
    /// `node_digest`/`next_level`.
    fn reference_root(items: &[Vec<u8>]) -> Digest {
        fn level_up(level: Vec<Digest>) -> Vec<Digest> {
            let mut out = Vec::new();
            let mut i = 0;
            while i < level.len() {
                let l = level[i];
                let r = if i + 1 < level.len() {
                    level[i + 1]
                } else {
                    level[i]
                };
                out.push(hash_parts(&[&[1u8], &l.0, &r.0]));
                i += 2;
            }
            out
        }
        if items.is_empty() {
            return Digest::ZERO;
        }
        let mut level: Vec<Digest> = items.iter().map(|d| hash_parts(&[&[0u8], d])).collect();
        while level.len() > 1 {
            level = level_up(level);
        }
        level[0]
    }

    fn items(n: usize) -> Vec<Vec<u8>> {
        (0..n)
            .map(|i| format!("receipt-{i}").into_bytes())
            .collect()
    }

    #[test]
    fn single_leaf_proof_is_empty_and_leaf_is_root() {
        let it = items(1);
        let leaves = vec![leaf_digest(&it[0])];
        let proof = build_proof(&leaves, 0).unwrap();
        assert!(proof.siblings.is_empty());
        assert_eq!(proof.leaf_digest, root_of(&it));
        assert!(proof.verify(&root_of(&it)));
    }

    #[test]
    fn four_leaves_index_two() {
        let it = items(4);
        let leaves: Vec<_> = it.iter().map(|i| leaf_digest(i)).collect();
        let proof = build_proof(&leaves, 2).unwrap();
        assert_eq!(proof.siblings.len(), 2);
        assert_eq!(proof.siblings[0], (Side::Right, leaves[3]));
        let expected_root = reference_root(&it);
        assert_eq!(root_of(&it), expected_root);
        assert!(proof.verify(&expected_root));
    }

    #[test]
    fn tampered_leaf_fails() {
        let it = items(4);
        let root = root_of(&it);
        let leaves: Vec<_> = it.iter().map(|i| leaf_digest(i)).collect();
        let mut proof = build_proof(&leaves, 1).unwrap();
        proof.leaf_digest = leaf_digest(b"receipt-X");
        assert!(!proof.verify(&root));
    }

    #[test]
    fn out_of_range_index() {
        assert!(build_proof(&[leaf_digest(b"a")], 1).is_none());
        assert!(build_proof(&[], 0).is_none());
    }

    #[test]
    fn empty_root_is_zero() {
        assert_eq!(root_of::<Vec<u8>>(&[]), Digest::ZERO);
    }

    proptest! {
        #[test]
        fn root_matches_reference_and_all_proofs_verify(n in 1usize..40) {
            let it = items(n);
            let root = root_of(&it);
            prop_assert_eq!(root, reference_root(&it));
            let leaves: Vec<_> = it.iter().map(|i| leaf_digest(i)).collect();
            for i in 0..n {
                prop_assert!(build_proof(&leaves, i).unwrap().verify(&root));
            }
        }

        #[test]
        fn single_bit_flip_in_path_fails(n in 2usize..20, pick in any::<usize>(), bit in 0usize..256) {
            let it = items(n);
            let root = root_of(&it);
            let leaves: Vec<_> = it.iter().map(|i| leaf_digest(i)).collect();
            let mut proof = build_proof(&leaves, pick % n).unwrap();
            let s = (pick / n) % proof.siblings.len();
            proof.siblings[s].1 .0[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(!proof.verify(&root));
        }
    }
}
