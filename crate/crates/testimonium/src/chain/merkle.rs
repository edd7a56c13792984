use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChainError, Hash32};

/// Opaque 32-byte transaction identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct TransactionId(pub Hash32);

/// Which side of the running hash the sibling sits on.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ProofNode {
    pub sibling: Hash32,
    pub side: Side,
}

/// Path from a leaf up to the root, leaf excluded, root excluded.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf: TransactionId,
    pub path: Vec<ProofNode>,
}

fn leaf_hash(tx: &TransactionId) -> Hash32 {
    let mut h = Sha256::new();
    h.update([0x00]);
    h.update(tx.0.as_bytes());
    Hash32(h.finalize().into())
}

fn node_hash(left: &Hash32, right: &Hash32) -> Hash32 {
    let mut h = Sha256::new();
    h.update(left.as_bytes());
    h.update(right.as_bytes());
    Hash32(h.finalize().into())
}

/// Binary Merkle tree over an ordered transaction list. Odd layers duplicate
/// the last node.
#[derive(Clone, Debug)]
pub struct MerkleTree {
    leaves: Vec<TransactionId>,
    // levels[0] = leaf hashes, last level = [root]
    levels: Vec<Vec<Hash32>>,
}

impl MerkleTree {
    pub fn build(tx_ids: &[TransactionId]) -> Result<Self, ChainError> {
        if tx_ids.is_empty() {
            return Err(ChainError::EmptyBlock);
        }
        let mut levels: Vec<Vec<Hash32>> = vec![tx_ids.iter().map(leaf_hash).collect()];
        while levels.last().unwrap().len() > 1 {
            let prev = levels.last().unwrap();
            let mut next = Vec::with_capacity((prev.len() + 1) / 2);
            for pair in prev.chunks(2) {
                let left = &pair[0];
                let right = pair.get(1).unwrap_or(left);
                next.push(node_hash(left, right));
            }
            levels.push(next);
        }
        Ok(MerkleTree {
            leaves: tx_ids.to_vec(),
            levels,
        })
    }

    pub fn root(&self) -> Hash32 {
        self.levels.last().unwrap()[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Proof for the first leaf equal to `tx`.
    pub fn prove(&self, tx: &TransactionId) -> Result<MerkleProof, ChainError> {
        let mut index = self
            .leaves
            .iter()
            .position(|l| l == tx)
            .ok_or(ChainError::NotInBlock)?;
        let mut path = Vec::new();
        for level in &self.levels[..self.levels.len() - 1] {
            let (sibling_index, side) = if index % 2 == 0 {
                (index + 1, Side::Right)
            } else {
                (index - 1, Side::Left)
            };
            // duplication rule: a lone last node pairs with itself
            let sibling = *level.get(sibling_index).unwrap_or(&level[index]);
            path.push(ProofNode { sibling, side });
            index /= 2;
        }
        Ok(MerkleProof { leaf: *tx, path })
    }
}

/// Folds the leaf up through the path and compares against `root`.
pub fn verify_merkle_proof(root: Hash32, tx: &TransactionId, proof: &MerkleProof) -> bool {
    if proof.leaf != *tx {
        return false;
    }
    let mut acc = leaf_hash(tx);
    for node in &proof.path {
        acc = match node.side {
            Side::Left => node_hash(&node.sibling, &acc),
            Side::Right => node_hash(&acc, &node.sibling),
        };
    }
    acc == root
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(b: u8) -> TransactionId {
        TransactionId(Hash32([b; 32]))
    }

    /// Independent recursive oracle, kept separate from the level-based
    /// builder it checks.
    fn oracle_root(ids: &[TransactionId]) -> Hash32 {
        fn rec(hashes: &[Hash32]) -> Hash32 {
            if hashes.len() == 1 {
                return hashes[0];
            }
            let mut next = Vec::new();
            for pair in hashes.chunks(2) {
                let l = pair[0];
                let r = *pair.get(1).unwrap_or(&pair[0]);
                next.push(node_hash(&l, &r));
            }
            rec(&next)
        }
        rec(&ids.iter().map(leaf_hash).collect::<Vec<_>>())
    }

    #[test]
    fn empty_list_is_rejected() {
        assert_eq!(MerkleTree::build(&[]).unwrap_err(), ChainError::EmptyBlock);
    }

    #[test]
    fn single_leaf_root_is_leaf_hash() {
        let t = tx(0x11);
        let tree = MerkleTree::build(&[t]).unwrap();
        assert_eq!(tree.root(), leaf_hash(&t));
        // frozen oracle value
        assert_eq!(
            tree.root().to_string(),
            "4635e1fa62a599a7880a8d14a56f720a1d40f6e5448ab5a5e39bedc8bd87fa8e"
        );
        // one-leaf proof has an empty path
        let proof = tree.prove(&t).unwrap();
        assert!(proof.path.is_empty());
        assert!(verify_merkle_proof(tree.root(), &t, &proof));
    }

    #[test]
    fn two_leaf_root_matches_hand_computation() {
        let tree = MerkleTree::build(&[tx(0x11), tx(0x22)]).unwrap();
        assert_eq!(
            tree.root().to_string(),
            "88d8cd060e8ca8523610c9b40bfa43bc61298f28002f50034052661d8c39f459"
        );
    }

    #[test]
    fn three_leaves_duplicate_the_last() {
        let ids = [tx(0x11), tx(0x22), tx(0x33)];
        let tree = MerkleTree::build(&ids).unwrap();
        assert_eq!(tree.root(), oracle_root(&ids));
        assert_eq!(
            tree.root().to_string(),
            "e576730700bbdf9ca633e7ec5ff183feaba78bf1f1915a0185649dbe3c8f01e9"
        );
    }

    #[test]
    fn four_leaf_proof_has_length_two() {
        let ids = [tx(1), tx(2), tx(3), tx(4)];
        let tree = MerkleTree::build(&ids).unwrap();
        let proof = tree.prove(&ids[1]).unwrap();
        assert_eq!(proof.path.len(), 2);
        assert!(verify_merkle_proof(tree.root(), &ids[1], &proof));
    }

    #[test]
    fn every_leaf_of_a_16_leaf_tree_verifies() {
        let ids: Vec<_> = (0..16u8).map(tx).collect();
        let tree = MerkleTree::build(&ids).unwrap();
        for id in &ids {
            let proof = tree.prove(id).unwrap();
            assert!(verify_merkle_proof(tree.root(), id, &proof));
        }
    }

    #[test]
    fn absent_leaf_yields_not_in_block() {
        let tree = MerkleTree::build(&[tx(1), tx(2)]).unwrap();
        assert_eq!(tree.prove(&tx(9)).unwrap_err(), ChainError::NotInBlock);
    }

    #[test]
    fn single_bit_mutations_all_fail() {
        let ids: Vec<_> = (0..5u8).map(tx).collect();
        let tree = MerkleTree::build(&ids).unwrap();
        let proof = tree.prove(&ids[2]).unwrap();
        assert!(verify_merkle_proof(tree.root(), &ids[2], &proof));
        for node_idx in 0..proof.path.len() {
            for byte in 0..32 {
                for bit in 0..8 {
                    let mut mutated = proof.clone();
                    mutated.path[node_idx].sibling.0[byte] ^= 1 << bit;
                    assert!(!verify_merkle_proof(tree.root(), &ids[2], &mutated));
                }
            }
        }
        // correct proof against a different root
        assert!(!verify_merkle_proof(Hash32([0xee; 32]), &ids[2], &proof));
        // non-member leaf with a stolen proof
        assert!(!verify_merkle_proof(tree.root(), &tx(9), &proof));
    }
}
