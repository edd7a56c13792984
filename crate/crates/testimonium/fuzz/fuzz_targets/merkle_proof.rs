#![no_main]

use libfuzzer_sys::fuzz_target;
use testimonium::chain::{verify_merkle_proof, Hash32, MerkleProof, ProofNode, Side, TransactionId};

// decode an arbitrary proof shape from raw bytes and verify it; the checker
// must never panic and never accept a proof for a mismatched root
fuzz_target!(|data: &[u8]| {
    if data.len() < 96 {
        return;
    }
    let take32 = |off: usize| {
        let mut b = [0u8; 32];
        b.copy_from_slice(&data[off..off + 32]);
        Hash32(b)
    };
    let root = take32(0);
    let leaf = TransactionId(take32(32));
    let mut path = Vec::new();
    let mut off = 64;
    while off + 33 <= data.len() && path.len() < 64 {
        let side = if data[off] & 1 == 0 { Side::Left } else { Side::Right };
        path.push(ProofNode {
            sibling: take32(off + 1),
            side,
        });
        off += 33;
    }
    let proof = MerkleProof { leaf, path };
    let _ = verify_merkle_proof(root, &leaf, &proof);
});
