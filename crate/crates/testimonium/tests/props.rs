mod common;

use common::*;
use proptest::prelude::*;
use testimonium::chain::{
    decode_header, encode_header, hash_header, verify_merkle_proof, BlockHeader, Hash32,
    MerkleTree, TransactionId,
};
use testimonium::relay::RelayConfig;

fn arb_header() -> impl Strategy<Value = BlockHeader> {
    (
        any::<[u8; 32]>(),
        any::<u64>(),
        any::<[u8; 32]>(),
        any::<u64>(),
        any::<u64>(),
        proptest::collection::vec(any::<u8>(), 0..40),
    )
        .prop_map(|(p, h, m, d, t, seed)| BlockHeader {
            parent_hash: Hash32(p),
            block_height: h,
            merkle_root: Hash32(m),
            difficulty: d,
            timestamp: t,
            validity_seed: seed,
        })
}

proptest! {
    #[test]
    fn header_encoding_round_trips(header in arb_header()) {
        let bytes = encode_header(&header);
        let decoded = decode_header(&bytes).unwrap();
        prop_assert_eq!(&decoded, &header);
        prop_assert_eq!(hash_header(&decoded), hash_header(&header));
    }

    #[test]
    fn truncated_encodings_never_decode(header in arb_header(), cut in 1usize..20) {
        let bytes = encode_header(&header);
        let cut = cut.min(bytes.len());
        prop_assert!(decode_header(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn merkle_proofs_verify_for_every_leaf(
        seeds in proptest::collection::vec(any::<[u8; 32]>(), 1..48),
        pick in any::<prop::sample::Index>(),
    ) {
        let leaves: Vec<TransactionId> =
            seeds.iter().map(|s| TransactionId(Hash32(*s))).collect();
        let tree = MerkleTree::build(&leaves).unwrap();
        let target = leaves[pick.index(leaves.len())];
        let proof = tree.prove(&target).unwrap();
        prop_assert!(verify_merkle_proof(tree.root(), &target, &proof));
    }

    #[test]
    fn merkle_proofs_bind_to_their_leaf(
        seeds in proptest::collection::vec(any::<[u8; 32]>(), 2..32),
        pick in any::<prop::sample::Index>(),
        other in any::<[u8; 32]>(),
    ) {
        let leaves: Vec<TransactionId> =
            seeds.iter().map(|s| TransactionId(Hash32(*s))).collect();
        let tree = MerkleTree::build(&leaves).unwrap();
        let target = leaves[pick.index(leaves.len())];
        let proof = tree.prove(&target).unwrap();
        let fake = TransactionId(Hash32(other));
        if fake != target {
            prop_assert!(!verify_merkle_proof(tree.root(), &fake, &proof));
        }
    }
}

/// Driver op for the stateful relay property below.
#[derive(Clone, Debug)]
enum Op {
    /// Extend the header at index (i % stored), valid or not.
    Extend { pick: usize, difficulty: u64, valid: bool },
    Tick,
    /// Dispute the header at index (i % stored).
    Dispute { pick: usize },
}

fn arb_ops() -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(
        prop_oneof![
            6 => (any::<usize>(), 1u64..200, proptest::bool::weighted(0.8))
                .prop_map(|(pick, difficulty, valid)| Op::Extend { pick, difficulty, valid }),
            2 => Just(Op::Tick),
            2 => any::<usize>().prop_map(|pick| Op::Dispute { pick }),
        ],
        1..120,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Whatever the op sequence, the relay keeps its structural invariants
    /// and the ledger conserves units.
    #[test]
    fn random_op_sequences_preserve_invariants(ops in arb_ops()) {
        let mut relay = fresh_relay(4, RelayConfig::standard());
        let deposited = relay.ledger().total_units();
        let mut ts = 0u64;
        for op in ops {
            match op {
                Op::Extend { pick, difficulty, valid } => {
                    ts += 1;
                    let stored: Vec<Hash32> = relay.stored_hashes().collect();
                    let parent = stored[pick % stored.len()];
                    let height = relay.header_record(parent).unwrap().block_height();
                    let header = if valid {
                        valid_child(parent, height, difficulty, ts)
                    } else {
                        invalid_child(parent, height, difficulty, ts)
                    };
                    relay.submit_block_header(&header, client((pick % 9) as u8 + 1)).unwrap();
                }
                Op::Tick => relay.advance_clock(1),
                Op::Dispute { pick } => {
                    let stored: Vec<Hash32> = relay.stored_hashes().collect();
                    let target = stored[pick % stored.len()];
                    if target != relay.genesis_hash() {
                        relay.dispute_header(target, client(9), None).unwrap();
                    }
                }
            }
            relay.check_integrity().map_err(|e| {
                TestCaseError::fail(format!("integrity violated: {e}"))
            })?;
            prop_assert_eq!(relay.ledger().total_units(), deposited);
        }
    }
}
