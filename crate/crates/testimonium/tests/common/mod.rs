// not every test binary uses every helper
#![allow(dead_code)]

use testimonium::chain::{hash_header, BlockHeader, ClientId, Hash32, HeaderValidator, MerkleTree, TransactionId};
use testimonium::cost::CostMeter;
use testimonium::relay::{Relay, RelayConfig};
use testimonium::sim::{mint_child, ChainGenConfig, GeneratedChain};

pub const KEY: [u8; 32] = [0x42; 32];

pub fn client(b: u8) -> ClientId {
    ClientId::from_byte(b)
}

pub fn root_of(txs: &[TransactionId]) -> Hash32 {
    MerkleTree::build(txs).unwrap().root()
}

pub fn some_txs(tag: u8) -> Vec<TransactionId> {
    (0..4u8)
        .map(|i| TransactionId(Hash32([tag ^ i.wrapping_mul(31); 32])))
        .collect()
}

pub fn genesis_header() -> BlockHeader {
    BlockHeader {
        parent_hash: Hash32::ZERO,
        block_height: 0,
        merkle_root: root_of(&some_txs(0)),
        difficulty: 100,
        timestamp: 0,
        validity_seed: vec![0u8; 8],
    }
}

/// Fresh relay over [`genesis_header`] with a generously funded default
/// submitter.
pub fn fresh_relay(lock_period: u64, config: RelayConfig) -> Relay {
    let mut relay = Relay::new(
        genesis_header(),
        lock_period,
        config,
        HeaderValidator::keyed(KEY),
        1,
        CostMeter::default(),
    );
    for b in 1..=9u8 {
        relay.ledger_mut().deposit_stake(client(b), 100_000).unwrap();
    }
    relay
}

/// Valid child of the parent identified by (`hash`, `height`).
pub fn valid_child(parent: Hash32, parent_height: u64, difficulty: u64, ts: u64) -> BlockHeader {
    mint_child(parent, parent_height, difficulty, ts, root_of(&some_txs(ts as u8)), Some(&KEY))
}

/// Child failing the validity predicate.
pub fn invalid_child(parent: Hash32, parent_height: u64, difficulty: u64, ts: u64) -> BlockHeader {
    mint_child(parent, parent_height, difficulty, ts, root_of(&some_txs(ts as u8)), None)
}

/// Submits and asserts acceptance, returning the new header's hash.
pub fn accept(relay: &mut Relay, header: &BlockHeader, submitter: ClientId) -> Hash32 {
    assert!(relay.submit_block_header(header, submitter).unwrap());
    hash_header(header)
}

pub fn gen_config(length: usize, branch_probability: f64, seed: u64) -> ChainGenConfig {
    ChainGenConfig {
        length,
        branch_probability,
        random_seed: seed,
        ..Default::default()
    }
}

/// Replays a generated chain into a funded relay, one tick per header.
pub fn replay_into(chain: &GeneratedChain, lock_period: u64, config: RelayConfig) -> Relay {
    let mut relay = Relay::new(
        chain.records[0].header.clone(),
        lock_period,
        config,
        HeaderValidator::keyed(chain.annotations.validator_key),
        1,
        CostMeter::default(),
    );
    let mut funded = std::collections::BTreeSet::new();
    for r in &chain.records {
        if funded.insert(r.submitter_hint) {
            relay
                .ledger_mut()
                .deposit_stake(r.submitter_hint, chain.records.len() as u64 + 1)
                .unwrap();
        }
    }
    for r in chain.records.iter().skip(1) {
        relay.advance_clock(1);
        assert!(relay.submit_block_header(&r.header, r.submitter_hint).unwrap());
    }
    relay
}
