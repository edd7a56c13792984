use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{
    hash_header, BlockHeader, ClientId, Hash32, HeaderValidator, MerkleTree, TransactionId,
};

use super::SimError;

/// Knobs for the synthetic source-chain generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ChainGenConfig {
    pub length: usize,
    /// Per-step probability of emitting a side header instead of extending
    /// the main chain.
    pub branch_probability: f64,
    /// Maximum fork-point depth below the current tip.
    pub branch_max_depth: usize,
    /// Fraction of side headers minted with a broken validity seed.
    pub invalid_header_rate: f64,
    pub difficulty_min: u64,
    pub difficulty_max: u64,
    pub tx_per_block: usize,
    pub random_seed: u64,
}

impl Default for ChainGenConfig {
    fn default() -> Self {
        ChainGenConfig {
            length: 100,
            branch_probability: 0.02,
            branch_max_depth: 5,
            invalid_header_rate: 0.0,
            difficulty_min: 80,
            difficulty_max: 120,
            tx_per_block: 4,
            random_seed: 1,
        }
    }
}

impl ChainGenConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.length == 0 {
            return Err(SimError::BadConfig("length must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.branch_probability)
            || !(0.0..=1.0).contains(&self.invalid_header_rate)
        {
            return Err(SimError::BadConfig("probabilities must be in [0,1]".into()));
        }
        if self.difficulty_min == 0 || self.difficulty_max < self.difficulty_min {
            return Err(SimError::BadConfig("bad difficulty range".into()));
        }
        Ok(())
    }
}

/// One header of the stream, in submission order.
#[derive(Clone, Debug)]
pub struct ChainRecord {
    pub header: BlockHeader,
    pub hash: Hash32,
    pub submitter_hint: ClientId,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HeaderAnnotation {
    pub is_valid: bool,
    pub on_true_main_chain: bool,
    pub tx_ids: Vec<TransactionId>,
}

/// Ground truth the relay never sees.
#[derive(Clone, Debug, Default)]
pub struct ChainAnnotations {
    pub validator_key: [u8; 32],
    pub per_header: BTreeMap<Hash32, HeaderAnnotation>,
    /// Headers with two or more children in the generated topology.
    pub junctions: BTreeSet<Hash32>,
    pub true_head: Hash32,
}

#[derive(Clone, Debug)]
pub struct GeneratedChain {
    pub records: Vec<ChainRecord>,
    pub annotations: ChainAnnotations,
}

fn random_txs(rng: &mut ChaCha20Rng, count: usize) -> Vec<TransactionId> {
    (0..count.max(1))
        .map(|_| {
            let mut id = [0u8; 32];
            rng.fill_bytes(&mut id);
            TransactionId(Hash32(id))
        })
        .collect()
}

/// Builds a child header of (`parent_hash`, `parent_height`). A `key` of
/// `None` produces a deliberately invalid seed.
pub fn mint_child(
    parent_hash: Hash32,
    parent_height: u64,
    difficulty: u64,
    timestamp: u64,
    merkle_root: Hash32,
    key: Option<&[u8; 32]>,
) -> BlockHeader {
    let height = parent_height + 1;
    let validity_seed = match key {
        Some(k) => HeaderValidator::expected_seed(k, parent_hash, height),
        None => vec![0xde, 0xad, 0xbe, 0xef, 0, 0, 0, 0],
    };
    BlockHeader {
        parent_hash,
        block_height: height,
        merkle_root,
        difficulty,
        timestamp,
        validity_seed,
    }
}

/// Deterministic for a fixed seed. Side branches are single headers (uncle
/// style) whose difficulty stays strictly below the competing main-chain
/// child, so the true main chain is heaviest at every point of the stream.
pub fn generate_chain(config: &ChainGenConfig) -> Result<GeneratedChain, SimError> {
    config.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.random_seed);
    let mut validator_key = [0u8; 32];
    rng.fill_bytes(&mut validator_key);

    let submitters: Vec<ClientId> = (1..=4u8).map(ClientId::from_byte).collect();
    let mut pick_submitter = {
        let mut i = 0usize;
        move || {
            i += 1;
            submitters[i % 4]
        }
    };

    let mut records: Vec<ChainRecord> = Vec::with_capacity(config.length);
    let mut per_header: BTreeMap<Hash32, HeaderAnnotation> = BTreeMap::new();
    let mut valid_flags: Vec<bool> = Vec::with_capacity(config.length);
    // indices into `records` forming the true main chain, genesis first
    let mut main_path: Vec<usize> = Vec::new();

    let genesis_txs = random_txs(&mut rng, config.tx_per_block);
    let genesis_root = MerkleTree::build(&genesis_txs).expect("non-empty").root();
    let genesis = BlockHeader {
        parent_hash: Hash32::ZERO,
        block_height: 0,
        merkle_root: genesis_root,
        difficulty: (config.difficulty_min + config.difficulty_max) / 2,
        timestamp: 0,
        validity_seed: vec![0u8; 8],
    };
    let genesis_hash = hash_header(&genesis);
    records.push(ChainRecord {
        header: genesis,
        hash: genesis_hash,
        submitter_hint: ClientId::SYSTEM,
    });
    per_header.insert(
        genesis_hash,
        HeaderAnnotation {
            is_valid: true,
            on_true_main_chain: true,
            tx_ids: genesis_txs,
        },
    );
    valid_flags.push(true);
    main_path.push(0);

    for step in 1..config.length {
        let fork_roll: f64 = rng.gen();
        let can_fork = main_path.len() >= 2 && config.branch_max_depth >= 1;
        let txs = random_txs(&mut rng, config.tx_per_block);
        let root = MerkleTree::build(&txs).expect("non-empty").root();

        let (record, is_valid, on_main) = if fork_roll < config.branch_probability && can_fork {
            // side header: fork 1..=branch_max_depth below the tip
            let depth = rng.gen_range(1..=config.branch_max_depth.min(main_path.len() - 1));
            let parent_idx = main_path[main_path.len() - 1 - depth];
            let competing_idx = main_path[main_path.len() - depth];
            let cap = records[competing_idx]
                .header
                .difficulty
                .saturating_sub(1)
                .max(1);
            let difficulty = rng.gen_range(1..=cap);
            let invalid = rng.gen::<f64>() < config.invalid_header_rate;
            let parent = &records[parent_idx];
            let header = mint_child(
                parent.hash,
                parent.header.block_height,
                difficulty,
                step as u64,
                root,
                if invalid { None } else { Some(&validator_key) },
            );
            (header, !invalid, false)
        } else {
            let tip = &records[*main_path.last().unwrap()];
            let difficulty = rng.gen_range(config.difficulty_min..=config.difficulty_max);
            let header = mint_child(
                tip.hash,
                tip.header.block_height,
                difficulty,
                step as u64,
                root,
                Some(&validator_key),
            );
            (header, true, true)
        };

        let hash = hash_header(&record);
        records.push(ChainRecord {
            header: record,
            hash,
            submitter_hint: pick_submitter(),
        });
        per_header.insert(
            hash,
            HeaderAnnotation {
                is_valid,
                on_true_main_chain: on_main,
                tx_ids: txs,
            },
        );
        valid_flags.push(is_valid);
        if on_main {
            main_path.push(records.len() - 1);
        }
    }

    // junctions: parents with two or more children in the final topology
    let mut child_count: BTreeMap<Hash32, usize> = BTreeMap::new();
    for r in records.iter().skip(1) {
        *child_count.entry(r.header.parent_hash).or_insert(0) += 1;
    }
    let junctions = child_count
        .into_iter()
        .filter(|(_, n)| *n >= 2)
        .map(|(h, _)| h)
        .collect();

    let true_head = records[*main_path.last().unwrap()].hash;
    Ok(GeneratedChain {
        records,
        annotations: ChainAnnotations {
            validator_key,
            per_header,
            junctions,
            true_head,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_branch_probability_yields_single_chain() {
        let chain = generate_chain(&ChainGenConfig {
            length: 50,
            branch_probability: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(chain.records.len(), 50);
        assert!(chain.annotations.junctions.is_empty());
        assert!(chain
            .annotations
            .per_header
            .values()
            .all(|a| a.on_true_main_chain));
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let config = ChainGenConfig {
            length: 200,
            branch_probability: 0.1,
            invalid_header_rate: 0.2,
            random_seed: 99,
            ..Default::default()
        };
        let a = generate_chain(&config).unwrap();
        let b = generate_chain(&config).unwrap();
        let hashes = |c: &GeneratedChain| c.records.iter().map(|r| r.hash).collect::<Vec<_>>();
        assert_eq!(hashes(&a), hashes(&b));
        assert_eq!(a.annotations.junctions, b.annotations.junctions);
    }

    #[test]
    fn invalid_headers_fail_the_validity_predicate() {
        let chain = generate_chain(&ChainGenConfig {
            length: 400,
            branch_probability: 0.2,
            invalid_header_rate: 0.5,
            random_seed: 3,
            ..Default::default()
        })
        .unwrap();
        let validator = HeaderValidator::keyed(chain.annotations.validator_key);
        let by_hash: BTreeMap<Hash32, &ChainRecord> =
            chain.records.iter().map(|r| (r.hash, r)).collect();
        let mut saw_invalid = false;
        for r in chain.records.iter().skip(1) {
            let parent = by_hash[&r.header.parent_hash];
            let verdict = validator.is_valid(&r.header, parent.hash, parent.header.block_height);
            let annotated = chain.annotations.per_header[&r.hash].is_valid;
            assert_eq!(verdict, annotated);
            saw_invalid |= !annotated;
        }
        assert!(saw_invalid);
    }

    #[test]
    fn junction_count_tracks_branch_probability() {
        // statistical check across seeds
        let p = 0.02;
        let length = 10_000;
        let mut total = 0usize;
        let seeds = 10;
        for seed in 0..seeds {
            let chain = generate_chain(&ChainGenConfig {
                length,
                branch_probability: p,
                random_seed: seed,
                ..Default::default()
            })
            .unwrap();
            total += chain.annotations.junctions.len();
        }
        let mean = total as f64 / seeds as f64;
        let expected = length as f64 * p;
        assert!(
            (mean - expected).abs() <= 0.2 * expected,
            "mean junction count {mean} outside 20% of {expected}"
        );
    }
}
