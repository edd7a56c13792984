use sha2::{Digest, Sha256};

use super::{BlockHeader, Hash32};

/// Pluggable stand-in for the source chain's header validation procedure.
///
/// The default predicate checks parent linkage, height continuity, and a
/// keyed digest over `validity_seed`. Minting a header without the key (or
/// deliberately corrupting the seed) produces a header that fails validation,
/// which gives disputes something real to detect.
#[derive(Clone, Debug)]
pub struct HeaderValidator {
    key: Option<[u8; 32]>,
    /// Metered cost of one invocation, in abstract cost units.
    pub validation_cost: u64,
}

pub const DEFAULT_VALIDATION_COST: u64 = 3_000_000;

impl HeaderValidator {
    pub fn keyed(key: [u8; 32]) -> Self {
        HeaderValidator {
            key: Some(key),
            validation_cost: DEFAULT_VALIDATION_COST,
        }
    }

    /// Accepts any header with consistent parent linkage; used when replaying
    /// datasets whose validity key is unknown.
    pub fn permissive() -> Self {
        HeaderValidator {
            key: None,
            validation_cost: DEFAULT_VALIDATION_COST,
        }
    }

    /// The seed a valid child of (`parent_hash`, height `block_height`) must carry.
    pub fn expected_seed(key: &[u8; 32], parent_hash: Hash32, block_height: u64) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(key);
        h.update(parent_hash.as_bytes());
        h.update(block_height.to_be_bytes());
        h.finalize()[..8].to_vec()
    }

    /// Pure and deterministic for fixed inputs. `parent_hash`/`parent_height`
    /// come from the stored parent record, so the check works in both store
    /// modes.
    pub fn is_valid(&self, header: &BlockHeader, parent_hash: Hash32, parent_height: u64) -> bool {
        if header.parent_hash != parent_hash || header.block_height != parent_height + 1 {
            return false;
        }
        match &self.key {
            Some(key) => {
                header.validity_seed
                    == Self::expected_seed(key, header.parent_hash, header.block_height)
            }
            None => true,
        }
    }
}
