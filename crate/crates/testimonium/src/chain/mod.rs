//! Source-chain model: headers, hashing, Merkle membership proofs, and the
//! pluggable header-validity predicate.

mod header;
mod merkle;
mod validator;

pub use header::{decode_header, encode_header, hash_header, BlockHeader, ClientId, Hash32};
pub use merkle::{verify_merkle_proof, MerkleProof, MerkleTree, ProofNode, Side, TransactionId};
pub use validator::HeaderValidator;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("cannot build a Merkle tree over an empty transaction list")]
    EmptyBlock,
    #[error("transaction is not a leaf of this block's Merkle tree")]
    NotInBlock,
    #[error("malformed header encoding: {0}")]
    Malformed(&'static str),
}
