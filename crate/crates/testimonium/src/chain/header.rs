use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::ChainError;

/// 32-byte identity hash. Serializes as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn from_hex(s: &str) -> Result<Self, ChainError> {
        let bytes = hex::decode(s).map_err(|_| ChainError::Malformed("bad hex"))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| ChainError::Malformed("hash must be 32 bytes"))?;
        Ok(Hash32(arr))
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", hex::encode(&self.0[..6]))
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash32::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Opaque 20-byte client address. Equality by bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ClientId(pub [u8; 20]);

impl ClientId {
    /// Reserved id used for the genesis header's submitter slot.
    pub const SYSTEM: ClientId = ClientId([0u8; 20]);

    pub fn from_byte(b: u8) -> Self {
        ClientId([b; 20])
    }
}

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

impl fmt::Debug for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClientId({})", hex::encode(&self.0[..4]))
    }
}

impl Serialize for ClientId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for ClientId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 20] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("client id must be 20 bytes"))?;
        Ok(ClientId(arr))
    }
}

/// A source-chain block header, the unit replicated by the relay.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockHeader {
    pub parent_hash: Hash32,
    pub block_height: u64,
    pub merkle_root: Hash32,
    /// Work units contributed by this block; drives the fork choice.
    pub difficulty: u64,
    /// Logical ticks, not wall-clock time.
    pub timestamp: u64,
    /// Opaque bytes consumed by the validity predicate.
    #[serde(with = "hex_bytes")]
    pub validity_seed: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

/// Canonical byte encoding: fixed field order, big-endian integers,
/// length-prefixed seed. Stable across runs; the hashing preimage and the
/// snapshot record format.
pub fn encode_header(header: &BlockHeader) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 + 32 + 8 + 8 + 4 + header.validity_seed.len());
    out.extend_from_slice(header.parent_hash.as_bytes());
    out.extend_from_slice(&header.block_height.to_be_bytes());
    out.extend_from_slice(header.merkle_root.as_bytes());
    out.extend_from_slice(&header.difficulty.to_be_bytes());
    out.extend_from_slice(&header.timestamp.to_be_bytes());
    out.extend_from_slice(&(header.validity_seed.len() as u32).to_be_bytes());
    out.extend_from_slice(&header.validity_seed);
    out
}

/// Inverse of [`encode_header`]. Rejects truncated input and trailing bytes.
pub fn decode_header(bytes: &[u8]) -> Result<BlockHeader, ChainError> {
    const FIXED: usize = 32 + 8 + 32 + 8 + 8 + 4;
    if bytes.len() < FIXED {
        return Err(ChainError::Malformed("truncated header"));
    }
    let mut parent = [0u8; 32];
    parent.copy_from_slice(&bytes[0..32]);
    let block_height = u64::from_be_bytes(bytes[32..40].try_into().unwrap());
    let mut root = [0u8; 32];
    root.copy_from_slice(&bytes[40..72]);
    let difficulty = u64::from_be_bytes(bytes[72..80].try_into().unwrap());
    let timestamp = u64::from_be_bytes(bytes[80..88].try_into().unwrap());
    let seed_len = u32::from_be_bytes(bytes[88..92].try_into().unwrap()) as usize;
    if bytes.len() != FIXED + seed_len {
        return Err(ChainError::Malformed("seed length mismatch"));
    }
    Ok(BlockHeader {
        parent_hash: Hash32(parent),
        block_height,
        merkle_root: Hash32(root),
        difficulty,
        timestamp,
        validity_seed: bytes[FIXED..].to_vec(),
    })
}

/// Identity hash of a header: SHA-256 over the canonical encoding.
pub fn hash_header(header: &BlockHeader) -> Hash32 {
    let digest = Sha256::digest(encode_header(header));
    Hash32(digest.into())
}
