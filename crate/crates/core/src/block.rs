//! Block headers, proof-of-work sealing and structural block validation.

use serde::{Deserialize, Serialize};

use crate::crypto::{AccountId, PublicKey};
use crate::encoding::{Canonical, Fields, Value};
use crate::hash::{digest_sha256, Hash256};
use crate::record::{Role, Transaction};
use crate::target::Target;

/// Difficulty of the reference deployment's genesis (`0x400`).
pub const DEFAULT_DIFFICULTY: u64 = 0x400;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockHeader {
    pub height: u64,
    pub parent_hash: Hash256,
    pub tx_root: Hash256,
    pub timestamp: u64,
    pub difficulty_target: Target,
    pub pow_nonce: u64,
    pub miner_id: AccountId,
}

impl Canonical for BlockHeader {
    fn fields(&self) -> Fields {
        Fields::new()
            .with("height", self.height)
            .with("parentHash", Value::Bytes(self.parent_hash.0.to_vec()))
            .with("txRoot", Value::Bytes(self.tx_root.0.to_vec()))
            .with("timestamp", self.timestamp)
            .with("difficultyTarget", Value::Bytes(self.difficulty_target.0.to_vec()))
            .with("powNonce", self.pow_nonce)
            .with("minerId", Value::Bytes(self.miner_id.0 .0.to_vec()))
    }
}

impl BlockHeader {
    pub fn hash(&self) -> Hash256 {
        block_hash(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
}

impl Block {
    pub fn hash(&self) -> Hash256 {
        block_hash(&self.header)
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }
}

/// Account present from genesis (registrar, auditors, node operators).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisAccount {
    pub public_key: PublicKey,
    pub role: Role,
    pub subject_id: String,
    pub name: String,
}

impl Canonical for GenesisAccount {
    fn fields(&self) -> Fields {
        Fields::new()
            .with("publicKey", Value::Bytes(self.public_key.0.to_vec()))
            .with("role", self.role.as_str())
            .with("subjectId", self.subject_id.as_str())
            .with("name", self.name.as_str())
    }
}

/// Network-wide chain parameters, fixed at genesis.
///
/// The reference deployment's genesis also enabled a set of Ethereum fork
/// switches (homestead, eip150, eip155, eip158, byzantium) at block 0. They
/// select client rule sets and have no counterpart here.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainConfig {
    pub chain_id: u64,
    pub initial_difficulty_target: Target,
    pub max_tx_per_block: usize,
    #[serde(with = "hex_bytes")]
    pub genesis_extra_data: Vec<u8>,
    #[serde(with = "hex_bytes")]
    pub genesis_nonce: Vec<u8>,
    pub max_peers: usize,
    #[serde(default)]
    pub genesis_accounts: Vec<GenesisAccount>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            chain_id: 5421,
            initial_difficulty_target: Target::from_difficulty(DEFAULT_DIFFICULTY).unwrap(),
            max_tx_per_block: 1024,
            genesis_extra_data: vec![0x54, 0x21],
            genesis_nonce: vec![0xde, 0xad, 0xbe, 0xef, 0xde, 0xad, 0xbe, 0xef],
            max_peers: 7,
            genesis_accounts: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("chain id must be positive")]
    ZeroChainId,
    #[error("difficulty target must be non-zero")]
    ZeroTarget,
    #[error("max transactions per block must be positive")]
    ZeroBlockCapacity,
    #[error("genesis nonce must be at most 8 bytes")]
    GenesisNonceTooLong,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.chain_id == 0 {
            return Err(ConfigError::ZeroChainId);
        }
        if self.initial_difficulty_target.is_zero() {
            return Err(ConfigError::ZeroTarget);
        }
        if self.max_tx_per_block == 0 {
            return Err(ConfigError::ZeroBlockCapacity);
        }
        if self.genesis_nonce.len() > 8 {
            return Err(ConfigError::GenesisNonceTooLong);
        }
        Ok(())
    }

    /// The genesis header. Its `txRoot` commits to the chain id, extra data and
    /// the genesis account list; its `powNonce` is the configured genesis nonce.
    pub fn genesis_header(&self) -> BlockHeader {
        let accounts = Value::List(
            self.genesis_accounts
                .iter()
                .map(|a| Value::Map(a.fields()))
                .collect(),
        );
        let commitment = Fields::new()
            .with("chainId", self.chain_id)
            .with("extraData", Value::Bytes(self.genesis_extra_data.clone()))
            .with("accounts", accounts);
        let mut nonce = [0u8; 8];
        nonce[8 - self.genesis_nonce.len().min(8)..]
            .copy_from_slice(&self.genesis_nonce[..self.genesis_nonce.len().min(8)]);
        BlockHeader {
            height: 0,
            parent_hash: Hash256::ZERO,
            tx_root: digest_sha256(&commitment.encode()),
            timestamp: 0,
            difficulty_target: self.initial_difficulty_target,
            pow_nonce: u64::from_be_bytes(nonce),
            miner_id: AccountId::default(),
        }
    }

    pub fn genesis_block(&self) -> Block {
        Block {
            header: self.genesis_header(),
            txs: Vec::new(),
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s.strip_prefix("0x").unwrap_or(&s)).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of the canonical header encoding (including `powNonce`).
pub fn block_hash(header: &BlockHeader) -> Hash256 {
    digest_sha256(&header.canonical_bytes())
}

/// SHA-256 over the concatenated canonical transaction encodings.
pub fn tx_root(txs: &[Transaction]) -> Hash256 {
    let mut buf = Vec::new();
    for tx in txs {
        buf.extend_from_slice(&tx.canonical_bytes());
    }
    digest_sha256(&buf)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PowError {
    #[error("target must be non-zero")]
    ZeroTarget,
    #[error("nonce space exhausted without meeting the target")]
    SearchExhausted,
}

/// Searches `powNonce` upward from 0 until the header hash meets `target`.
pub fn pow_seal(header: &BlockHeader, target: Target) -> Result<BlockHeader, PowError> {
    pow_seal_from(header, target, 0, u64::MAX)
}

/// Bounded variant of [`pow_seal`], searching `start..=end`.
pub fn pow_seal_from(
    header: &BlockHeader,
    target: Target,
    start: u64,
    end: u64,
) -> Result<BlockHeader, PowError> {
    if target.is_zero() {
        return Err(PowError::ZeroTarget);
    }
    let mut h = header.clone();
    let mut nonce = start;
    loop {
        h.pow_nonce = nonce;
        if target.is_met_by(&block_hash(&h)) {
            return Ok(h);
        }
        if nonce == end {
            return Err(PowError::SearchExhausted);
        }
        nonce += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    BadParentLink,
    BadHeight { expected: u64, got: u64 },
    BadTxRoot,
    WrongTarget,
    InsufficientWork,
    TimestampRegression,
    TooManyTxs { count: usize, max: usize },
    BadTxSignature(usize),
    /// A transaction failed nonce, registration or permission checks against chain state.
    TxRejected { index: usize, reason: String },
}

/// Structural validation of `block` on top of `parent`. Reports every violation found.
pub fn validate_block(
    block: &Block,
    parent: &BlockHeader,
    cfg: &ChainConfig,
) -> Result<(), Vec<Violation>> {
    let h = &block.header;
    let mut v = Vec::new();
    if h.parent_hash != block_hash(parent) {
        v.push(Violation::BadParentLink);
    }
    if h.height != parent.height + 1 {
        v.push(Violation::BadHeight {
            expected: parent.height + 1,
            got: h.height,
        });
    }
    if h.tx_root != tx_root(&block.txs) {
        v.push(Violation::BadTxRoot);
    }
    if h.difficulty_target != cfg.initial_difficulty_target {
        v.push(Violation::WrongTarget);
    }
    if !h.difficulty_target.is_met_by(&block_hash(h)) {
        v.push(Violation::InsufficientWork);
    }
    if h.timestamp < parent.timestamp {
        v.push(Violation::TimestampRegression);
    }
    if block.txs.len() > cfg.max_tx_per_block {
        v.push(Violation::TooManyTxs {
            count: block.txs.len(),
            max: cfg.max_tx_per_block,
        });
    }
    for (i, tx) in block.txs.iter().enumerate() {
        if !tx.signature_valid() {
            v.push(Violation::BadTxSignature(i));
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Validates a whole chain link by link, starting from its genesis.
pub fn validate_chain(blocks: &[Block], cfg: &ChainConfig) -> Result<(), (u64, Vec<Violation>)> {
    let Some(genesis) = blocks.first() else {
        return Ok(());
    };
    if genesis.header != cfg.genesis_header() || !genesis.txs.is_empty() {
        return Err((0, vec![Violation::BadParentLink]));
    }
    for pair in blocks.windows(2) {
        validate_block(&pair[1], &pair[0].header, cfg).map_err(|v| (pair[1].height(), v))?;
    }
    Ok(())
}
