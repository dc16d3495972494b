use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ledger::codec::{Reader, Writer};
use crate::ledger::keys::{verify, KeyPair, PublicKey, Signature};

pub type Hash = [u8; 32];

pub fn sha256(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxKind {
    ClientUpdate,
    GlobalModel,
    Policy,
}

impl TxKind {
    fn code(self) -> u8 {
        match self {
            TxKind::ClientUpdate => 1,
            TxKind::GlobalModel => 2,
            TxKind::Policy => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(TxKind::ClientUpdate),
            2 => Ok(TxKind::GlobalModel),
            3 => Ok(TxKind::Policy),
            other => Err(Error::BlockDecode(format!(
                "unknown transaction kind {other}"
            ))),
        }
    }
}

/// A payload digest signed by its sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedTransaction {
    pub kind: TxKind,
    pub timestamp: u64,
    pub digest: Hash,
    pub sender: PublicKey,
    pub signature: Signature,
}

impl SignedTransaction {
    pub fn sign(kind: TxKind, timestamp: u64, digest: Hash, key: &KeyPair) -> Self {
        let signature = key.sign(&Self::message(kind, timestamp, &digest));
        Self {
            kind,
            timestamp,
            digest,
            sender: key.public(),
            signature,
        }
    }

    fn message(kind: TxKind, timestamp: u64, digest: &Hash) -> Vec<u8> {
        let mut w = Writer::default();
        w.raw(b"bfel/tx/v1")
            .u8(kind.code())
            .u64(timestamp)
            .raw(digest);
        w.finish()
    }

    pub fn verify(&self) -> bool {
        verify(
            &self.sender,
            &Self::message(self.kind, self.timestamp, &self.digest),
            &self.signature,
        )
    }

    fn encode_into(&self, w: &mut Writer) {
        w.u8(self.kind.code())
            .u64(self.timestamp)
            .raw(&self.digest)
            .raw(&self.sender.0)
            .raw(&self.signature.0);
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self> {
        Ok(Self {
            kind: TxKind::from_code(r.u8("tx kind")?)?,
            timestamp: r.u64("tx timestamp")?,
            digest: r.array("tx digest")?,
            sender: PublicKey(r.array("tx sender")?),
            signature: Signature(r.array("tx signature")?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub index: u64,
    pub previous_hash: Hash,
    pub timestamp: u64,
    pub proposer: PublicKey,
    pub transactions: Vec<SignedTransaction>,
    /// Proposer's signature over [`Block::header_bytes`].
    pub signature: Signature,
}

impl Block {
    pub fn genesis() -> Self {
        Self {
            index: 0,
            previous_hash: [0; 32],
            timestamp: 0,
            proposer: PublicKey([0; 32]),
            transactions: Vec::new(),
            signature: Signature([0; 64]),
        }
    }

    fn tx_root(&self) -> Hash {
        let mut w = Writer::default();
        w.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode_into(&mut w);
        }
        sha256(&w.finish())
    }

    /// Signed portion: every field except the signature, with transactions
    /// committed through their root hash.
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.raw(b"bfel/block/v1")
            .u64(self.index)
            .raw(&self.previous_hash)
            .u64(self.timestamp)
            .raw(&self.proposer.0)
            .raw(&self.tx_root());
        w.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u64(self.index)
            .raw(&self.previous_hash)
            .u64(self.timestamp)
            .raw(&self.proposer.0)
            .u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode_into(&mut w);
        }
        w.raw(&self.signature.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let index = r.u64("block index")?;
        let previous_hash = r.array("previous hash")?;
        let timestamp = r.u64("block timestamp")?;
        let proposer = PublicKey(r.array("proposer")?);
        let count = r.u32("transaction count")? as usize;
        // Each transaction is 137 bytes; reject counts the input cannot hold.
        if count.saturating_mul(137) > r.remaining() {
            return Err(Error::BlockDecode(format!(
                "{count} transactions do not fit in {} bytes",
                r.remaining()
            )));
        }
        let transactions = (0..count)
            .map(|_| SignedTransaction::decode_from(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let signature = Signature(r.array("block signature")?);
        r.finish("block")?;
        Ok(Self {
            index,
            previous_hash,
            timestamp,
            proposer,
            transactions,
            signature,
        })
    }

    pub fn hash(&self) -> Hash {
        sha256(&self.encode())
    }
}

/// Outcome of checking a chain: `first_invalid` names the earliest block
/// that fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validation {
    pub valid: bool,
    pub first_invalid: Option<u64>,
    pub reason: Option<String>,
}

impl Validation {
    fn ok() -> Self {
        Self {
            valid: true,
            first_invalid: None,
            reason: None,
        }
    }

    fn fail(index: u64, reason: impl Into<String>) -> Self {
        Self {
            valid: false,
            first_invalid: Some(index),
            reason: Some(reason.into()),
        }
    }
}

/// Immutable sequence of blocks starting at genesis. Appending returns a new
/// chain sharing the existing blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    blocks: Vec<Arc<Block>>,
}

impl Default for Chain {
    fn default() -> Self {
        Self::new()
    }
}

impl Chain {
    pub fn new() -> Self {
        Self {
            blocks: vec![Arc::new(Block::genesis())],
        }
    }

    /// Wraps decoded blocks without validating them.
    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        Self {
            blocks: blocks.into_iter().map(Arc::new).collect(),
        }
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last().map(|b| b.as_ref())
    }

    /// Appends with the block index as its timestamp.
    pub fn append_block(
        &self,
        transactions: Vec<SignedTransaction>,
        proposer: &KeyPair,
    ) -> Result<Chain> {
        let ts = self.blocks.len() as u64;
        self.append_block_at(transactions, proposer, ts)
    }

    pub fn append_block_at(
        &self,
        transactions: Vec<SignedTransaction>,
        proposer: &KeyPair,
        timestamp: u64,
    ) -> Result<Chain> {
        if let Some(index) = transactions.iter().position(|tx| !tx.verify()) {
            return Err(Error::InvalidTransactionSignature { index });
        }
        let tip = self
            .tip()
            .ok_or_else(|| Error::BlockDecode("chain has no genesis block".into()))?;
        let mut block = Block {
            index: self.blocks.len() as u64,
            previous_hash: tip.hash(),
            timestamp,
            proposer: proposer.public(),
            transactions,
            signature: Signature([0; 64]),
        };
        block.signature = proposer.sign(&block.header_bytes());
        let mut blocks = self.blocks.clone();
        blocks.push(Arc::new(block));
        Ok(Chain { blocks })
    }
}

/// Checks genesis, indices, hash links, proposer signatures and transaction
/// signatures, reporting the earliest failing block.
pub fn validate_chain(chain: &Chain) -> Validation {
    let mut previous: Option<Hash> = None;
    for (i, block) in chain.blocks.iter().enumerate() {
        let i = i as u64;
        if let Err(reason) = check_block(block, i, previous.as_ref()) {
            return Validation::fail(i, reason);
        }
        previous = Some(block.hash());
    }
    if chain.blocks.is_empty() {
        return Validation::fail(0, "missing genesis block");
    }
    Validation::ok()
}

fn check_block(
    block: &Block,
    index: u64,
    previous: Option<&Hash>,
) -> std::result::Result<(), String> {
    let Some(previous) = previous else {
        return if *block == Block::genesis() {
            Ok(())
        } else {
            Err("genesis block differs from the constant genesis".into())
        };
    };
    if block.index != index {
        return Err(format!("index {} at position {index}", block.index));
    }
    if block.previous_hash != *previous {
        return Err("previous_hash does not match the preceding block".into());
    }
    if !verify(&block.proposer, &block.header_bytes(), &block.signature) {
        return Err("proposer signature does not verify".into());
    }
    if let Some(t) = block.transactions.iter().position(|tx| !tx.verify()) {
        return Err(format!("transaction {t} signature does not verify"));
    }
    Ok(())
}

/// Length-prefixed log: per block, a u32 LE byte count then its encoding.
pub fn export_chain(chain: &Chain) -> Vec<u8> {
    let mut w = Writer::default();
    for block in &chain.blocks {
        w.bytes(&block.encode());
    }
    w.finish()
}

/// Splits a log into per-block byte slices. Framing errors end the list and
/// are returned alongside the slices read so far.
fn frames(log: &[u8]) -> (Vec<&[u8]>, Option<Error>) {
    let mut r = Reader::new(log);
    let mut out = Vec::new();
    while r.remaining() > 0 {
        match r.bytes("block frame") {
            Ok(frame) => out.push(frame),
            Err(e) => return (out, Some(e)),
        }
    }
    (out, None)
}

/// Strict import: any framing or decoding error fails.
pub fn import_chain(log: &[u8]) -> Result<Chain> {
    let (frames, err) = frames(log);
    if let Some(e) = err {
        return Err(e);
    }
    let blocks = frames
        .into_iter()
        .map(Block::decode)
        .collect::<Result<Vec<_>>>()?;
    Ok(Chain::from_blocks(blocks))
}

/// Validates a raw log; a block whose bytes cannot be framed or decoded is
/// invalid at its position.
pub fn validate_log(log: &[u8]) -> Validation {
    let (frames, err) = frames(log);
    let mut blocks = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        match Block::decode(frame) {
            Ok(b) => blocks.push(b),
            Err(e) => {
                let partial = validate_chain(&Chain::from_blocks(blocks));
                if !partial.valid && i > 0 {
                    return partial;
                }
                return Validation::fail(i as u64, e.to_string());
            }
        }
    }
    let checked = validate_chain(&Chain::from_blocks(blocks));
    match (checked.valid, err) {
        (false, _) => checked,
        (true, Some(e)) => Validation::fail(frames.len() as u64, e.to_string()),
        (true, None) => checked,
    }
}
