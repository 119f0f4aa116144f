//! Append-only hash-chained ledger with a single sequencer.
//!
//! Block hash preimage, all fields in the canonical encoding:
//!
//! ```text
//! u64 index | digest prev_hash | u64 timestamp | list<Transaction> | list<Receipt>
//! Transaction = sender(32) | u64 function tag | payload bytes | u64 value | u64 nonce
//! Receipt     = u64 status (0 success, 1 reverted) | str code | str message
//!               | u64 gas_used | list<EventRecord>
//! EventRecord = str name | payload bytes
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{serde_hex, Canonical, CodecError, Decoder, Encoder};
use crate::contract::{
    base_cost_item, Call, CallContext, ContractState, CostModel, Event, EventRecord, FunctionName, Params,
};
use crate::crypto::{hash, Digest, EntityId};

pub const CHAIN_FORMAT: &str = "tab-chain/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("malformed transaction: {0}")]
    MalformedTransaction(String),
    #[error("nonce gap: expected {expected}, got {found}")]
    NonceGap { expected: u64, found: u64 },
    #[error("chain file: {0}")]
    ChainFile(String),
    #[error("replay diverged at block {0}: {1}")]
    ReplayDiverged(u64, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: EntityId,
    pub function: FunctionName,
    #[serde(with = "serde_hex")]
    pub payload: Vec<u8>,
    pub value: u64,
    pub nonce: u64,
}

impl Transaction {
    pub fn new(sender: EntityId, call: &Call, value: u64, nonce: u64) -> Self {
        Self { sender, function: call.function(), payload: call.payload(), value, nonce }
    }

    /// Builds a transaction from an untyped sender address.
    pub fn from_raw(
        sender: &[u8],
        function: FunctionName,
        payload: Vec<u8>,
        value: u64,
        nonce: u64,
    ) -> Result<Self, LedgerError> {
        let sender = EntityId::from_slice(sender).ok_or_else(|| {
            LedgerError::MalformedTransaction(format!("sender is {} bytes, expected {}", sender.len(), EntityId::LEN))
        })?;
        Ok(Self { sender, function, payload, value, nonce })
    }

    pub fn call(&self) -> Result<Call, CodecError> {
        Call::decode(self.function, &self.payload)
    }
}

impl Canonical for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        self.sender.encode(enc);
        self.function.encode(enc);
        enc.bytes(&self.payload).u64(self.value).u64(self.nonce);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            sender: EntityId::decode(dec)?,
            function: FunctionName::decode(dec)?,
            payload: dec.bytes()?.to_vec(),
            value: dec.u64()?,
            nonce: dec.u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxStatus {
    Success,
    Reverted { code: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    #[serde(flatten)]
    pub status: TxStatus,
    pub gas_used: u64,
    pub events: Vec<EventRecord>,
}

impl Receipt {
    pub fn is_success(&self) -> bool {
        self.status == TxStatus::Success
    }

    pub fn revert_code(&self) -> Option<&str> {
        match &self.status {
            TxStatus::Reverted { code, .. } => Some(code),
            TxStatus::Success => None,
        }
    }

    /// Decoded events; undecodable records are skipped.
    pub fn decoded_events(&self) -> Vec<Event> {
        self.events.iter().filter_map(|r| Event::from_record(r).ok()).collect()
    }
}

impl Canonical for Receipt {
    fn encode(&self, enc: &mut Encoder) {
        match &self.status {
            TxStatus::Success => enc.u64(0).str("").str(""),
            TxStatus::Reverted { code, message } => enc.u64(1).str(code).str(message),
        };
        enc.u64(self.gas_used).records(&self.events);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let tag = dec.u64()?;
        let code = dec.str()?;
        let message = dec.str()?;
        let status = match tag {
            0 => TxStatus::Success,
            1 => TxStatus::Reverted { code, message },
            t => return Err(CodecError::Invalid(format!("receipt status {t}"))),
        };
        Ok(Self { status, gas_used: dec.u64()?, events: dec.records()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest,
    pub timestamp: u64,
    pub transactions: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
    pub block_hash: Digest,
}

impl Block {
    pub fn compute_hash(&self) -> Digest {
        let mut enc = Encoder::new();
        enc.u64(self.index);
        self.prev_hash.encode(&mut enc);
        enc.u64(self.timestamp).records(&self.transactions).records(&self.receipts);
        hash(&enc.finish())
    }

    fn sealed(
        index: u64,
        prev_hash: Digest,
        timestamp: u64,
        transactions: Vec<Transaction>,
        receipts: Vec<Receipt>,
    ) -> Self {
        let mut block = Self { index, prev_hash, timestamp, transactions, receipts, block_hash: Digest::ZERO };
        block.block_hash = block.compute_hash();
        block
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum VerifyResult {
    Consistent,
    BrokenAt { index: u64, reason: String },
}

impl VerifyResult {
    pub fn is_consistent(&self) -> bool {
        *self == VerifyResult::Consistent
    }
}

pub fn verify_chain(blocks: &[Block]) -> VerifyResult {
    let broken = |i: usize, reason: &str| VerifyResult::BrokenAt { index: i as u64, reason: reason.to_string() };
    for (i, block) in blocks.iter().enumerate() {
        if block.index != i as u64 {
            return broken(i, "index-mismatch");
        }
        let expected_prev = if i == 0 { Digest::ZERO } else { blocks[i - 1].block_hash };
        if block.prev_hash != expected_prev {
            return broken(i, "prev-hash-mismatch");
        }
        if i > 0 && block.timestamp <= blocks[i - 1].timestamp {
            return broken(i, "timestamp-order");
        }
        if block.receipts.len() != block.transactions.len() {
            return broken(i, "receipt-count");
        }
        if block.compute_hash() != block.block_hash {
            return broken(i, "hash-mismatch");
        }
    }
    VerifyResult::Consistent
}

/// One event from the chain together with where it was recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub block_index: u64,
    pub tx_index: usize,
    pub sender: EntityId,
    pub function: FunctionName,
    pub event: Event,
}

/// Every recorded event that references `key`, in chain order.
pub fn query_log(blocks: &[Block], key: &Digest) -> Vec<LogRecord> {
    let mut out = Vec::new();
    for block in blocks {
        for (tx_index, (tx, receipt)) in block.transactions.iter().zip(&block.receipts).enumerate() {
            for event in receipt.decoded_events() {
                if event.references(key) {
                    out.push(LogRecord {
                        block_index: block.index,
                        tx_index,
                        sender: tx.sender,
                        function: tx.function,
                        event,
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFile {
    pub format: String,
    pub blocks: Vec<Block>,
}

pub fn export_chain(blocks: &[Block]) -> String {
    let file = ChainFile { format: CHAIN_FORMAT.to_string(), blocks: blocks.to_vec() };
    let mut s = serde_json::to_string_pretty(&file).expect("chain serializes");
    s.push('\n');
    s
}

pub fn import_chain(text: &str) -> Result<Vec<Block>, LedgerError> {
    let file: ChainFile = serde_json::from_str(text).map_err(|e| LedgerError::ChainFile(e.to_string()))?;
    if file.format != CHAIN_FORMAT {
        return Err(LedgerError::ChainFile(format!("unsupported format {}", file.format)));
    }
    Ok(file.blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedAck {
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    state: ContractState,
    /// Last nonce accepted per sender, counting the pending queue.
    nonces: BTreeMap<EntityId, u64>,
    /// Gas charged per account, successful or not.
    gas: BTreeMap<EntityId, u64>,
}

impl Ledger {
    /// Genesis: block 0 at time 0 holding the deployment transaction.
    pub fn deploy(admin: EntityId, params: Params, cost_model: CostModel) -> Self {
        let call = Call::Deploy { params: params.clone(), cost_model: cost_model.clone() };
        let tx = Transaction::new(admin, &call, 0, 1);
        let gas_used = cost_model.get(base_cost_item(FunctionName::Deploy));
        let (state, events) = ContractState::deploy(admin, params, cost_model);
        let receipt =
            Receipt { status: TxStatus::Success, gas_used, events: events.iter().map(Event::to_record).collect() };
        let genesis = Block::sealed(0, Digest::ZERO, 0, vec![tx], vec![receipt]);
        Self {
            blocks: vec![genesis],
            pending: Vec::new(),
            state,
            nonces: BTreeMap::from([(admin, 1)]),
            gas: BTreeMap::from([(admin, gas_used)]),
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn gas_spent(&self) -> &BTreeMap<EntityId, u64> {
        &self.gas
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis present")
    }

    pub fn now(&self) -> u64 {
        self.head().timestamp
    }

    /// Timestamp the next mined block will carry.
    pub fn next_timestamp(&self) -> u64 {
        self.now() + 1
    }

    pub fn next_nonce(&self, sender: &EntityId) -> u64 {
        self.nonces.get(sender).copied().unwrap_or(0) + 1
    }

    pub fn submit(&mut self, tx: Transaction) -> Result<QueuedAck, LedgerError> {
        if !tx.sender.is_well_formed() {
            return Err(LedgerError::MalformedTransaction("sender padding is not zero".into()));
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.nonce != expected {
            return Err(LedgerError::NonceGap { expected, found: tx.nonce });
        }
        self.nonces.insert(tx.sender, tx.nonce);
        self.pending.push(tx);
        Ok(QueuedAck { position: self.pending.len() - 1 })
    }

    /// Queues a call from `sender` with its next nonce.
    pub fn submit_call(&mut self, sender: EntityId, call: &Call, value: u64) -> Result<QueuedAck, LedgerError> {
        let tx = Transaction::new(sender, call, value, self.next_nonce(&sender));
        self.submit(tx)
    }

    pub fn mine_block(&mut self) -> &Block {
        let timestamp = self.next_timestamp();
        let txs = std::mem::take(&mut self.pending);
        let mut receipts = Vec::with_capacity(txs.len());
        for tx in &txs {
            let receipt = execute_tx(&mut self.state, tx, timestamp);
            *self.gas.entry(tx.sender).or_default() += receipt.gas_used;
            receipts.push(receipt);
        }
        let prev = self.head().block_hash;
        let index = self.blocks.len() as u64;
        self.blocks.push(Block::sealed(index, prev, timestamp, txs, receipts));
        self.head()
    }

    /// Mines empty blocks until the head timestamp reaches `t`.
    pub fn advance_to(&mut self, t: u64) {
        while self.now() < t {
            self.mine_block();
        }
    }

    /// Re-executes a chain from its genesis transaction and checks that every
    /// block comes out byte-identical.
    pub fn replay(blocks: &[Block]) -> Result<Self, LedgerError> {
        let genesis = blocks.first().ok_or_else(|| LedgerError::ChainFile("empty chain".into()))?;
        let deploy =
            genesis.transactions.first().ok_or_else(|| LedgerError::ReplayDiverged(0, "no deployment".into()))?;
        let Ok(Call::Deploy { params, cost_model }) = deploy.call() else {
            return Err(LedgerError::ReplayDiverged(0, "first transaction is not a deployment".into()));
        };
        let mut ledger = Ledger::deploy(deploy.sender, params, cost_model);
        if ledger.blocks[0] != *genesis {
            return Err(LedgerError::ReplayDiverged(0, "genesis differs".into()));
        }
        for block in &blocks[1..] {
            if block.timestamp != ledger.next_timestamp() {
                return Err(LedgerError::ReplayDiverged(block.index, "timestamp gap".into()));
            }
            for tx in &block.transactions {
                ledger.submit(tx.clone()).map_err(|e| LedgerError::ReplayDiverged(block.index, e.to_string()))?;
            }
            if ledger.mine_block() != block {
                return Err(LedgerError::ReplayDiverged(block.index, "block differs".into()));
            }
        }
        Ok(ledger)
    }
}

fn execute_tx(state: &mut ContractState, tx: &Transaction, now: u64) -> Receipt {
    let call = tx.call();
    let item = match &call {
        Ok(call) => state.cost_item(call),
        Err(_) => base_cost_item(tx.function),
    };
    let gas_used = state.cost_model.get(item);
    let result = match call {
        Err(e) => Err(crate::contract::ContractError::MalformedPayload(e.to_string())),
        Ok(call) => {
            let mut next = state.clone();
            let ctx = CallContext { sender: tx.sender, value: tx.value, now };
            next.execute(&ctx, &call).map(|events| (next, events))
        }
    };
    match result {
        Ok((next, events)) => {
            *state = next;
            Receipt { status: TxStatus::Success, gas_used, events: events.iter().map(Event::to_record).collect() }
        }
        Err(e) => Receipt {
            status: TxStatus::Reverted { code: e.code().to_string(), message: e.to_string() },
            gas_used,
            events: Vec::new(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{ObligationPP, Role};
    use crate::crypto::keygen;

    fn ledger() -> (Ledger, crate::crypto::KeyPair) {
        let admin = keygen(&[1; 32]);
        (Ledger::deploy(admin.id(), Params::default(), CostModel::default()), admin)
    }

    #[test]
    fn genesis_only_chain_is_consistent() {
        let (l, admin) = ledger();
        assert!(verify_chain(l.blocks()).is_consistent());
        assert_eq!(l.head().receipts[0].gas_used, 4_125_603);
        assert_eq!(l.state().owner, Some(admin.id()));
        assert_eq!(l.next_nonce(&admin.id()), 2);
    }

    #[test]
    fn nonce_rules() {
        let (mut l, _) = ledger();
        let user = keygen(&[2; 32]).id();
        let tx = |n| Transaction::new(user, &Call::Dropout, 0, n);
        assert_eq!(l.submit(tx(1)).unwrap().position, 0);
        assert_eq!(l.submit(tx(3)), Err(LedgerError::NonceGap { expected: 2, found: 3 }));
        assert!(matches!(
            Transaction::from_raw(&[0; 31], FunctionName::Dropout, vec![], 0, 1),
            Err(LedgerError::MalformedTransaction(_))
        ));
        let mut bad = tx(2);
        bad.sender.0[0] = 1;
        assert!(matches!(l.submit(bad), Err(LedgerError::MalformedTransaction(_))));
    }

    #[test]
    fn empty_block_advances_time() {
        let (mut l, _) = ledger();
        let b = l.mine_block().clone();
        assert_eq!((b.index, b.timestamp, b.transactions.len()), (1, 1, 0));
    }

    #[test]
    fn monitor_registration_costs_its_row_and_reverts_keep_state() {
        let (mut l, admin) = ledger();
        l.submit_call(admin.id(), &Call::EnrollOpen, 0).unwrap();
        l.mine_block();
        let mon = keygen(&[5; 32]);
        l.submit_call(mon.id(), &Call::RegisterMonitor(ObligationPP::identity(&mon)), 0).unwrap();
        let b = l.mine_block().clone();
        assert!(b.receipts[0].is_success());
        assert_eq!(b.receipts[0].gas_used, 36_521);
        assert_eq!(l.state().role_of(&mon.id()), Some(Role::Monitor));

        let before = l.state().digest();
        l.submit_call(mon.id(), &Call::EnrollLock, 0).unwrap();
        let b = l.mine_block().clone();
        assert_eq!(b.receipts[0].revert_code(), Some("NotOwner"));
        assert_eq!(b.receipts[0].gas_used, 14_531);
        assert_eq!(l.state().digest(), before);
    }

    #[test]
    fn tampered_payload_is_located() {
        let (mut l, admin) = ledger();
        for _ in 0..3 {
            l.mine_block();
        }
        l.submit_call(admin.id(), &Call::EnrollOpen, 0).unwrap();
        l.mine_block();
        for _ in 0..5 {
            l.mine_block();
        }
        assert_eq!(l.blocks().len(), 10);
        assert!(verify_chain(l.blocks()).is_consistent());
        let mut blocks = l.blocks().to_vec();
        blocks[4].transactions[0].nonce ^= 1;
        assert_eq!(verify_chain(&blocks), VerifyResult::BrokenAt { index: 4, reason: "hash-mismatch".into() });
    }

    #[test]
    fn export_import_replay() {
        let (mut l, admin) = ledger();
        l.submit_call(admin.id(), &Call::EnrollOpen, 0).unwrap();
        l.submit_call(admin.id(), &Call::EnrollOpen, 0).unwrap();
        l.mine_block();
        let text = export_chain(l.blocks());
        let blocks = import_chain(&text).unwrap();
        assert_eq!(blocks, l.blocks());
        let replayed = Ledger::replay(&blocks).unwrap();
        assert_eq!(replayed.state().digest(), l.state().digest());
        assert_eq!(export_chain(replayed.blocks()), text);
    }

    #[test]
    fn query_log_on_unknown_key_is_empty() {
        let (l, _) = ledger();
        assert!(query_log(l.blocks(), &Digest([7; 32])).is_empty());
    }
}
