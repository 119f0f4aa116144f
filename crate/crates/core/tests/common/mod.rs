#![allow(dead_code)]

use std::collections::BTreeMap;

use tab_core::contract::{
    obligation_key, Call, ContractState, CostModel, Event, KeyServicePayload, ObligationPP, Params, Role,
    SnapshotConfirm, SnapshotReq, SnapshotResp,
};
use tab_core::crypto::{hash, Digest, EntityId, KeyPair, Nonce};
use tab_core::ledger::{Block, Ledger, Receipt};

pub const ADMIN: &str = "admin";

pub fn keys_for(label: &str) -> KeyPair {
    KeyPair::from_seed(&hash(format!("test-key:{label}").as_bytes()).0)
}

/// Drives a ledger one transaction per block, naming accounts by label.
#[derive(Clone)]
pub struct Sim {
    pub ledger: Ledger,
    pub keys: BTreeMap<String, KeyPair>,
    nonce_counter: u64,
}

impl Sim {
    pub fn new(params: Params) -> Self {
        Self::with_cost(params, CostModel::default())
    }

    pub fn with_cost(params: Params, cost: CostModel) -> Self {
        let admin = keys_for(ADMIN);
        let ledger = Ledger::deploy(admin.id(), params, cost);
        let mut keys = BTreeMap::new();
        keys.insert(ADMIN.to_string(), admin);
        Self { ledger, keys, nonce_counter: 0 }
    }

    pub fn keys(&mut self, label: &str) -> KeyPair {
        self.keys.entry(label.to_string()).or_insert_with(|| keys_for(label)).clone()
    }

    pub fn id(&mut self, label: &str) -> EntityId {
        self.keys(label).id()
    }

    pub fn state(&self) -> &ContractState {
        self.ledger.state()
    }

    /// Timestamp of the block the next `send` lands in.
    pub fn t(&self) -> u64 {
        self.ledger.next_timestamp()
    }

    pub fn send(&mut self, label: &str, call: Call, value: u64) -> Receipt {
        let sender = self.id(label);
        self.ledger.submit_call(sender, &call, value).expect("queued");
        self.ledger.mine_block().receipts[0].clone()
    }

    pub fn ok(&mut self, label: &str, call: Call, value: u64) -> Vec<Event> {
        let f = call.function();
        let r = self.send(label, call, value);
        assert!(r.is_success(), "{label} {f}: {:?}", r.status);
        r.decoded_events()
    }

    pub fn err(&mut self, label: &str, call: Call, value: u64) -> String {
        let f = call.function();
        let r = self.send(label, call, value);
        r.revert_code().unwrap_or_else(|| panic!("{label} {f} unexpectedly succeeded")).to_string()
    }

    pub fn register_call(&mut self, label: &str, role: Role) -> Call {
        let pp = ObligationPP::identity(&self.keys(label));
        match role {
            Role::Tpa => Call::RegisterAuthority(pp),
            Role::DataOwner => Call::RegisterActorDataOwner(pp),
            Role::DataUser => Call::RegisterActorDataUser(pp),
            Role::Monitor => Call::RegisterMonitor(pp),
            Role::Administrator => panic!("the administrator does not register"),
        }
    }

    pub fn register(&mut self, label: &str, role: Role) {
        let call = self.register_call(label, role);
        self.ok(label, call, 0);
    }

    pub fn advance_to(&mut self, t: u64) {
        self.ledger.advance_to(t);
    }

    pub fn fresh_nonce(&mut self) -> Nonce {
        self.nonce_counter += 1;
        let mut r = [0u8; 16];
        r[8..].copy_from_slice(&self.nonce_counter.to_be_bytes());
        Nonce(r)
    }

    pub fn key_of(&mut self, requester: &str, r: &Nonce) -> Digest {
        let (a, t) = (self.id(requester), self.id("tpa"));
        obligation_key(&a, &t, r)
    }

    pub fn req_call(&mut self, label: &str, r: Nonce, f: KeyServicePayload) -> Call {
        let t = self.t();
        Call::RecordKSReq(SnapshotReq::new(&self.keys(label), r, f, t))
    }

    /// Records a request and returns `(obligation key, nonce, request time)`.
    pub fn request(&mut self, label: &str, f: KeyServicePayload) -> (Digest, Nonce, u64) {
        let r = self.fresh_nonce();
        let t = self.t();
        let call = self.req_call(label, r, f);
        self.ok(label, call, 0);
        (self.key_of(label, &r), r, t)
    }

    pub fn resp_call(&mut self, requester: &str, r: Nonce, sigma: Digest, refused: bool) -> Call {
        let t = self.t();
        let requester = self.id(requester);
        Call::RecordKSResp { requester, resp: SnapshotResp::new(&self.keys("tpa"), r, sigma, refused, t) }
    }

    pub fn respond(&mut self, requester: &str, r: Nonce, sigma: Digest) -> Vec<Event> {
        let call = self.resp_call(requester, r, sigma, false);
        self.ok("tpa", call, 0)
    }

    pub fn confirm_call(&mut self, label: &str, key: Digest, r: Nonce, sigma: Digest) -> Call {
        let t = self.t();
        Call::RecordKSConfirm { key, confirm: SnapshotConfirm::new(&self.keys(label), r, sigma, t) }
    }

    pub fn confirm(&mut self, label: &str, key: Digest, r: Nonce, sigma: Digest) -> Vec<Event> {
        let call = self.confirm_call(label, key, r, sigma);
        self.ok(label, call, 0)
    }

    pub fn inspect(&mut self, monitor: &str, key: Digest) -> Vec<Event> {
        self.ok(monitor, Call::InspectObligationKS { key }, 0)
    }
}

/// Labels used by [`populated`]: `tpa`, `owner-1..n`, `user-1..m`, `monitor-1`.
pub fn owners(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("owner-{i}")).collect()
}

pub fn users(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("user-{i}")).collect()
}

/// Registers a TPA, `n` owners, `m` users and one monitor, locks enrollment,
/// and has the TPA and users post deposits and shares.
pub fn populated(params: Params, n: usize, m: usize) -> Sim {
    let mut sim = Sim::new(params);
    enroll(&mut sim, n, m);
    fund(&mut sim, m);
    sim
}

pub fn enroll(sim: &mut Sim, n: usize, m: usize) {
    sim.ok(ADMIN, Call::EnrollOpen, 0);
    sim.register("tpa", Role::Tpa);
    for o in owners(n) {
        sim.register(&o, Role::DataOwner);
    }
    for u in users(m) {
        sim.register(&u, Role::DataUser);
    }
    sim.register("monitor-1", Role::Monitor);
    sim.ok(ADMIN, Call::EnrollLock, 0);
}

pub fn fund(sim: &mut Sim, m: usize) {
    let g = sim.state().params.guarantee;
    let share = sim.state().registration.as_ref().unwrap().share;
    sim.ok("tpa", Call::DepositGuarantee, g);
    for u in users(m) {
        sim.ok(&u, Call::DepositGuarantee, g);
        sim.ok(&u, Call::PayRegistrationShare, share);
    }
}

/// Every bit position a chain mutation may touch, as `(block, field, bit)`.
#[derive(Debug, Clone, Copy)]
pub enum Field {
    Index,
    PrevHash,
    Timestamp,
    BlockHash,
    TxSender(usize),
    TxPayload(usize),
    TxValue(usize),
    TxNonce(usize),
    ReceiptGas(usize),
    EventPayload(usize, usize),
}

pub fn field_bits(block: &Block) -> Vec<(Field, usize)> {
    let mut out = vec![(Field::Index, 64), (Field::PrevHash, 256), (Field::Timestamp, 64), (Field::BlockHash, 256)];
    for (i, tx) in block.transactions.iter().enumerate() {
        out.push((Field::TxSender(i), 256));
        out.push((Field::TxPayload(i), tx.payload.len() * 8));
        out.push((Field::TxValue(i), 64));
        out.push((Field::TxNonce(i), 64));
    }
    for (i, r) in block.receipts.iter().enumerate() {
        out.push((Field::ReceiptGas(i), 64));
        for (j, e) in r.events.iter().enumerate() {
            out.push((Field::EventPayload(i, j), e.payload.len() * 8));
        }
    }
    out.retain(|(_, bits)| *bits > 0);
    out
}

fn flip_bytes(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}

fn flip_u64(v: &mut u64, bit: usize) {
    *v ^= 1 << bit;
}

/// Flips one bit, chosen by `pick`, somewhere in `blocks`. Returns the block index.
pub fn flip_random_bit(blocks: &mut [Block], pick: u64) -> usize {
    let total: usize = blocks.iter().map(|b| field_bits(b).iter().map(|(_, n)| n).sum::<usize>()).sum();
    let mut at = (pick % total as u64) as usize;
    for (bi, block) in blocks.iter_mut().enumerate() {
        for (field, bits) in field_bits(block) {
            if at >= bits {
                at -= bits;
                continue;
            }
            match field {
                Field::Index => flip_u64(&mut block.index, at),
                Field::PrevHash => flip_bytes(&mut block.prev_hash.0, at),
                Field::Timestamp => flip_u64(&mut block.timestamp, at),
                Field::BlockHash => flip_bytes(&mut block.block_hash.0, at),
                Field::TxSender(i) => flip_bytes(&mut block.transactions[i].sender.0, at),
                Field::TxPayload(i) => flip_bytes(&mut block.transactions[i].payload, at),
                Field::TxValue(i) => flip_u64(&mut block.transactions[i].value, at),
                Field::TxNonce(i) => flip_u64(&mut block.transactions[i].nonce, at),
                Field::ReceiptGas(i) => flip_u64(&mut block.receipts[i].gas_used, at),
                Field::EventPayload(i, j) => flip_bytes(&mut block.receipts[i].events[j].payload, at),
            }
            return bi;
        }
    }
    unreachable!("bit index within total")
}

/// Rank over the rationals, estimated as the larger rank modulo two large primes.
pub fn rank_mod_primes(rows: &[Vec<i64>]) -> usize {
    [2_305_843_009_213_693_951u64, 4_611_686_018_427_387_847].iter().map(|p| rank_mod(rows, *p)).max().unwrap_or(0)
}

fn rank_mod(rows: &[Vec<i64>], p: u64) -> usize {
    let p128 = p as u128;
    let to_field = |v: i64| -> u128 { (v as i128).rem_euclid(p as i128) as u128 };
    let mut m: Vec<Vec<u128>> = rows.iter().map(|r| r.iter().map(|v| to_field(*v)).collect()).collect();
    let cols = m.first().map_or(0, Vec::len);
    let pow = |mut b: u128, mut e: u128| {
        let mut acc = 1u128;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % p128;
            }
            b = b * b % p128;
            e >>= 1;
        }
        acc
    };
    let mut rank = 0;
    for c in 0..cols {
        let Some(piv) = (rank..m.len()).find(|&r| m[r][c] != 0) else { continue };
        m.swap(rank, piv);
        let inv = pow(m[rank][c], p128 - 2);
        for r in 0..m.len() {
            if r != rank && m[r][c] != 0 {
                let factor = m[r][c] * inv % p128;
                for k in 0..cols {
                    let sub = factor * m[rank][k] % p128;
                    m[r][k] = (m[r][k] + p128 - sub) % p128;
                }
            }
        }
        rank += 1;
    }
    rank
}
