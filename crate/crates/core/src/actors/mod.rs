//! Protocol participants and the off-ledger channel between them.

mod world;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, Decoder, Encoder};
use crate::contract::Role;
use crate::crypto::{hash_fields, keygen, Digest, EntityId, KeyPair};
use crate::ipfe::FeError;
use crate::ledger::LedgerError;

pub use world::{DataOwner, DataUser, Monitor, QueryOutcome, QueryStatus, SweepEntry, Tpa, World, WorldParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{actor} call {function} reverted: {code}")]
    Reverted { actor: String, function: String, code: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Fe(#[from] FeError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("audit of own records failed: {0}")]
    Audit(String),
}

/// Adversarial switches; each only affects actors of the matching role.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorFlags {
    pub tpa_forge_response_no_delivery: bool,
    pub tpa_deliver_invalid_key: bool,
    /// Label of the actor whose requests the authority ignores, e.g. `user-1`.
    pub tpa_censor_user: Option<String>,
    pub user_fabricate_request: bool,
    pub user_inference_attack: bool,
    pub owner_conflicting_binding: bool,
}

impl BehaviorFlags {
    pub fn is_honest(&self) -> bool {
        *self == BehaviorFlags::default()
    }

    /// Whether any flag set here applies to `role`.
    pub fn applies_to(&self, role: Role) -> bool {
        match role {
            Role::Tpa => {
                self.tpa_forge_response_no_delivery || self.tpa_deliver_invalid_key || self.tpa_censor_user.is_some()
            }
            Role::DataUser => self.user_fabricate_request || self.user_inference_attack,
            Role::DataOwner => self.owner_conflicting_binding,
            Role::Administrator | Role::Monitor => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActorProfile {
    pub label: String,
    pub keys: KeyPair,
    pub role: Role,
    pub behavior: BehaviorFlags,
}

impl ActorProfile {
    pub fn new(label: &str, role: Role, behavior: BehaviorFlags, seed: &[u8; 32]) -> Self {
        Self { label: label.to_string(), keys: keygen(&derive_seed(seed, "actor", label)), role, behavior }
    }

    pub fn id(&self) -> EntityId {
        self.keys.id()
    }
}

/// Per-purpose seed for one actor: `H("domain" ‖ label ‖ seed)`.
pub fn derive_seed(seed: &[u8; 32], domain: &str, label: &str) -> [u8; 32] {
    hash_fields(&[domain.as_bytes(), label.as_bytes(), seed]).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    KeyRequest,
    KeyDelivery,
    PublicKeyDelivery,
}

/// Off-ledger message. The body is `obligation key ‖ content` in the canonical encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectMessage {
    pub from: EntityId,
    pub to: EntityId,
    pub kind: MessageKind,
    pub body: Vec<u8>,
    pub delivered_at: u64,
}

impl DirectMessage {
    pub fn new(from: EntityId, to: EntityId, kind: MessageKind, key: &Digest, content: &[u8], at: u64) -> Self {
        let mut enc = Encoder::new();
        key.encode(&mut enc);
        enc.bytes(content);
        Self { from, to, kind, body: enc.finish(), delivered_at: at }
    }

    /// `(obligation key, content)`, or `None` for a garbled body.
    pub fn open(&self) -> Option<(Digest, Vec<u8>)> {
        let mut dec = Decoder::new(&self.body);
        let key = Digest::decode(&mut dec).ok()?;
        let content = dec.bytes().ok()?.to_vec();
        dec.finish().ok()?;
        Some((key, content))
    }
}

/// In-process point-to-point channel with FIFO delivery.
#[derive(Debug, Default, Clone)]
pub struct Channel {
    queue: Vec<DirectMessage>,
    sent: usize,
}

impl Channel {
    pub fn send(&mut self, msg: DirectMessage) {
        self.sent += 1;
        self.queue.push(msg);
    }

    /// Removes and returns every message addressed to `to`, oldest first.
    pub fn receive(&mut self, to: &EntityId) -> Vec<DirectMessage> {
        let (mine, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.queue).into_iter().partition(|m| m.to == *to);
        self.queue = rest;
        mine
    }

    pub fn sent(&self) -> usize {
        self.sent
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
