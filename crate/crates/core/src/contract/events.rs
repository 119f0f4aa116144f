//! Events emitted into receipts.
//!
//! An event travels as an [`EventRecord`]: its name plus the canonical encoding
//! of its fields in the order they are declared below. Optional addresses are
//! encoded as a list of zero or one element.

use serde::{Deserialize, Serialize};

use crate::codec::{serde_hex, Canonical, CodecError, Decoder, Encoder};
use crate::crypto::{Digest, EntityId, Nonce};

use super::cost::CostItem;
use super::types::{binding_key, KsVerdict, PpVerdict, Role};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Deployed {
        owner: EntityId,
    },
    EnrollmentOpened,
    EnrollmentLocked {
        owners: u64,
        users: u64,
        total_cost: u64,
        share: u64,
    },
    OwnershipTransferred {
        previous: Option<EntityId>,
        new_owner: Option<EntityId>,
    },
    Registered {
        e_id: EntityId,
        role: Role,
        binding: Digest,
    },
    BindingPublished {
        e_id: EntityId,
        label: String,
        binding: Digest,
    },
    BindingConflict {
        e_id: EntityId,
        label: String,
        binding: Digest,
        publisher: EntityId,
    },
    GuaranteeDeposited {
        e_id: EntityId,
        amount: u64,
    },
    SharePaid {
        e_id: EntityId,
        amount: u64,
    },
    RewardPaid {
        e_id: EntityId,
        item: CostItem,
        amount: u64,
    },
    DroppedOut {
        e_id: EntityId,
        payout: u64,
    },
    KsRequested {
        key: Digest,
        requester: EntityId,
        tpa: EntityId,
        r: Nonce,
        t: u64,
        pk_service: bool,
    },
    KsResponded {
        key: Digest,
        tpa: EntityId,
        refused: bool,
        t: u64,
    },
    KsLateResponse {
        key: Digest,
        req_t: u64,
        resp_t: u64,
    },
    KsConfirmed {
        key: Digest,
        requester: EntityId,
    },
    KsDisputed {
        key: Digest,
        requester: EntityId,
        tpa: EntityId,
    },
    KsInspected {
        key: Digest,
        verdict: KsVerdict,
    },
    PpInspected {
        binding: Digest,
        e_id: EntityId,
        label: String,
        verdict: PpVerdict,
    },
    /// `subject` is an obligation key or a binding key.
    Fined {
        subject: Digest,
        party: EntityId,
        monitor: EntityId,
        amount: u64,
        cause: String,
    },
    Escrowed {
        key: Digest,
        party: EntityId,
        amount: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub name: String,
    #[serde(with = "serde_hex")]
    pub payload: Vec<u8>,
}

impl Canonical for EventRecord {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.name).bytes(&self.payload);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self { name: dec.str()?, payload: dec.bytes()?.to_vec() })
    }
}

fn opt_id(enc: &mut Encoder, id: &Option<EntityId>) {
    let items: Vec<EntityId> = id.iter().copied().collect();
    enc.records(&items);
}

fn read_opt_id(dec: &mut Decoder<'_>) -> Result<Option<EntityId>, CodecError> {
    let mut items: Vec<EntityId> = dec.records()?;
    match items.len() {
        0 | 1 => Ok(items.pop()),
        n => Err(CodecError::Invalid(format!("optional address with {n} entries"))),
    }
}

fn cost_item(dec: &mut Decoder<'_>) -> Result<CostItem, CodecError> {
    let name = dec.str()?;
    CostItem::from_name(&name).ok_or_else(|| CodecError::Invalid(format!("cost row {name}")))
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Deployed { .. } => "Deployed",
            Event::EnrollmentOpened => "EnrollmentOpened",
            Event::EnrollmentLocked { .. } => "EnrollmentLocked",
            Event::OwnershipTransferred { .. } => "OwnershipTransferred",
            Event::Registered { .. } => "Registered",
            Event::BindingPublished { .. } => "BindingPublished",
            Event::BindingConflict { .. } => "BindingConflict",
            Event::GuaranteeDeposited { .. } => "GuaranteeDeposited",
            Event::SharePaid { .. } => "SharePaid",
            Event::RewardPaid { .. } => "RewardPaid",
            Event::DroppedOut { .. } => "DroppedOut",
            Event::KsRequested { .. } => "KsRequested",
            Event::KsResponded { .. } => "KsResponded",
            Event::KsLateResponse { .. } => "KsLateResponse",
            Event::KsConfirmed { .. } => "KsConfirmed",
            Event::KsDisputed { .. } => "KsDisputed",
            Event::KsInspected { .. } => "KsInspected",
            Event::PpInspected { .. } => "PpInspected",
            Event::Fined { .. } => "Fined",
            Event::Escrowed { .. } => "Escrowed",
        }
    }

    pub fn to_record(&self) -> EventRecord {
        let mut e = Encoder::new();
        match self {
            Event::Deployed { owner } => owner.encode(&mut e),
            Event::EnrollmentOpened => {}
            Event::EnrollmentLocked { owners, users, total_cost, share } => {
                e.u64(*owners).u64(*users).u64(*total_cost).u64(*share);
            }
            Event::OwnershipTransferred { previous, new_owner } => {
                opt_id(&mut e, previous);
                opt_id(&mut e, new_owner);
            }
            Event::Registered { e_id, role, binding } => {
                e_id.encode(&mut e);
                role.encode(&mut e);
                binding.encode(&mut e);
            }
            Event::BindingPublished { e_id, label, binding } => {
                e_id.encode(&mut e);
                e.str(label);
                binding.encode(&mut e);
            }
            Event::BindingConflict { e_id, label, binding, publisher } => {
                e_id.encode(&mut e);
                e.str(label);
                binding.encode(&mut e);
                publisher.encode(&mut e);
            }
            Event::GuaranteeDeposited { e_id, amount } | Event::SharePaid { e_id, amount } => {
                e_id.encode(&mut e);
                e.u64(*amount);
            }
            Event::RewardPaid { e_id, item, amount } => {
                e_id.encode(&mut e);
                e.str(item.name()).u64(*amount);
            }
            Event::DroppedOut { e_id, payout } => {
                e_id.encode(&mut e);
                e.u64(*payout);
            }
            Event::KsRequested { key, requester, tpa, r, t, pk_service } => {
                key.encode(&mut e);
                requester.encode(&mut e);
                tpa.encode(&mut e);
                r.encode(&mut e);
                e.u64(*t).bool(*pk_service);
            }
            Event::KsResponded { key, tpa, refused, t } => {
                key.encode(&mut e);
                tpa.encode(&mut e);
                e.bool(*refused).u64(*t);
            }
            Event::KsLateResponse { key, req_t, resp_t } => {
                key.encode(&mut e);
                e.u64(*req_t).u64(*resp_t);
            }
            Event::KsConfirmed { key, requester } => {
                key.encode(&mut e);
                requester.encode(&mut e);
            }
            Event::KsDisputed { key, requester, tpa } => {
                key.encode(&mut e);
                requester.encode(&mut e);
                tpa.encode(&mut e);
            }
            Event::KsInspected { key, verdict } => {
                key.encode(&mut e);
                verdict.encode(&mut e);
            }
            Event::PpInspected { binding, e_id, label, verdict } => {
                binding.encode(&mut e);
                e_id.encode(&mut e);
                e.str(label);
                verdict.encode(&mut e);
            }
            Event::Fined { subject, party, monitor, amount, cause } => {
                subject.encode(&mut e);
                party.encode(&mut e);
                monitor.encode(&mut e);
                e.u64(*amount).str(cause);
            }
            Event::Escrowed { key, party, amount } => {
                key.encode(&mut e);
                party.encode(&mut e);
                e.u64(*amount);
            }
        }
        EventRecord { name: self.name().to_string(), payload: e.finish() }
    }

    pub fn from_record(record: &EventRecord) -> Result<Self, CodecError> {
        let d = &mut Decoder::new(&record.payload);
        let event = match record.name.as_str() {
            "Deployed" => Event::Deployed { owner: EntityId::decode(d)? },
            "EnrollmentOpened" => Event::EnrollmentOpened,
            "EnrollmentLocked" => {
                Event::EnrollmentLocked { owners: d.u64()?, users: d.u64()?, total_cost: d.u64()?, share: d.u64()? }
            }
            "OwnershipTransferred" => {
                Event::OwnershipTransferred { previous: read_opt_id(d)?, new_owner: read_opt_id(d)? }
            }
            "Registered" => {
                Event::Registered { e_id: EntityId::decode(d)?, role: Role::decode(d)?, binding: Digest::decode(d)? }
            }
            "BindingPublished" => {
                Event::BindingPublished { e_id: EntityId::decode(d)?, label: d.str()?, binding: Digest::decode(d)? }
            }
            "BindingConflict" => Event::BindingConflict {
                e_id: EntityId::decode(d)?,
                label: d.str()?,
                binding: Digest::decode(d)?,
                publisher: EntityId::decode(d)?,
            },
            "GuaranteeDeposited" => Event::GuaranteeDeposited { e_id: EntityId::decode(d)?, amount: d.u64()? },
            "SharePaid" => Event::SharePaid { e_id: EntityId::decode(d)?, amount: d.u64()? },
            "RewardPaid" => Event::RewardPaid { e_id: EntityId::decode(d)?, item: cost_item(d)?, amount: d.u64()? },
            "DroppedOut" => Event::DroppedOut { e_id: EntityId::decode(d)?, payout: d.u64()? },
            "KsRequested" => Event::KsRequested {
                key: Digest::decode(d)?,
                requester: EntityId::decode(d)?,
                tpa: EntityId::decode(d)?,
                r: Nonce::decode(d)?,
                t: d.u64()?,
                pk_service: d.bool()?,
            },
            "KsResponded" => Event::KsResponded {
                key: Digest::decode(d)?,
                tpa: EntityId::decode(d)?,
                refused: d.bool()?,
                t: d.u64()?,
            },
            "KsLateResponse" => Event::KsLateResponse { key: Digest::decode(d)?, req_t: d.u64()?, resp_t: d.u64()? },
            "KsConfirmed" => Event::KsConfirmed { key: Digest::decode(d)?, requester: EntityId::decode(d)? },
            "KsDisputed" => Event::KsDisputed {
                key: Digest::decode(d)?,
                requester: EntityId::decode(d)?,
                tpa: EntityId::decode(d)?,
            },
            "KsInspected" => Event::KsInspected { key: Digest::decode(d)?, verdict: KsVerdict::decode(d)? },
            "PpInspected" => Event::PpInspected {
                binding: Digest::decode(d)?,
                e_id: EntityId::decode(d)?,
                label: d.str()?,
                verdict: PpVerdict::decode(d)?,
            },
            "Fined" => Event::Fined {
                subject: Digest::decode(d)?,
                party: EntityId::decode(d)?,
                monitor: EntityId::decode(d)?,
                amount: d.u64()?,
                cause: d.str()?,
            },
            "Escrowed" => Event::Escrowed { key: Digest::decode(d)?, party: EntityId::decode(d)?, amount: d.u64()? },
            other => return Err(CodecError::Invalid(format!("unknown event {other}"))),
        };
        if d.remaining() != 0 {
            return Err(CodecError::Trailing(d.remaining()));
        }
        Ok(event)
    }

    /// Whether this event concerns the given obligation or binding key.
    pub fn references(&self, key: &Digest) -> bool {
        match self {
            Event::KsRequested { key: k, .. }
            | Event::KsResponded { key: k, .. }
            | Event::KsLateResponse { key: k, .. }
            | Event::KsConfirmed { key: k, .. }
            | Event::KsDisputed { key: k, .. }
            | Event::KsInspected { key: k, .. }
            | Event::Escrowed { key: k, .. }
            | Event::Registered { binding: k, .. }
            | Event::BindingPublished { binding: k, .. }
            | Event::BindingConflict { binding: k, .. }
            | Event::PpInspected { binding: k, .. }
            | Event::Fined { subject: k, .. } => k == key,
            Event::DroppedOut { e_id, .. } => binding_key(e_id, "") == *key,
            _ => false,
        }
    }
}
