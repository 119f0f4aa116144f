//! Records stored by the contract: bindings, snapshots, obligations.

use serde::{Deserialize, Serialize};

use crate::codec::{serde_hex, Canonical, CodecError, Decoder, Encoder};
use crate::crypto::{hash, hash_fields, verify, Digest, EntityId, KeyPair, Nonce, PublicKey, Signature};

pub type TokenAmount = u64;
pub type LogicalTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Administrator,
    Tpa,
    DataOwner,
    DataUser,
    Monitor,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Administrator, Role::Tpa, Role::DataOwner, Role::DataUser, Role::Monitor];

    fn tag(self) -> u64 {
        self as u64
    }

    fn from_tag(tag: u64) -> Result<Self, CodecError> {
        Self::ALL.get(tag as usize).copied().ok_or_else(|| CodecError::Invalid(format!("role tag {tag}")))
    }
}

impl Canonical for Role {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.tag());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Self::from_tag(dec.u64()?)
    }
}

/// Map key of an identity binding is `H(e_id)`; labelled bindings (for example
/// the authority's common FE key) live under `H(e_id ‖ label)`.
pub fn binding_key(e_id: &EntityId, label: &str) -> Digest {
    if label.is_empty() {
        hash(e_id.as_bytes())
    } else {
        hash_fields(&[e_id.as_bytes(), label.as_bytes()])
    }
}

/// Public parameter audit obligation: a self-signed binding of an identity to key material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationPP {
    pub e_id: EntityId,
    /// Empty for the identity binding.
    pub label: String,
    #[serde(with = "serde_hex")]
    pub pk: Vec<u8>,
    pub sig: Signature,
}

impl ObligationPP {
    pub fn signed_message(e_id: &EntityId, label: &str, pk: &[u8]) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(e_id.as_bytes());
        if !label.is_empty() {
            enc.str(label);
        }
        enc.bytes(pk);
        enc.finish()
    }

    /// The identity binding `⟨e_id, pk_e, Sig(e_id ‖ pk_e)⟩`.
    pub fn identity(keys: &KeyPair) -> Self {
        Self::labelled(keys, "", keys.pk.as_bytes().to_vec())
    }

    pub fn labelled(keys: &KeyPair, label: &str, pk: Vec<u8>) -> Self {
        let e_id = keys.id();
        let sig = keys.sign(&Self::signed_message(&e_id, label, &pk));
        Self { e_id, label: label.to_string(), pk, sig }
    }

    pub fn key(&self) -> Digest {
        binding_key(&self.e_id, &self.label)
    }

    pub fn is_identity(&self) -> bool {
        self.label.is_empty()
    }

    /// Identity bindings verify under their own key; labelled ones under `signer`.
    pub fn verifies_under(&self, signer: &PublicKey) -> bool {
        verify(signer, &Self::signed_message(&self.e_id, &self.label, &self.pk), &self.sig)
    }

    pub fn self_verifies(&self) -> bool {
        PublicKey::from_slice(&self.pk).is_some_and(|pk| self.verifies_under(&pk))
    }

    pub fn identity_key(&self) -> Option<PublicKey> {
        self.is_identity().then(|| PublicKey::from_slice(&self.pk)).flatten()
    }
}

impl Canonical for ObligationPP {
    fn encode(&self, enc: &mut Encoder) {
        self.e_id.encode(enc);
        enc.str(&self.label).bytes(&self.pk);
        self.sig.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            e_id: EntityId::decode(dec)?,
            label: dec.str()?,
            pk: dec.bytes()?.to_vec(),
            sig: Signature::decode(dec)?,
        })
    }
}

/// Request content `f` of a key-service snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum KeyServicePayload {
    /// `f = 0`: a data owner asking for its encryption key.
    PublicKeyRequest,
    Vector(Vec<i64>),
    /// Digest of the sorted, de-duplicated attribute set; the attributes never go on-chain.
    AttributeSet(Digest),
}

impl KeyServicePayload {
    pub fn attribute_set<S: AsRef<str>>(attributes: &[S]) -> Self {
        let mut attrs: Vec<&str> = attributes.iter().map(AsRef::as_ref).collect();
        attrs.sort_unstable();
        attrs.dedup();
        let mut enc = Encoder::new();
        enc.list(&attrs, |e, a| {
            e.str(a);
        });
        KeyServicePayload::AttributeSet(hash(&enc.finish()))
    }

    pub fn is_public_key_service(&self) -> bool {
        matches!(self, KeyServicePayload::PublicKeyRequest)
    }
}

impl Canonical for KeyServicePayload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            KeyServicePayload::PublicKeyRequest => {
                enc.u64(0);
            }
            KeyServicePayload::Vector(y) => {
                enc.u64(1).list(y, |e, v| {
                    e.i64(*v);
                });
            }
            KeyServicePayload::AttributeSet(d) => {
                enc.u64(2);
                d.encode(enc);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        match dec.u64()? {
            0 => Ok(KeyServicePayload::PublicKeyRequest),
            1 => Ok(KeyServicePayload::Vector(dec.list(|d| d.i64())?)),
            2 => Ok(KeyServicePayload::AttributeSet(Digest::decode(dec)?)),
            t => Err(CodecError::Invalid(format!("payload tag {t}"))),
        }
    }
}

/// `H(actor_id ‖ tpa_id ‖ r)`.
pub fn obligation_key(actor: &EntityId, tpa: &EntityId, r: &Nonce) -> Digest {
    hash_fields(&[actor.as_bytes(), tpa.as_bytes(), r.as_bytes()])
}

/// `H(⊥ ‖ f)`, the proof-of-work slot of a refusal.
pub fn refusal_digest(f: &KeyServicePayload) -> Digest {
    hash_fields(&["⊥".as_bytes(), &f.to_canonical()])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotReq {
    pub r: Nonce,
    pub f: KeyServicePayload,
    pub t: LogicalTime,
    pub sig: Signature,
}

impl SnapshotReq {
    pub fn signed_message(r: &Nonce, f: &KeyServicePayload, t: LogicalTime) -> Vec<u8> {
        let mut enc = Encoder::new();
        r.encode(&mut enc);
        enc.record(f).u64(t);
        enc.finish()
    }

    pub fn new(keys: &KeyPair, r: Nonce, f: KeyServicePayload, t: LogicalTime) -> Self {
        let sig = keys.sign(&Self::signed_message(&r, &f, t));
        Self { r, f, t, sig }
    }

    pub fn verifies_under(&self, pk: &PublicKey) -> bool {
        verify(pk, &Self::signed_message(&self.r, &self.f, self.t), &self.sig)
    }
}

impl Canonical for SnapshotReq {
    fn encode(&self, enc: &mut Encoder) {
        self.r.encode(enc);
        enc.record(&self.f).u64(self.t);
        self.sig.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self { r: Nonce::decode(dec)?, f: dec.record()?, t: dec.u64()?, sig: Signature::decode(dec)? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotResp {
    pub r: Nonce,
    pub sigma: Digest,
    pub refused: bool,
    pub t: LogicalTime,
    pub sig: Signature,
}

fn digest_message(r: &Nonce, d: &Digest, t: LogicalTime) -> Vec<u8> {
    let mut enc = Encoder::new();
    r.encode(&mut enc);
    d.encode(&mut enc);
    enc.u64(t);
    enc.finish()
}

impl SnapshotResp {
    pub fn signed_message(r: &Nonce, sigma: &Digest, t: LogicalTime) -> Vec<u8> {
        digest_message(r, sigma, t)
    }

    pub fn new(keys: &KeyPair, r: Nonce, sigma: Digest, refused: bool, t: LogicalTime) -> Self {
        let sig = keys.sign(&Self::signed_message(&r, &sigma, t));
        Self { r, sigma, refused, t, sig }
    }

    pub fn verifies_under(&self, pk: &PublicKey) -> bool {
        verify(pk, &Self::signed_message(&self.r, &self.sigma, self.t), &self.sig)
    }
}

impl Canonical for SnapshotResp {
    fn encode(&self, enc: &mut Encoder) {
        self.r.encode(enc);
        self.sigma.encode(enc);
        enc.bool(self.refused).u64(self.t);
        self.sig.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            r: Nonce::decode(dec)?,
            sigma: Digest::decode(dec)?,
            refused: dec.bool()?,
            t: dec.u64()?,
            sig: Signature::decode(dec)?,
        })
    }
}

/// Receipt published by the requester: the digest of the key bytes it actually got.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotConfirm {
    pub r: Nonce,
    pub sigma_received: Digest,
    pub t: LogicalTime,
    pub sig: Signature,
}

impl SnapshotConfirm {
    pub fn signed_message(r: &Nonce, sigma: &Digest, t: LogicalTime) -> Vec<u8> {
        let mut m = b"confirm".to_vec();
        m.extend(digest_message(r, sigma, t));
        m
    }

    pub fn new(keys: &KeyPair, r: Nonce, sigma_received: Digest, t: LogicalTime) -> Self {
        let sig = keys.sign(&Self::signed_message(&r, &sigma_received, t));
        Self { r, sigma_received, t, sig }
    }

    pub fn verifies_under(&self, pk: &PublicKey) -> bool {
        verify(pk, &Self::signed_message(&self.r, &self.sigma_received, self.t), &self.sig)
    }
}

impl Canonical for SnapshotConfirm {
    fn encode(&self, enc: &mut Encoder) {
        self.r.encode(enc);
        self.sigma_received.encode(enc);
        enc.u64(self.t);
        self.sig.encode(enc);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            r: Nonce::decode(dec)?,
            sigma_received: Digest::decode(dec)?,
            t: dec.u64()?,
            sig: Signature::decode(dec)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObligationStatus {
    Requested,
    Responded,
    Refused,
    Confirmed,
    Disputed,
}

impl ObligationStatus {
    /// Position in the three-phase order; transitions never decrease it.
    pub fn stage(self) -> u8 {
        match self {
            ObligationStatus::Requested => 0,
            ObligationStatus::Responded | ObligationStatus::Refused => 1,
            ObligationStatus::Confirmed | ObligationStatus::Disputed => 2,
        }
    }

    pub fn is_open(self) -> bool {
        matches!(self, ObligationStatus::Requested | ObligationStatus::Responded | ObligationStatus::Disputed)
    }

    pub fn name(self) -> &'static str {
        match self {
            ObligationStatus::Requested => "requested",
            ObligationStatus::Responded => "responded",
            ObligationStatus::Refused => "refused",
            ObligationStatus::Confirmed => "confirmed",
            ObligationStatus::Disputed => "disputed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsVerdict {
    Healthy,
    CensorshipSuspected,
    UnconfirmedService,
    Disputed,
    TimestampViolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpVerdict {
    Valid,
    BadBinding,
    ConflictingBindings,
    Missing,
}

macro_rules! tagged_enum_codec {
    ($ty:ty, [$($variant:path),+ $(,)?]) => {
        impl Canonical for $ty {
            fn encode(&self, enc: &mut Encoder) {
                let all = [$($variant),+];
                let tag = all.iter().position(|v| v == self).unwrap();
                enc.u64(tag as u64);
            }

            fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
                let all = [$($variant),+];
                let tag = dec.u64()?;
                all.get(tag as usize)
                    .copied()
                    .ok_or_else(|| CodecError::Invalid(format!("{} tag {tag}", stringify!($ty))))
            }
        }
    };
}

tagged_enum_codec!(
    ObligationStatus,
    [
        ObligationStatus::Requested,
        ObligationStatus::Responded,
        ObligationStatus::Refused,
        ObligationStatus::Confirmed,
        ObligationStatus::Disputed,
    ]
);
tagged_enum_codec!(
    KsVerdict,
    [
        KsVerdict::Healthy,
        KsVerdict::CensorshipSuspected,
        KsVerdict::UnconfirmedService,
        KsVerdict::Disputed,
        KsVerdict::TimestampViolation,
    ]
);
tagged_enum_codec!(
    PpVerdict,
    [PpVerdict::Valid, PpVerdict::BadBinding, PpVerdict::ConflictingBindings, PpVerdict::Missing,]
);

/// Value moved when an inspection settles an obligation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub verdict: KsVerdict,
    pub monitor: EntityId,
    pub at: LogicalTime,
    /// `(party, amount)`; for fines the monitor is the recipient, for disputes the escrow.
    pub debits: Vec<(EntityId, TokenAmount)>,
}

/// Key service audit obligation with its three-phase commitment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationKS {
    pub key: Digest,
    pub requester: EntityId,
    pub tpa: EntityId,
    pub req: SnapshotReq,
    pub resp: Option<SnapshotResp>,
    pub confirm: Option<SnapshotConfirm>,
    pub status: ObligationStatus,
    /// Response recorded with `resp.t - req.t >= delta_t`.
    pub late: bool,
    pub settlement: Option<Settlement>,
}

impl ObligationKS {
    /// Verdict at ledger time `now`, ignoring whether it was already settled.
    pub fn verdict(&self, now: LogicalTime, delta_t: LogicalTime) -> KsVerdict {
        if self.status == ObligationStatus::Disputed {
            return KsVerdict::Disputed;
        }
        if self.late {
            return KsVerdict::TimestampViolation;
        }
        match (&self.status, &self.resp) {
            (ObligationStatus::Requested, _) if now.saturating_sub(self.req.t) >= delta_t => {
                KsVerdict::CensorshipSuspected
            }
            (ObligationStatus::Responded, Some(resp)) if now.saturating_sub(resp.t) >= delta_t => {
                KsVerdict::UnconfirmedService
            }
            _ => KsVerdict::Healthy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpConflict {
    pub publisher: EntityId,
    pub binding: ObligationPP,
    pub fined: bool,
}

/// Contract parameters fixed at deployment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    pub delta_t: LogicalTime,
    pub fine: TokenAmount,
    pub guarantee: TokenAmount,
    pub k_min: usize,
    pub fe_bound: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self { delta_t: 10, fine: 100_000, guarantee: 1_000_000, k_min: 2, fe_bound: 100 }
    }
}

impl Canonical for Params {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.delta_t).u64(self.fine).u64(self.guarantee).u64(self.k_min as u64).u64(self.fe_bound);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            delta_t: dec.u64()?,
            fine: dec.u64()?,
            guarantee: dec.u64()?,
            k_min: dec.u64()? as usize,
            fe_bound: dec.u64()?,
        })
    }
}
