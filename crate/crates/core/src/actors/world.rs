use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ActorProfile, BehaviorFlags, Channel, DirectMessage, HarnessError, MessageKind};
use crate::codec::Canonical;
use crate::contract::{
    obligation_key, refusal_digest, Call, CostModel, Event, KeyServicePayload, ObligationPP, ObligationStatus, Params,
    Role, SnapshotConfirm, SnapshotReq, SnapshotResp, FE_COMMON_LABEL,
};
use crate::crypto::{hash, Digest, EntityId, KeyPair, Nonce};
use crate::ipfe::{self, CommonPublicKey, EncryptionEpoch, FeFunctionalKey, FeMasterKeys, OwnerKey, SlotCiphertext};
use crate::ledger::{Ledger, Receipt, TxStatus};

/// Everything needed to build a [`World`].
#[derive(Debug, Clone)]
pub struct WorldParams {
    pub seed: [u8; 32],
    pub params: Params,
    pub cost_model: CostModel,
    pub n_owners: usize,
    pub m_users: usize,
    pub n_monitors: usize,
    pub with_tpa: bool,
    pub owner_values: Vec<i64>,
    pub queries: Vec<Vec<i64>>,
    pub attribute_queries: Vec<Vec<String>>,
    pub adversary: BTreeMap<String, BehaviorFlags>,
}

fn nonce_rng(seed: &[u8; 32], label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(seed, "nonce", label))
}

fn next_nonce(rng: &mut ChaCha20Rng) -> Nonce {
    let mut r = [0u8; 16];
    rng.fill_bytes(&mut r);
    Nonce(r)
}

pub struct Tpa {
    pub profile: ActorProfile,
    seed: [u8; 32],
    pub fe: Option<FeMasterKeys>,
    epoch: Option<EncryptionEpoch>,
    pub common: Option<CommonPublicKey>,
    cursor: usize,
    served: BTreeSet<Digest>,
    pub censor: Option<EntityId>,
    pub direct_requests: usize,
}

/// `(what sigma commits to, what gets delivered)`.
type KeyMaterial = (Vec<u8>, Vec<u8>);

impl Tpa {
    /// Key bytes for an obligation.
    fn key_material(&self, ob_f: &KeyServicePayload, slot: Option<usize>) -> Result<Option<KeyMaterial>, HarnessError> {
        let (Some(fe), Some(epoch)) = (&self.fe, &self.epoch) else {
            return Ok(None);
        };
        let invalid = self.profile.behavior.tpa_deliver_invalid_key;
        match ob_f {
            KeyServicePayload::PublicKeyRequest => {
                let Some(slot) = slot else { return Ok(None) };
                let real = epoch.owner_key(&fe.mpk, slot)?.to_canonical();
                let sent = if invalid {
                    EncryptionEpoch::new(&derive_seed(&self.seed, "bogus-epoch", &slot.to_string()))
                        .owner_key(&fe.mpk, slot)?
                        .to_canonical()
                } else {
                    real.clone()
                };
                Ok(Some((real, sent)))
            }
            KeyServicePayload::Vector(y) => {
                let real = ipfe::derive_key(&fe.msk, y)?.to_canonical();
                let sent = if invalid {
                    let mut other = y.clone();
                    let b = fe.mpk.bound as i64;
                    other[0] = if other[0] < b { other[0] + 1 } else { other[0] - 1 };
                    ipfe::derive_key(&fe.msk, &other)?.to_canonical()
                } else {
                    real.clone()
                };
                Ok(Some((real, sent)))
            }
            KeyServicePayload::AttributeSet(_) => Ok(None),
        }
    }

    /// Responds to every on-ledger request addressed to this authority that
    /// it has not handled yet. Direct requests are only counted: the ledger
    /// record is what gets served.
    pub fn serve(&mut self, ledger: &Ledger, channel: &mut Channel) -> Result<Vec<Call>, HarnessError> {
        let me = self.profile.id();
        self.direct_requests += channel.receive(&me).iter().filter(|m| m.kind == MessageKind::KeyRequest).count();
        let mut keys = Vec::new();
        for block in &ledger.blocks()[self.cursor..] {
            for receipt in &block.receipts {
                for event in receipt.decoded_events() {
                    if let Event::KsRequested { key, tpa, .. } = event {
                        if tpa == me {
                            keys.push(key);
                        }
                    }
                }
            }
        }
        self.cursor = ledger.blocks().len();
        let state = ledger.state();
        let t = ledger.next_timestamp();
        let mut calls = Vec::new();
        for key in keys {
            if !self.served.insert(key) {
                continue;
            }
            let Some(ob) = state.ks_obligations.get(&key) else { continue };
            if ob.status != ObligationStatus::Requested || self.censor == Some(ob.requester) {
                continue;
            }
            let slot = state.registration.as_ref().and_then(|r| r.owners.iter().position(|o| *o == ob.requester));
            let resp = match self.key_material(&ob.req.f, slot)? {
                Some((real, sent)) => {
                    if !self.profile.behavior.tpa_forge_response_no_delivery {
                        let kind = if ob.req.f.is_public_key_service() {
                            MessageKind::PublicKeyDelivery
                        } else {
                            MessageKind::KeyDelivery
                        };
                        channel.send(DirectMessage::new(me, ob.requester, kind, &key, &sent, ledger.now()));
                    }
                    SnapshotResp::new(&self.profile.keys, ob.req.r, hash(&real), false, t)
                }
                // no key can be produced for this request: publish a refusal
                None => SnapshotResp::new(&self.profile.keys, ob.req.r, refusal_digest(&ob.req.f), true, t),
            };
            calls.push(Call::RecordKSResp { requester: ob.requester, resp });
        }
        Ok(calls)
    }
}

/// Outcome of one key-service request made by an owner or user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Rejected { code: String },
    Pending,
    Responded,
    Confirmed,
    Disputed,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub actor: String,
    pub payload: KeyServicePayload,
    pub key: Digest,
    pub status: QueryStatus,
    pub result: Option<i64>,
    pub expected: Option<i64>,
}

struct OpenRequest {
    key: Digest,
    r: Nonce,
    received: Option<Vec<u8>>,
    confirmed: bool,
}

impl OpenRequest {
    fn new(key: Digest, r: Nonce) -> Self {
        Self { key, r, received: None, confirmed: false }
    }
}

pub struct DataOwner {
    pub profile: ActorProfile,
    pub value: i64,
    rng: ChaCha20Rng,
    request: Option<OpenRequest>,
    pub owner_key: Option<OwnerKey>,
    pub ciphertext: Option<SlotCiphertext>,
}

pub struct DataUser {
    pub profile: ActorProfile,
    pub requests: Vec<KeyServicePayload>,
    rng: ChaCha20Rng,
    open: Vec<(usize, OpenRequest)>,
    pub outcomes: Vec<QueryOutcome>,
}

pub struct Monitor {
    pub profile: ActorProfile,
    pub findings: Vec<SweepEntry>,
}

/// One verdict from a monitor sweep together with the value it moved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub monitor: String,
    /// `ks`, `pp`, or `ipm` for reverted inference attempts.
    pub kind: String,
    pub subject: Digest,
    pub verdict: String,
    /// Parties the verdict points at.
    pub parties: Vec<EntityId>,
    pub fines: Vec<(EntityId, u64)>,
    pub escrowed: Vec<(EntityId, u64)>,
}

/// The full cast plus the ledger they share.
pub struct World {
    pub ledger: Ledger,
    pub channel: Channel,
    pub admin: ActorProfile,
    pub tpa: Option<Tpa>,
    pub owners: Vec<DataOwner>,
    pub users: Vec<DataUser>,
    pub monitors: Vec<Monitor>,
    seed: [u8; 32],
    /// `(actor label, receipt)` of every transaction the harness sent.
    pub trace: Vec<(String, Receipt)>,
}

fn one_hot(n: usize, i: usize) -> Vec<i64> {
    (0..n).map(|j| i64::from(j == i)).collect()
}

impl World {
    pub fn new(wp: &WorldParams) -> Result<Self, HarnessError> {
        if wp.owner_values.len() != wp.n_owners {
            return Err(HarnessError::Config(format!(
                "{} owner values for {} owners",
                wp.owner_values.len(),
                wp.n_owners
            )));
        }
        let seed = wp.seed;
        let flags = |label: &str| wp.adversary.get(label).cloned().unwrap_or_default();
        let admin = ActorProfile::new("admin", Role::Administrator, flags("admin"), &seed);
        let owners: Vec<DataOwner> = (1..=wp.n_owners)
            .map(|i| {
                let label = format!("owner-{i}");
                DataOwner {
                    profile: ActorProfile::new(&label, Role::DataOwner, flags(&label), &seed),
                    value: wp.owner_values[i - 1],
                    rng: nonce_rng(&seed, &label),
                    request: None,
                    owner_key: None,
                    ciphertext: None,
                }
            })
            .collect();
        let users: Vec<DataUser> = (1..=wp.m_users)
            .map(|i| {
                let label = format!("user-{i}");
                let profile = ActorProfile::new(&label, Role::DataUser, flags(&label), &seed);
                let mut requests: Vec<KeyServicePayload> = if profile.behavior.user_inference_attack {
                    (0..wp.n_owners).map(|j| KeyServicePayload::Vector(one_hot(wp.n_owners, j))).collect()
                } else {
                    wp.queries.iter().cloned().map(KeyServicePayload::Vector).collect()
                };
                requests.extend(wp.attribute_queries.iter().map(|a| KeyServicePayload::attribute_set(a)));
                DataUser { profile, requests, rng: nonce_rng(&seed, &label), open: Vec::new(), outcomes: Vec::new() }
            })
            .collect();
        let label_ids: BTreeMap<String, EntityId> = owners
            .iter()
            .map(|o| &o.profile)
            .chain(users.iter().map(|u| &u.profile))
            .map(|p| (p.label.clone(), p.id()))
            .collect();
        let tpa = if wp.with_tpa {
            let profile = ActorProfile::new("tpa", Role::Tpa, flags("tpa"), &seed);
            let censor = match &profile.behavior.tpa_censor_user {
                Some(label) => Some(
                    *label_ids
                        .get(label)
                        .ok_or_else(|| HarnessError::Config(format!("censored actor {label} does not exist")))?,
                ),
                None => None,
            };
            Some(Tpa {
                profile,
                seed: derive_seed(&seed, "tpa", "tpa"),
                fe: None,
                epoch: None,
                common: None,
                cursor: 0,
                served: BTreeSet::new(),
                censor,
                direct_requests: 0,
            })
        } else {
            None
        };
        let monitors = (1..=wp.n_monitors)
            .map(|i| {
                let label = format!("monitor-{i}");
                Monitor {
                    profile: ActorProfile::new(&label, Role::Monitor, flags(&label), &seed),
                    findings: Vec::new(),
                }
            })
            .collect();
        let ledger = Ledger::deploy(admin.id(), wp.params.clone(), wp.cost_model.clone());
        Ok(Self { ledger, channel: Channel::default(), admin, tpa, owners, users, monitors, seed, trace: Vec::new() })
    }

    pub fn label_of(&self, id: &EntityId) -> Option<&str> {
        self.profiles().find(|p| p.id() == *id).map(|p| p.label.as_str())
    }

    /// Admin first, then authority, owners, users, monitors.
    pub fn profiles(&self) -> impl Iterator<Item = &ActorProfile> {
        std::iter::once(&self.admin)
            .chain(self.tpa.iter().map(|t| &t.profile))
            .chain(self.owners.iter().map(|o| &o.profile))
            .chain(self.users.iter().map(|u| &u.profile))
            .chain(self.monitors.iter().map(|m| &m.profile))
    }

    pub fn tpa_id(&self) -> Option<EntityId> {
        self.tpa.as_ref().map(|t| t.profile.id())
    }

    /// Queues one block's worth of calls, mines it, and returns the receipts in order.
    pub fn transact(&mut self, batch: Vec<(String, EntityId, Call, u64)>) -> Result<Vec<Receipt>, HarnessError> {
        let mut labels = Vec::with_capacity(batch.len());
        for (label, sender, call, value) in batch {
            self.ledger.submit_call(sender, &call, value)?;
            labels.push(label);
        }
        let receipts = self.ledger.mine_block().receipts.clone();
        for (label, receipt) in labels.into_iter().zip(&receipts) {
            self.trace.push((label, receipt.clone()));
        }
        Ok(receipts)
    }

    fn transact_all(&mut self, batch: Vec<(String, EntityId, Call, u64)>) -> Result<Vec<Receipt>, HarnessError> {
        let names: Vec<(String, String)> =
            batch.iter().map(|(l, _, c, _)| (l.clone(), c.function().to_string())).collect();
        let receipts = self.transact(batch)?;
        for ((actor, function), receipt) in names.into_iter().zip(&receipts) {
            if let TxStatus::Reverted { code, .. } = &receipt.status {
                return Err(HarnessError::Reverted { actor, function, code: code.clone() });
            }
        }
        Ok(receipts)
    }

    pub fn open_enrollment(&mut self) -> Result<(), HarnessError> {
        let admin = (self.admin.label.clone(), self.admin.id(), Call::EnrollOpen, 0);
        self.transact_all(vec![admin]).map(drop)
    }

    /// Phase I: every actor registers its role and identity binding, then checks
    /// that its own record landed. Owners flagged for it publish a second,
    /// divergent binding afterwards.
    pub fn run_phase1(&mut self) -> Result<usize, HarnessError> {
        let mut batch = Vec::new();
        let registering = self
            .tpa
            .iter()
            .map(|t| &t.profile)
            .chain(self.owners.iter().map(|o| &o.profile))
            .chain(self.users.iter().map(|u| &u.profile))
            .chain(self.monitors.iter().map(|m| &m.profile));
        for p in registering {
            let pp = ObligationPP::identity(&p.keys);
            let call = match p.role {
                Role::Tpa => Call::RegisterAuthority(pp),
                Role::DataOwner => Call::RegisterActorDataOwner(pp),
                Role::DataUser => Call::RegisterActorDataUser(pp),
                _ => Call::RegisterMonitor(pp),
            };
            batch.push((p.label.clone(), p.id(), call, 0));
        }
        if batch.is_empty() {
            return Ok(0);
        }
        let count = batch.len();
        self.transact_all(batch)?;
        for p in self.profiles().skip(1) {
            let state = self.ledger.state();
            let landed = state.role_of(&p.id()) == Some(p.role) && state.identity_key(&p.id()) == Some(p.keys.pk);
            if !landed {
                return Err(HarnessError::Audit(format!("registration of {} not on ledger", p.label)));
            }
        }

        let mut conflicts = Vec::new();
        for o in self.owners.iter().filter(|o| o.profile.behavior.owner_conflicting_binding) {
            let id = o.profile.id();
            let other = KeyPair::from_seed(&derive_seed(&self.seed, "shadow-key", &o.profile.label));
            let pk = other.pk.as_bytes().to_vec();
            let sig = other.sign(&ObligationPP::signed_message(&id, "", &pk));
            let pp = ObligationPP { e_id: id, label: String::new(), pk, sig };
            conflicts.push((o.profile.label.clone(), id, Call::PublishBinding(pp), 0));
        }
        if !conflicts.is_empty() {
            self.transact_all(conflicts)?;
        }
        Ok(count)
    }

    /// Locks enrollment, posts deposits and registration shares, and claims the
    /// registration and deployment rewards.
    pub fn lock_and_fund(&mut self) -> Result<(), HarnessError> {
        self.transact_all(vec![(self.admin.label.clone(), self.admin.id(), Call::EnrollLock, 0)])?;
        let guarantee = self.ledger.state().params.guarantee;
        let share = self.ledger.state().registration.as_ref().map_or(0, |r| r.share);
        let mut funding = Vec::new();
        if let Some(t) = &self.tpa {
            funding.push((t.profile.label.clone(), t.profile.id(), Call::DepositGuarantee, guarantee));
        }
        for u in &self.users {
            funding.push((u.profile.label.clone(), u.profile.id(), Call::DepositGuarantee, guarantee));
            funding.push((u.profile.label.clone(), u.profile.id(), Call::PayRegistrationShare, share));
        }
        if !funding.is_empty() {
            self.transact_all(funding)?;
        }
        let mut rewards = Vec::new();
        for p in self.tpa.iter().map(|t| &t.profile).chain(self.owners.iter().map(|o| &o.profile)) {
            rewards.push((p.label.clone(), p.id(), Call::RewardRegisterCost, 0));
        }
        rewards.push((self.admin.label.clone(), self.admin.id(), Call::RewardDeploymentCost, 0));
        // an unfunded pool (no data users) reverts these, which is not a harness failure
        self.transact(rewards)?;
        Ok(())
    }

    /// Phase II: FE setup and publication of the common public key binding.
    pub fn run_phase2(&mut self) -> Result<Option<Digest>, HarnessError> {
        let n = self.owners.len();
        let fe_bound = self.ledger.state().params.fe_bound;
        let Some(tpa) = self.tpa.as_mut() else {
            return Ok(None);
        };
        let fe = ipfe::setup(n, fe_bound, &derive_seed(&tpa.seed, "fe-setup", ""))?;
        let epoch = EncryptionEpoch::new(&derive_seed(&tpa.seed, "fe-epoch", ""));
        let common = epoch.common_key(&fe.mpk);
        let pp = ObligationPP::labelled(&tpa.profile.keys, FE_COMMON_LABEL, common.to_canonical());
        let key = pp.key();
        tpa.fe = Some(fe);
        tpa.epoch = Some(epoch);
        tpa.common = Some(common);
        let entry = (tpa.profile.label.clone(), tpa.profile.id(), Call::PublishBinding(pp), 0);
        self.transact_all(vec![entry])?;
        Ok(Some(key))
    }

    /// The common public key as published on the ledger.
    pub fn published_common_key(&self) -> Option<CommonPublicKey> {
        let tpa = self.tpa_id()?;
        let pp = self.ledger.state().pp_obligations.get(&crate::contract::binding_key(&tpa, FE_COMMON_LABEL))?;
        CommonPublicKey::from_canonical(&pp.pk).ok()
    }

    fn serve(&mut self, mut extra: Vec<(String, EntityId, Call, u64)>) -> Result<(), HarnessError> {
        if let Some(tpa) = self.tpa.as_mut() {
            let calls = tpa.serve(&self.ledger, &mut self.channel)?;
            let (label, id) = (tpa.profile.label.clone(), tpa.profile.id());
            extra.extend(calls.into_iter().map(|c| (label.clone(), id, c, 0)));
        }
        self.transact(extra)?;
        Ok(())
    }

    /// Confirmation for an open request if the authority has answered it.
    fn confirm_call(ledger: &Ledger, inbox: &[DirectMessage], keys: &KeyPair, req: &mut OpenRequest) -> Option<Call> {
        if req.confirmed {
            return None;
        }
        for m in inbox {
            if let Some((key, content)) = m.open() {
                if key == req.key && req.received.is_none() {
                    req.received = Some(content);
                }
            }
        }
        let ob = ledger.state().ks_obligations.get(&req.key)?;
        if ob.status != ObligationStatus::Responded {
            return None;
        }
        // nothing delivered is a receipt for the empty key
        let got = req.received.as_deref().unwrap_or(&[]);
        let confirm = SnapshotConfirm::new(keys, req.r, hash(got), ledger.next_timestamp());
        req.confirmed = true;
        Some(Call::RecordKSConfirm { key: req.key, confirm })
    }

    /// Phase III: each owner requests its encryption key, confirms receipt, and
    /// encrypts its value under it.
    pub fn run_phase3(&mut self) -> Result<(), HarnessError> {
        let Some(tpa_id) = self.tpa_id() else {
            return Ok(());
        };
        let t = self.ledger.next_timestamp();
        let now = self.ledger.now();
        let mut batch = Vec::new();
        for o in &mut self.owners {
            let r = next_nonce(&mut o.rng);
            let req = SnapshotReq::new(&o.profile.keys, r, KeyServicePayload::PublicKeyRequest, t);
            let key = obligation_key(&o.profile.id(), &tpa_id, &r);
            o.request = Some(OpenRequest::new(key, r));
            self.channel.send(DirectMessage::new(o.profile.id(), tpa_id, MessageKind::KeyRequest, &key, &[], now));
            batch.push((o.profile.label.clone(), o.profile.id(), Call::RecordKSReq(req), 0));
        }
        if batch.is_empty() {
            return Ok(());
        }
        self.transact_all(batch)?;
        self.serve(Vec::new())?;

        let mut confirms = Vec::new();
        for o in &mut self.owners {
            let Some(req) = o.request.as_mut() else { continue };
            let inbox = self.channel.receive(&o.profile.id());
            if let Some(call) = Self::confirm_call(&self.ledger, &inbox, &o.profile.keys, req) {
                confirms.push((o.profile.label.clone(), o.profile.id(), call, 0));
            }
        }
        if !confirms.is_empty() {
            self.transact(confirms)?;
        }
        for o in &mut self.owners {
            let Some(req) = &o.request else { continue };
            let confirmed = self
                .ledger
                .state()
                .ks_obligations
                .get(&req.key)
                .is_some_and(|ob| ob.status == ObligationStatus::Confirmed);
            if !confirmed {
                continue;
            }
            if let Some(key) = req.received.as_deref().and_then(|b| OwnerKey::from_canonical(b).ok()) {
                o.ciphertext = Some(key.encrypt(o.value)?);
                o.owner_key = Some(key);
            }
        }
        Ok(())
    }

    pub fn expected_inner_product(&self, y: &[i64]) -> i64 {
        self.owners.iter().zip(y).map(|(o, v)| o.value * v).sum()
    }

    /// Phase IV: each user works through its request list one round at a time.
    pub fn run_phase4(&mut self) -> Result<(), HarnessError> {
        let Some(tpa_id) = self.tpa_id() else {
            return Ok(());
        };
        let rounds = self.users.iter().map(|u| u.requests.len()).max().unwrap_or(0);
        for round in 0..rounds {
            let t = self.ledger.next_timestamp();
            let now = self.ledger.now();
            let mut batch = Vec::new();
            let mut issued = Vec::new();
            for (ui, u) in self.users.iter_mut().enumerate() {
                let Some(f) = u.requests.get(round).cloned() else { continue };
                let r = next_nonce(&mut u.rng);
                let key = obligation_key(&u.profile.id(), &tpa_id, &r);
                if !u.profile.behavior.user_fabricate_request {
                    self.channel.send(DirectMessage::new(
                        u.profile.id(),
                        tpa_id,
                        MessageKind::KeyRequest,
                        &key,
                        &[],
                        now,
                    ));
                }
                let req = SnapshotReq::new(&u.profile.keys, r, f.clone(), t);
                batch.push((u.profile.label.clone(), u.profile.id(), Call::RecordKSReq(req), 0));
                issued.push((ui, f, key, r));
            }
            if batch.is_empty() {
                continue;
            }
            let receipts = self.transact(batch)?;
            let mut injections = Vec::new();
            for ((ui, f, key, r), receipt) in issued.into_iter().zip(receipts) {
                let u = &mut self.users[ui];
                let status = match receipt.revert_code() {
                    Some(code) => QueryStatus::Rejected { code: code.to_string() },
                    None => {
                        u.open.push((u.outcomes.len(), OpenRequest::new(key, r)));
                        QueryStatus::Pending
                    }
                };
                if u.profile.behavior.user_fabricate_request && status == QueryStatus::Pending {
                    // try to slip in a response on the authority's behalf
                    let resp = SnapshotResp::new(&u.profile.keys, r, hash(b"forged"), false, t + 1);
                    injections.push((
                        u.profile.label.clone(),
                        tpa_id,
                        Call::RecordKSResp { requester: u.profile.id(), resp },
                        0,
                    ));
                }
                u.outcomes.push(QueryOutcome {
                    actor: u.profile.label.clone(),
                    payload: f,
                    key,
                    status,
                    result: None,
                    expected: None,
                });
            }
            self.serve(injections)?;

            let mut confirms = Vec::new();
            for u in &mut self.users {
                if u.profile.behavior.user_fabricate_request {
                    continue;
                }
                let inbox = self.channel.receive(&u.profile.id());
                for (_, req) in &mut u.open {
                    if let Some(call) = Self::confirm_call(&self.ledger, &inbox, &u.profile.keys, req) {
                        confirms.push((u.profile.label.clone(), u.profile.id(), call, 0));
                    }
                }
            }
            if !confirms.is_empty() {
                self.transact(confirms)?;
            }
        }
        self.settle_user_outcomes()
    }

    fn settle_user_outcomes(&mut self) -> Result<(), HarnessError> {
        let parts: Vec<SlotCiphertext> = self.owners.iter().filter_map(|o| o.ciphertext.clone()).collect();
        let common = self.published_common_key();
        let ct = common.as_ref().and_then(|c| ipfe::assemble(c.epoch_base, self.owners.len(), &parts).ok());
        let values: Vec<i64> = self.owners.iter().map(|o| o.value).collect();
        let state = self.ledger.state();
        for u in &mut self.users {
            for (idx, req) in &u.open {
                let out = &mut u.outcomes[*idx];
                let Some(ob) = state.ks_obligations.get(&req.key) else { continue };
                out.status = match ob.status {
                    ObligationStatus::Requested => QueryStatus::Pending,
                    ObligationStatus::Responded => QueryStatus::Responded,
                    ObligationStatus::Refused => QueryStatus::Refused,
                    ObligationStatus::Confirmed => QueryStatus::Confirmed,
                    ObligationStatus::Disputed => QueryStatus::Disputed,
                };
                let KeyServicePayload::Vector(y) = &out.payload else { continue };
                out.expected = Some(values.iter().zip(y).map(|(x, v)| x * v).sum());
                if ob.status != ObligationStatus::Confirmed {
                    continue;
                }
                let key = req.received.as_deref().and_then(|b| FeFunctionalKey::from_canonical(b).ok());
                if let (Some(key), Some(ct), Some(common)) = (key, &ct, &common) {
                    if key.y == *y {
                        out.result = Some(ipfe::decrypt(&key, ct, &common.mpk)?);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn query_outcomes(&self) -> Vec<QueryOutcome> {
        self.users.iter().flat_map(|u| u.outcomes.iter().cloned()).collect()
    }

    /// Latest time at which an obligation could still change status, plus `delta_t`.
    pub fn sweep_time(&self) -> u64 {
        let state = self.ledger.state();
        let last = state.ks_obligations.values().map(|o| o.resp.as_ref().map_or(o.req.t, |r| r.t)).max().unwrap_or(0);
        (last + state.params.delta_t).max(self.ledger.next_timestamp())
    }

    /// Obligation keys and `(e_id, label)` bindings in the order the chain recorded them.
    pub fn audit_subjects(&self) -> (Vec<Digest>, Vec<(EntityId, String)>) {
        let mut ks = Vec::new();
        let mut pp = Vec::new();
        let mut seen = BTreeSet::new();
        for block in self.ledger.blocks() {
            for receipt in &block.receipts {
                for event in receipt.decoded_events() {
                    match event {
                        Event::KsRequested { key, .. } => ks.push(key),
                        Event::Registered { e_id, binding, .. } if seen.insert(binding) => {
                            pp.push((e_id, String::new()));
                        }
                        Event::BindingPublished { e_id, label, binding }
                        | Event::BindingConflict { e_id, label, binding, .. }
                            if seen.insert(binding) =>
                        {
                            pp.push((e_id, label));
                        }
                        _ => {}
                    }
                }
            }
        }
        (ks, pp)
    }

    /// Advances the clock past every deadline and has the monitors inspect every
    /// recorded obligation and binding, round-robin.
    pub fn run_monitor(&mut self) -> Result<Vec<SweepEntry>, HarnessError> {
        if self.monitors.is_empty() {
            return Ok(Vec::new());
        }
        let target = self.sweep_time();
        while self.ledger.next_timestamp() < target {
            self.ledger.mine_block();
        }
        let (ks, pp) = self.audit_subjects();
        let mut batch = Vec::new();
        let calls = ks
            .into_iter()
            .map(|key| Call::InspectObligationKS { key })
            .chain(pp.into_iter().map(|(e_id, label)| Call::InspectObligationPP { e_id, label }));
        for (i, call) in calls.enumerate() {
            let m = &self.monitors[i % self.monitors.len()].profile;
            batch.push((m.label.clone(), m.id(), call, 0));
        }
        let mut entries = self.inference_findings();
        if !batch.is_empty() {
            let monitors: Vec<String> = batch.iter().map(|b| b.0.clone()).collect();
            let receipts = self.transact_all(batch)?;
            for (label, receipt) in monitors.into_iter().zip(receipts) {
                if let Some(entry) = self.entry_from_receipt(&label, &receipt) {
                    entries.push(entry);
                }
            }
        }
        for e in &entries {
            if let Some(m) = self.monitors.iter_mut().find(|m| m.profile.label == e.monitor) {
                m.findings.push(e.clone());
            }
        }
        Ok(entries)
    }

    fn entry_from_receipt(&self, monitor: &str, receipt: &Receipt) -> Option<SweepEntry> {
        let state = self.ledger.state();
        let mut entry: Option<SweepEntry> = None;
        for event in receipt.decoded_events() {
            match event {
                Event::KsInspected { key, verdict } => {
                    let ob = state.ks_obligations.get(&key)?;
                    let parties = match verdict {
                        crate::contract::KsVerdict::Healthy => vec![],
                        crate::contract::KsVerdict::UnconfirmedService => vec![ob.requester],
                        crate::contract::KsVerdict::Disputed => vec![ob.tpa, ob.requester],
                        _ => vec![ob.tpa],
                    };
                    entry = Some(SweepEntry {
                        monitor: monitor.to_string(),
                        kind: "ks".into(),
                        subject: key,
                        verdict: crate::contract::verdict_cause(verdict).to_string(),
                        parties,
                        fines: vec![],
                        escrowed: vec![],
                    });
                }
                Event::PpInspected { binding, verdict, .. } => {
                    let parties = state
                        .pp_conflicts
                        .get(&binding)
                        .map(|c| c.iter().map(|c| c.publisher).collect())
                        .unwrap_or_default();
                    let verdict = serde_json::to_value(verdict).ok()?.as_str()?.to_string();
                    entry = Some(SweepEntry {
                        monitor: monitor.to_string(),
                        kind: "pp".into(),
                        subject: binding,
                        verdict,
                        parties,
                        fines: vec![],
                        escrowed: vec![],
                    });
                }
                Event::Fined { party, amount, .. } => entry.as_mut()?.fines.push((party, amount)),
                Event::Escrowed { party, amount, .. } => entry.as_mut()?.escrowed.push((party, amount)),
                _ => {}
            }
        }
        entry
    }

    /// Reverted vector requests the inference gate stopped, read off the chain.
    fn inference_findings(&self) -> Vec<SweepEntry> {
        let monitor = self.monitors.first().map(|m| m.profile.label.clone()).unwrap_or_default();
        let mut out = Vec::new();
        for block in self.ledger.blocks() {
            for (tx, receipt) in block.transactions.iter().zip(&block.receipts) {
                if receipt.revert_code() == Some("IpmRejected") {
                    out.push(SweepEntry {
                        monitor: monitor.clone(),
                        kind: "ipm".into(),
                        subject: hash(&tx.to_canonical()),
                        verdict: "inference_attempt".into(),
                        parties: vec![tx.sender],
                        fines: vec![],
                        escrowed: vec![],
                    });
                }
            }
        }
        out
    }

    /// Everyone tries to leave; the administrator goes last.
    pub fn run_dropout(&mut self) -> Result<Vec<(String, Receipt)>, HarnessError> {
        let mut batch: Vec<_> = self.profiles().skip(1).map(|p| (p.label.clone(), p.id(), Call::Dropout, 0)).collect();
        batch.push((self.admin.label.clone(), self.admin.id(), Call::Dropout, 0));
        let labels: Vec<String> = batch.iter().map(|b| b.0.clone()).collect();
        let receipts = self.transact(batch)?;
        Ok(labels.into_iter().zip(receipts).collect())
    }
}
