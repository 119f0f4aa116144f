//! The audit contract as a deterministic state machine.
//!
//! [`ContractState::execute`] applies one call. It mutates `self` freely and
//! may fail half-way, so callers run it on a copy and keep the copy only on
//! success; the ledger does exactly that.

pub mod calls;
pub mod cost;
pub mod error;
pub mod events;
pub mod ipm;
pub mod types;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Digest, EntityId, PublicKey};

pub use calls::{base_cost_item, Call, FunctionName};
pub use cost::{CostItem, CostModel};
pub use error::ContractError;
pub use events::{Event, EventRecord};
pub use ipm::{IpmDecision, IpmReason};
pub use types::*;

/// Label of the authority's common FE public key binding.
pub const FE_COMMON_LABEL: &str = "fe-common";

/// Who sent a call, with what value, at which ledger time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallContext {
    pub sender: EntityId,
    pub value: TokenAmount,
    pub now: LogicalTime,
}

/// Enrollment as frozen by `enrollLock`. Owner order is registration order and
/// doubles as the FE slot assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationSnapshot {
    pub tpa: Option<EntityId>,
    pub owners: Vec<EntityId>,
    pub users: Vec<EntityId>,
    pub total_cost: TokenAmount,
    pub share: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub owner: Option<EntityId>,
    pub enrollment_open: bool,
    pub registration: Option<RegistrationSnapshot>,
    pub roles: BTreeMap<EntityId, Role>,
    pub registration_order: Vec<EntityId>,
    pub exited: BTreeSet<EntityId>,
    pub tpa: Option<EntityId>,
    pub pp_obligations: BTreeMap<Digest, ObligationPP>,
    pub pp_conflicts: BTreeMap<Digest, Vec<PpConflict>>,
    pub ks_obligations: BTreeMap<Digest, ObligationKS>,
    pub balances: BTreeMap<EntityId, TokenAmount>,
    pub guarantee_deposits: BTreeMap<EntityId, TokenAmount>,
    pub contract_pool: TokenAmount,
    /// Held back from both sides of disputed obligations.
    pub escrow: TokenAmount,
    pub withdrawn: TokenAmount,
    pub paid_in: TokenAmount,
    pub share_paid: BTreeSet<EntityId>,
    pub reward_claimed: BTreeSet<EntityId>,
    pub deployment_claimed: bool,
    pub ipm_history: BTreeMap<EntityId, Vec<Vec<i64>>>,
    pub cost_model: CostModel,
    pub params: Params,
}

fn credit(map: &mut BTreeMap<EntityId, TokenAmount>, id: EntityId, amount: TokenAmount) {
    if amount > 0 {
        *map.entry(id).or_default() += amount;
    }
}

impl ContractState {
    pub fn deploy(admin: EntityId, params: Params, cost_model: CostModel) -> (Self, Vec<Event>) {
        let state = Self {
            owner: Some(admin),
            enrollment_open: false,
            registration: None,
            roles: BTreeMap::new(),
            registration_order: Vec::new(),
            exited: BTreeSet::new(),
            tpa: None,
            pp_obligations: BTreeMap::new(),
            pp_conflicts: BTreeMap::new(),
            ks_obligations: BTreeMap::new(),
            balances: BTreeMap::new(),
            guarantee_deposits: BTreeMap::new(),
            contract_pool: 0,
            escrow: 0,
            withdrawn: 0,
            paid_in: 0,
            share_paid: BTreeSet::new(),
            reward_claimed: BTreeSet::new(),
            deployment_claimed: false,
            ipm_history: BTreeMap::new(),
            cost_model,
            params,
        };
        (state, vec![Event::Deployed { owner: admin }])
    }

    /// Hash of the JSON form; every map is ordered so this is stable.
    pub fn digest(&self) -> Digest {
        hash(&serde_json::to_vec(self).expect("state serializes"))
    }

    pub fn role_of(&self, id: &EntityId) -> Option<Role> {
        if self.owner.as_ref() == Some(id) {
            return Some(Role::Administrator);
        }
        self.roles.get(id).copied()
    }

    pub fn balance(&self, id: &EntityId) -> TokenAmount {
        self.balances.get(id).copied().unwrap_or(0)
    }

    pub fn deposit(&self, id: &EntityId) -> TokenAmount {
        self.guarantee_deposits.get(id).copied().unwrap_or(0)
    }

    pub fn identity_key(&self, id: &EntityId) -> Option<PublicKey> {
        self.pp_obligations.get(&binding_key(id, "")).and_then(ObligationPP::identity_key)
    }

    /// Value currently accounted for anywhere, including what already left.
    pub fn total_held(&self) -> TokenAmount {
        self.contract_pool
            + self.balances.values().sum::<u64>()
            + self.guarantee_deposits.values().sum::<u64>()
            + self.escrow
            + self.withdrawn
    }

    pub fn conservation_holds(&self) -> bool {
        self.total_held() == self.paid_in
    }

    pub fn is_locked(&self) -> bool {
        self.registration.is_some() && !self.enrollment_open
    }

    /// Registration share each data user owes: `ceil(total / m)`.
    pub fn registration_share(cost_model: &CostModel, tpa: bool, owners: u64, users: u64) -> (u64, u64) {
        let total = u64::from(tpa) * cost_model.get(CostItem::RegisterAuthority)
            + owners * cost_model.get(CostItem::RegisterActorDataOwner)
            + users * cost_model.get(CostItem::RegisterActorDataUser);
        let share = if users == 0 { 0 } else { total.div_ceil(users) };
        (total, share)
    }

    /// Gas row for a call. Request and response rows depend on whether the
    /// obligation is a public-key service.
    pub fn cost_item(&self, call: &Call) -> CostItem {
        match call {
            Call::RecordKSReq(req) if req.f.is_public_key_service() => CostItem::RecordKSPKReq,
            Call::RecordKSResp { requester, resp } => {
                let pk_service = self.tpa.is_some_and(|tpa| {
                    let key = obligation_key(requester, &tpa, &resp.r);
                    self.ks_obligations.get(&key).is_some_and(|o| o.req.f.is_public_key_service())
                });
                if pk_service {
                    CostItem::RecordKSPKResp
                } else {
                    CostItem::RecordKSSKResp
                }
            }
            other => base_cost_item(other.function()),
        }
    }

    /// Role gate run before any other precondition.
    pub fn authorize(&self, sender: &EntityId, call: &Call) -> Result<Role, ContractError> {
        use FunctionName as F;
        let function = call.function();
        match function {
            F::Deploy => Err(ContractError::AlreadyDeployed),
            F::EnrollOpen | F::EnrollLock | F::TransferOwnership | F::RenounceOwnership | F::RewardDeploymentCost => {
                if self.owner.as_ref() == Some(sender) {
                    Ok(Role::Administrator)
                } else {
                    Err(ContractError::NotOwner)
                }
            }
            F::RegisterAuthority | F::RegisterActorDataOwner | F::RegisterActorDataUser | F::RegisterMonitor => {
                if self.role_of(sender).is_some() {
                    Err(ContractError::AlreadyRegistered)
                } else if self.exited.contains(sender) {
                    Err(ContractError::Exited)
                } else {
                    Ok(match function {
                        F::RegisterAuthority => Role::Tpa,
                        F::RegisterActorDataOwner => Role::DataOwner,
                        F::RegisterActorDataUser => Role::DataUser,
                        _ => Role::Monitor,
                    })
                }
            }
            _ => {
                let role = self.role_of(sender).ok_or(ContractError::NotRegistered)?;
                if permitted(call, role) {
                    Ok(role)
                } else {
                    Err(ContractError::WrongRole { function: function.name(), role })
                }
            }
        }
    }

    pub fn execute(&mut self, ctx: &CallContext, call: &Call) -> Result<Vec<Event>, ContractError> {
        let role = self.authorize(&ctx.sender, call)?;
        if ctx.value > 0 && !call.function().is_payable() {
            return Err(ContractError::UnexpectedValue);
        }
        let sender = ctx.sender;
        match call {
            Call::Deploy { .. } => Err(ContractError::AlreadyDeployed),
            Call::EnrollOpen => {
                if self.enrollment_open || self.registration.is_some() {
                    return Err(ContractError::WrongPhase);
                }
                self.enrollment_open = true;
                Ok(vec![Event::EnrollmentOpened])
            }
            Call::EnrollLock => self.enroll_lock(),
            Call::TransferOwnership { new_owner } => {
                if self.owner == Some(*new_owner) {
                    return Ok(vec![]);
                }
                if !new_owner.is_well_formed() {
                    return Err(ContractError::MalformedPayload("new owner address".into()));
                }
                if self.roles.contains_key(new_owner) {
                    return Err(ContractError::AlreadyRegistered);
                }
                if self.exited.contains(new_owner) {
                    return Err(ContractError::Exited);
                }
                let previous = self.owner.replace(*new_owner);
                Ok(vec![Event::OwnershipTransferred { previous, new_owner: Some(*new_owner) }])
            }
            Call::RenounceOwnership => {
                let previous = self.owner.take();
                Ok(vec![Event::OwnershipTransferred { previous, new_owner: None }])
            }
            Call::RegisterAuthority(pp)
            | Call::RegisterActorDataOwner(pp)
            | Call::RegisterActorDataUser(pp)
            | Call::RegisterMonitor(pp) => self.register(sender, role, pp),
            Call::PublishBinding(pp) => self.publish_binding(sender, role, pp),
            Call::DepositGuarantee => {
                if !self.is_locked() {
                    return Err(ContractError::WrongPhase);
                }
                if ctx.value < self.params.guarantee {
                    return Err(ContractError::InsufficientValue {
                        required: self.params.guarantee,
                        offered: ctx.value,
                    });
                }
                credit(&mut self.guarantee_deposits, sender, ctx.value);
                self.paid_in += ctx.value;
                Ok(vec![Event::GuaranteeDeposited { e_id: sender, amount: ctx.value }])
            }
            Call::PayRegistrationShare => {
                let reg = self.registration.as_ref().filter(|_| !self.enrollment_open);
                let Some(reg) = reg else {
                    return Err(ContractError::WrongPhase);
                };
                if !reg.users.contains(&sender) {
                    return Err(ContractError::WrongPhase);
                }
                if self.share_paid.contains(&sender) {
                    return Err(ContractError::AlreadyPaid);
                }
                if ctx.value < reg.share {
                    return Err(ContractError::InsufficientValue { required: reg.share, offered: ctx.value });
                }
                self.share_paid.insert(sender);
                self.contract_pool += ctx.value;
                self.paid_in += ctx.value;
                Ok(vec![Event::SharePaid { e_id: sender, amount: ctx.value }])
            }
            Call::RewardRegisterCost => self.reward_register_cost(sender, role),
            Call::RewardDeploymentCost => self.reward_deployment_cost(sender),
            Call::Dropout => self.dropout(sender, role),
            Call::RecordKSReq(req) => self.record_req(ctx, role, req),
            Call::RecordKSResp { requester, resp } => self.record_resp(ctx, requester, resp),
            Call::RecordKSConfirm { key, confirm } => self.record_confirm(ctx, key, confirm),
            Call::InspectObligationKS { key } => self.inspect_ks(ctx, key),
            Call::InspectObligationPP { e_id, label } => Ok(self.inspect_pp(sender, e_id, label)),
        }
    }

    fn enroll_lock(&mut self) -> Result<Vec<Event>, ContractError> {
        if !self.enrollment_open {
            return Err(ContractError::WrongPhase);
        }
        self.enrollment_open = false;
        let with_role = |role: Role| -> Vec<EntityId> {
            self.registration_order.iter().filter(|id| self.roles.get(id) == Some(&role)).copied().collect()
        };
        let owners = with_role(Role::DataOwner);
        let users = with_role(Role::DataUser);
        let (total_cost, share) =
            Self::registration_share(&self.cost_model, self.tpa.is_some(), owners.len() as u64, users.len() as u64);
        let event =
            Event::EnrollmentLocked { owners: owners.len() as u64, users: users.len() as u64, total_cost, share };
        self.registration = Some(RegistrationSnapshot { tpa: self.tpa, owners, users, total_cost, share });
        Ok(vec![event])
    }

    fn register(&mut self, sender: EntityId, role: Role, pp: &ObligationPP) -> Result<Vec<Event>, ContractError> {
        if !self.enrollment_open {
            return Err(ContractError::EnrollmentClosed);
        }
        let pk = pp.identity_key().ok_or(ContractError::IdentityMismatch)?;
        if pp.e_id != sender || EntityId::from_public_key(&pk) != sender {
            return Err(ContractError::IdentityMismatch);
        }
        if !pp.self_verifies() {
            return Err(ContractError::BadSignature);
        }
        if role == Role::Tpa {
            if self.tpa.is_some() {
                return Err(ContractError::TpaExists);
            }
            self.tpa = Some(sender);
        }
        let binding = pp.key();
        self.roles.insert(sender, role);
        self.registration_order.push(sender);
        self.pp_obligations.insert(binding, pp.clone());
        Ok(vec![Event::Registered { e_id: sender, role, binding }])
    }

    fn publish_binding(
        &mut self,
        sender: EntityId,
        role: Role,
        pp: &ObligationPP,
    ) -> Result<Vec<Event>, ContractError> {
        if pp.e_id != sender {
            return Err(ContractError::IdentityMismatch);
        }
        if matches!(role, Role::Tpa | Role::DataUser) && self.deposit(&sender) == 0 {
            return Err(ContractError::NoGuarantee);
        }
        let signed = if pp.is_identity() {
            pp.self_verifies()
        } else {
            self.identity_key(&sender).is_some_and(|pk| pp.verifies_under(&pk))
        };
        if !signed {
            return Err(ContractError::BadSignature);
        }
        let binding = pp.key();
        match self.pp_obligations.get(&binding) {
            Some(existing) if existing.pk == pp.pk => Ok(vec![]),
            Some(_) => {
                self.pp_conflicts.entry(binding).or_default().push(PpConflict {
                    publisher: sender,
                    binding: pp.clone(),
                    fined: false,
                });
                Ok(vec![Event::BindingConflict { e_id: pp.e_id, label: pp.label.clone(), binding, publisher: sender }])
            }
            None => {
                self.pp_obligations.insert(binding, pp.clone());
                Ok(vec![Event::BindingPublished { e_id: pp.e_id, label: pp.label.clone(), binding }])
            }
        }
    }

    fn registration_row(role: Role) -> Option<CostItem> {
        match role {
            Role::Tpa => Some(CostItem::RegisterAuthority),
            Role::DataOwner => Some(CostItem::RegisterActorDataOwner),
            Role::DataUser => Some(CostItem::RegisterActorDataUser),
            Role::Monitor => Some(CostItem::RegisterMonitor),
            Role::Administrator => None,
        }
    }

    fn all_shares_paid(&self, reg: &RegistrationSnapshot) -> bool {
        reg.users.iter().all(|u| self.share_paid.contains(u))
    }

    fn reward_register_cost(&mut self, sender: EntityId, role: Role) -> Result<Vec<Event>, ContractError> {
        let reg = self.registration.as_ref().filter(|_| !self.enrollment_open);
        let Some(reg) = reg else {
            return Err(ContractError::WrongPhase);
        };
        if self.reward_claimed.contains(&sender) {
            return Err(ContractError::AlreadyClaimed);
        }
        if reg.tpa != Some(sender) && !reg.owners.contains(&sender) {
            return Err(ContractError::WrongPhase);
        }
        if !self.all_shares_paid(reg) {
            return Err(ContractError::PoolUnfunded);
        }
        let item = Self::registration_row(role).expect("payee role");
        let amount = self.cost_model.get(item);
        if self.contract_pool < amount {
            return Err(ContractError::PoolUnfunded);
        }
        self.contract_pool -= amount;
        credit(&mut self.balances, sender, amount);
        self.reward_claimed.insert(sender);
        Ok(vec![Event::RewardPaid { e_id: sender, item, amount }])
    }

    /// Registration rewards not yet claimed by the parties entitled to them.
    pub fn reserved_rewards(&self) -> TokenAmount {
        let Some(reg) = &self.registration else {
            return 0;
        };
        let tpa = reg.tpa.iter().map(|id| (id, CostItem::RegisterAuthority));
        let owners = reg.owners.iter().map(|id| (id, CostItem::RegisterActorDataOwner));
        tpa.chain(owners)
            .filter(|(id, _)| !self.reward_claimed.contains(id) && !self.exited.contains(id))
            .map(|(_, item)| self.cost_model.get(item))
            .sum()
    }

    fn reward_deployment_cost(&mut self, sender: EntityId) -> Result<Vec<Event>, ContractError> {
        let reg = self.registration.as_ref().filter(|_| !self.enrollment_open);
        let Some(reg) = reg else {
            return Err(ContractError::WrongPhase);
        };
        if self.deployment_claimed {
            return Err(ContractError::AlreadyClaimed);
        }
        if !self.all_shares_paid(reg) {
            return Err(ContractError::PoolUnfunded);
        }
        let surplus = self.contract_pool.saturating_sub(self.reserved_rewards());
        let amount = surplus.min(self.cost_model.get(CostItem::Deployment));
        if amount == 0 {
            return Err(ContractError::PoolUnfunded);
        }
        self.contract_pool -= amount;
        credit(&mut self.balances, sender, amount);
        self.deployment_claimed = true;
        Ok(vec![Event::RewardPaid { e_id: sender, item: CostItem::Deployment, amount }])
    }

    pub fn has_open_obligations(&self, id: &EntityId) -> bool {
        self.ks_obligations.values().any(|o| o.status.is_open() && (o.requester == *id || o.tpa == *id))
    }

    fn dropout(&mut self, sender: EntityId, role: Role) -> Result<Vec<Event>, ContractError> {
        if self.has_open_obligations(&sender) {
            return Err(ContractError::OpenObligations);
        }
        let payout = self.balances.remove(&sender).unwrap_or(0) + self.guarantee_deposits.remove(&sender).unwrap_or(0);
        self.withdrawn += payout;
        let mut events = Vec::new();
        if role == Role::Administrator {
            let previous = self.owner.take();
            events.push(Event::OwnershipTransferred { previous, new_owner: None });
        } else {
            self.roles.remove(&sender);
            if self.tpa == Some(sender) {
                self.tpa = None;
            }
        }
        self.exited.insert(sender);
        events.push(Event::DroppedOut { e_id: sender, payout });
        Ok(events)
    }

    fn check_vector(&self, user: &EntityId, y: &[i64]) -> Result<(), ContractError> {
        let n = self.registration.as_ref().map_or(0, |r| r.owners.len());
        if y.len() != n {
            return Err(ContractError::DimensionMismatch { expected: n, found: y.len() });
        }
        let bound = self.params.fe_bound;
        if let Some((index, value)) = y.iter().enumerate().find(|(_, v)| v.unsigned_abs() > bound) {
            return Err(ContractError::EntryOutOfBound { index, value: *value, bound });
        }
        let history = self.ipm_history.get(user).map(Vec::as_slice).unwrap_or(&[]);
        match ipm::check(history, y, n, self.params.k_min) {
            IpmDecision::Accept => Ok(()),
            IpmDecision::Reject(reason) => Err(ContractError::IpmRejected(reason)),
        }
    }

    fn record_req(&mut self, ctx: &CallContext, role: Role, req: &SnapshotReq) -> Result<Vec<Event>, ContractError> {
        if !self.is_locked() {
            return Err(ContractError::WrongPhase);
        }
        let tpa = self.tpa.ok_or(ContractError::NoTpa)?;
        let sender = ctx.sender;
        if role == Role::DataUser && self.deposit(&sender) == 0 {
            return Err(ContractError::NoGuarantee);
        }
        let pk = self.identity_key(&sender).ok_or(ContractError::NotRegistered)?;
        if !req.verifies_under(&pk) {
            return Err(ContractError::BadSignature);
        }
        if req.t != ctx.now {
            return Err(ContractError::TimestampMismatch { claimed: req.t, now: ctx.now });
        }
        let key = obligation_key(&sender, &tpa, &req.r);
        if self.ks_obligations.contains_key(&key) {
            return Err(ContractError::DuplicateNonce);
        }
        if let KeyServicePayload::Vector(y) = &req.f {
            self.check_vector(&sender, y)?;
            self.ipm_history.entry(sender).or_default().push(y.clone());
        }
        self.ks_obligations.insert(
            key,
            ObligationKS {
                key,
                requester: sender,
                tpa,
                req: req.clone(),
                resp: None,
                confirm: None,
                status: ObligationStatus::Requested,
                late: false,
                settlement: None,
            },
        );
        Ok(vec![Event::KsRequested {
            key,
            requester: sender,
            tpa,
            r: req.r,
            t: req.t,
            pk_service: req.f.is_public_key_service(),
        }])
    }

    fn record_resp(
        &mut self,
        ctx: &CallContext,
        requester: &EntityId,
        resp: &SnapshotResp,
    ) -> Result<Vec<Event>, ContractError> {
        if !self.is_locked() {
            return Err(ContractError::WrongPhase);
        }
        let sender = ctx.sender;
        if self.deposit(&sender) == 0 {
            return Err(ContractError::NoGuarantee);
        }
        let key = obligation_key(requester, &sender, &resp.r);
        let pk = self.identity_key(&sender).ok_or(ContractError::NotRegistered)?;
        let delta_t = self.params.delta_t;
        let ob = self.ks_obligations.get_mut(&key).ok_or(ContractError::UnknownObligation)?;
        if ob.status != ObligationStatus::Requested {
            return Err(ContractError::WrongStatus);
        }
        if !resp.verifies_under(&pk) {
            return Err(ContractError::BadSignature);
        }
        if resp.t <= ob.req.t {
            return Err(ContractError::TimestampOrder);
        }
        if resp.t != ctx.now {
            return Err(ContractError::TimestampMismatch { claimed: resp.t, now: ctx.now });
        }
        if resp.refused && resp.sigma != refusal_digest(&ob.req.f) {
            return Err(ContractError::BadRefusalDigest);
        }
        ob.status = if resp.refused { ObligationStatus::Refused } else { ObligationStatus::Responded };
        ob.late = resp.t - ob.req.t >= delta_t;
        ob.resp = Some(resp.clone());
        let mut events = vec![Event::KsResponded { key, tpa: sender, refused: resp.refused, t: resp.t }];
        if ob.late {
            events.push(Event::KsLateResponse { key, req_t: ob.req.t, resp_t: resp.t });
        }
        Ok(events)
    }

    fn record_confirm(
        &mut self,
        ctx: &CallContext,
        key: &Digest,
        confirm: &SnapshotConfirm,
    ) -> Result<Vec<Event>, ContractError> {
        let sender = ctx.sender;
        let pk = self.identity_key(&sender).ok_or(ContractError::NotRegistered)?;
        let ob = self.ks_obligations.get_mut(key).ok_or(ContractError::UnknownObligation)?;
        if ob.requester != sender {
            return Err(ContractError::WrongCaller);
        }
        if ob.status != ObligationStatus::Responded {
            return Err(ContractError::WrongStatus);
        }
        if confirm.r != ob.req.r {
            return Err(ContractError::UnknownObligation);
        }
        if !confirm.verifies_under(&pk) {
            return Err(ContractError::BadSignature);
        }
        if confirm.t != ctx.now {
            return Err(ContractError::TimestampMismatch { claimed: confirm.t, now: ctx.now });
        }
        let served = ob.resp.as_ref().map(|r| r.sigma);
        ob.confirm = Some(confirm.clone());
        if served == Some(confirm.sigma_received) {
            ob.status = ObligationStatus::Confirmed;
            Ok(vec![Event::KsConfirmed { key: *key, requester: sender }])
        } else {
            ob.status = ObligationStatus::Disputed;
            Ok(vec![Event::KsDisputed { key: *key, requester: sender, tpa: ob.tpa }])
        }
    }

    /// Removes up to `amount` from the party's deposit, then its balance.
    fn take(&mut self, party: &EntityId, amount: TokenAmount) -> TokenAmount {
        let mut left = amount;
        for map in [&mut self.guarantee_deposits, &mut self.balances] {
            if let Some(held) = map.get_mut(party) {
                let t = left.min(*held);
                *held -= t;
                left -= t;
                if *held == 0 {
                    map.remove(party);
                }
            }
        }
        amount - left
    }

    fn inspect_ks(&mut self, ctx: &CallContext, key: &Digest) -> Result<Vec<Event>, ContractError> {
        let ob = self.ks_obligations.get(key).ok_or(ContractError::UnknownObligation)?;
        let verdict = ob.verdict(ctx.now, self.params.delta_t);
        let (requester, tpa, settled) = (ob.requester, ob.tpa, ob.settlement.is_some());
        let mut events = vec![Event::KsInspected { key: *key, verdict }];
        if verdict == KsVerdict::Healthy || settled {
            return Ok(events);
        }
        let monitor = ctx.sender;
        let fine = self.params.fine;
        let mut debits = Vec::new();
        match verdict {
            KsVerdict::Disputed => {
                for party in [tpa, requester] {
                    let amount = self.take(&party, fine);
                    self.escrow += amount;
                    debits.push((party, amount));
                    events.push(Event::Escrowed { key: *key, party, amount });
                }
            }
            _ => {
                let party = if verdict == KsVerdict::UnconfirmedService { requester } else { tpa };
                let amount = self.take(&party, fine);
                credit(&mut self.balances, monitor, amount);
                debits.push((party, amount));
                events.push(Event::Fined {
                    subject: *key,
                    party,
                    monitor,
                    amount,
                    cause: verdict_cause(verdict).to_string(),
                });
            }
        }
        let ob = self.ks_obligations.get_mut(key).expect("checked above");
        ob.settlement = Some(Settlement { verdict, monitor, at: ctx.now, debits });
        Ok(events)
    }

    /// Verdict on a binding, without side effects.
    pub fn pp_verdict(&self, e_id: &EntityId, label: &str) -> PpVerdict {
        let binding = binding_key(e_id, label);
        if self.pp_conflicts.get(&binding).is_some_and(|c| !c.is_empty()) {
            return PpVerdict::ConflictingBindings;
        }
        let Some(pp) = self.pp_obligations.get(&binding) else {
            return PpVerdict::Missing;
        };
        let valid = if pp.is_identity() {
            pp.self_verifies() && pp.identity_key().map(|k| EntityId::from_public_key(&k)) == Some(*e_id)
        } else {
            self.identity_key(e_id).is_some_and(|pk| pp.verifies_under(&pk))
        };
        if valid && pp.e_id == *e_id {
            PpVerdict::Valid
        } else {
            PpVerdict::BadBinding
        }
    }

    fn inspect_pp(&mut self, monitor: EntityId, e_id: &EntityId, label: &str) -> Vec<Event> {
        let binding = binding_key(e_id, label);
        let verdict = self.pp_verdict(e_id, label);
        let mut events = vec![Event::PpInspected { binding, e_id: *e_id, label: label.to_string(), verdict }];
        if verdict != PpVerdict::ConflictingBindings {
            return events;
        }
        let publishers: Vec<(usize, EntityId)> = self.pp_conflicts[&binding]
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.fined)
            .map(|(i, c)| (i, c.publisher))
            .collect();
        for (i, party) in publishers {
            let amount = self.take(&party, self.params.fine);
            credit(&mut self.balances, monitor, amount);
            self.pp_conflicts.get_mut(&binding).unwrap()[i].fined = true;
            events.push(Event::Fined {
                subject: binding,
                party,
                monitor,
                amount,
                cause: "conflicting_bindings".into(),
            });
        }
        events
    }
}

pub fn verdict_cause(verdict: KsVerdict) -> &'static str {
    match verdict {
        KsVerdict::Healthy => "healthy",
        KsVerdict::CensorshipSuspected => "censorship_suspected",
        KsVerdict::UnconfirmedService => "unconfirmed_service",
        KsVerdict::Disputed => "disputed",
        KsVerdict::TimestampViolation => "timestamp_violation",
    }
}

/// The permission table for registered callers.
pub fn permitted(call: &Call, role: Role) -> bool {
    use Role::*;
    match call {
        Call::PublishBinding(_) => matches!(role, Tpa | DataOwner | DataUser | Monitor),
        Call::DepositGuarantee => matches!(role, Tpa | DataUser),
        Call::PayRegistrationShare => role == DataUser,
        Call::RewardRegisterCost => matches!(role, Tpa | DataOwner),
        Call::Dropout => true,
        Call::RecordKSReq(req) => match req.f {
            KeyServicePayload::PublicKeyRequest => role == DataOwner,
            _ => role == DataUser,
        },
        Call::RecordKSResp { .. } => role == Tpa,
        Call::RecordKSConfirm { .. } => matches!(role, DataOwner | DataUser),
        Call::InspectObligationKS { .. } | Call::InspectObligationPP { .. } => role == Monitor,
        _ => role == Administrator,
    }
}
