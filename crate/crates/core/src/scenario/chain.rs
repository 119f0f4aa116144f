//! Report figures recomputed from blocks alone, without the contract state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::Canonical;
use crate::contract::{
    base_cost_item, verdict_cause, Call, CostItem, CostModel, Event, KsVerdict, ObligationStatus, Params, PpVerdict,
    Role,
};
use crate::crypto::{hash, Digest, EntityId, Nonce};
use crate::ledger::Block;

use super::ScenarioError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasTally {
    pub calls: u64,
    pub reverted: u64,
    pub gas: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub role: Option<Role>,
    pub paid_in: u64,
    pub gas: u64,
    pub balance: u64,
    pub deposit: u64,
    pub withdrawn: u64,
    pub rewards: u64,
    pub fined: u64,
    pub escrowed: u64,
    pub exited: bool,
}

impl Account {
    /// Deposit first, then balance; returns what could not be covered.
    fn take(&mut self, amount: u64) -> u64 {
        let from_deposit = amount.min(self.deposit);
        self.deposit -= from_deposit;
        let from_balance = (amount - from_deposit).min(self.balance);
        self.balance -= from_balance;
        amount - from_deposit - from_balance
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationRecord {
    pub key: Digest,
    pub requester: EntityId,
    pub tpa: EntityId,
    pub pk_service: bool,
    pub status: ObligationStatus,
    pub late: bool,
    pub req_t: u64,
    pub resp_t: Option<u64>,
    /// Most recent inspection verdict.
    pub verdict: Option<KsVerdict>,
    pub settlements: u64,
    /// Set if events arrived in an order the lifecycle does not allow.
    pub out_of_order: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    /// `ks`, `pp` or `ipm`.
    pub kind: String,
    pub subject: Digest,
    pub party: EntityId,
    pub cause: String,
    pub monitor: Option<EntityId>,
    pub fine: u64,
    pub escrowed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub admin: EntityId,
    pub params: Params,
    pub cost_model: CostModel,
    pub blocks: u64,
    pub transactions: u64,
    pub reverted: u64,
    pub gas_total: u64,
    pub gas: BTreeMap<CostItem, GasTally>,
    /// Receipts whose gas differs from the deployed schedule.
    pub gas_mismatches: u64,
    pub accounts: BTreeMap<EntityId, Account>,
    pub paid_in: u64,
    pub pool: u64,
    pub escrow: u64,
    pub withdrawn: u64,
    /// `(owners, users, total_cost, share)` at lock time.
    pub registration: Option<(u64, u64, u64, u64)>,
    pub obligations: Vec<ObligationRecord>,
    pub detections: Vec<Detection>,
    /// Debits or payouts the recomputed accounts could not cover.
    pub accounting_anomalies: u64,
    /// Fines charged twice for the same subject and party.
    pub repeated_fines: u64,
}

impl ChainSummary {
    pub fn total_held(&self) -> u64 {
        self.pool + self.escrow + self.withdrawn + self.accounts.values().map(|a| a.balance + a.deposit).sum::<u64>()
    }

    pub fn conserves(&self) -> bool {
        self.accounting_anomalies == 0 && self.total_held() == self.paid_in
    }

    pub fn fines_charged(&self) -> u64 {
        self.accounts.values().map(|a| a.fined).sum()
    }

    pub fn read(blocks: &[Block]) -> Result<Self, ScenarioError> {
        let bad = |m: &str| ScenarioError::Chain(m.to_string());
        let genesis = blocks.first().ok_or_else(|| bad("empty chain"))?;
        let deploy = genesis.transactions.first().ok_or_else(|| bad("genesis has no deployment"))?;
        let Ok(Call::Deploy { params, cost_model }) = deploy.call() else {
            return Err(bad("genesis transaction is not a deployment"));
        };
        let mut reader = Reader {
            s: ChainSummary {
                admin: deploy.sender,
                params,
                cost_model,
                blocks: blocks.len() as u64,
                transactions: 0,
                reverted: 0,
                gas_total: 0,
                gas: CostItem::ALL.iter().map(|c| (*c, GasTally::default())).collect(),
                gas_mismatches: 0,
                accounts: BTreeMap::new(),
                paid_in: 0,
                pool: 0,
                escrow: 0,
                withdrawn: 0,
                registration: None,
                obligations: Vec::new(),
                detections: Vec::new(),
                accounting_anomalies: 0,
                repeated_fines: 0,
            },
            by_key: BTreeMap::new(),
            by_request: BTreeMap::new(),
            conflicts: BTreeMap::new(),
            detection_index: BTreeMap::new(),
            fined: BTreeMap::new(),
        };
        for block in blocks {
            if block.transactions.len() != block.receipts.len() {
                return Err(bad("receipt count differs from transaction count"));
            }
            for (tx, receipt) in block.transactions.iter().zip(&block.receipts) {
                reader.transaction(tx, receipt);
            }
        }
        Ok(reader.s)
    }
}

struct Reader {
    s: ChainSummary,
    by_key: BTreeMap<Digest, usize>,
    by_request: BTreeMap<(EntityId, Nonce), usize>,
    conflicts: BTreeMap<Digest, Vec<EntityId>>,
    detection_index: BTreeMap<(String, Digest, EntityId), usize>,
    fined: BTreeMap<(Digest, EntityId), u64>,
}

impl Reader {
    fn account(&mut self, id: EntityId) -> &mut Account {
        self.s.accounts.entry(id).or_default()
    }

    fn row_for(&self, function: crate::contract::FunctionName, call: Option<&Call>) -> CostItem {
        match call {
            Some(Call::RecordKSReq(req)) if req.f.is_public_key_service() => CostItem::RecordKSPKReq,
            Some(Call::RecordKSResp { requester, resp }) => {
                let pk = self.by_request.get(&(*requester, resp.r)).is_some_and(|i| self.s.obligations[*i].pk_service);
                if pk {
                    CostItem::RecordKSPKResp
                } else {
                    CostItem::RecordKSSKResp
                }
            }
            _ => base_cost_item(function),
        }
    }

    fn detect(
        &mut self,
        kind: &str,
        subject: Digest,
        party: EntityId,
        cause: &str,
        monitor: Option<EntityId>,
    ) -> usize {
        let key = (kind.to_string(), subject, party);
        if let Some(i) = self.detection_index.get(&key) {
            return *i;
        }
        self.s.detections.push(Detection {
            kind: kind.into(),
            subject,
            party,
            cause: cause.into(),
            monitor,
            fine: 0,
            escrowed: 0,
        });
        let i = self.s.detections.len() - 1;
        self.detection_index.insert(key, i);
        i
    }

    fn transaction(&mut self, tx: &crate::ledger::Transaction, receipt: &crate::ledger::Receipt) {
        let call = tx.call().ok();
        let row = self.row_for(tx.function, call.as_ref());
        let tally = self.s.gas.entry(row).or_default();
        tally.calls += 1;
        tally.gas += receipt.gas_used;
        if receipt.gas_used != self.s.cost_model.get(row) {
            self.s.gas_mismatches += 1;
        }
        self.s.transactions += 1;
        self.s.gas_total += receipt.gas_used;
        self.account(tx.sender).gas += receipt.gas_used;
        if !receipt.is_success() {
            self.s.gas.entry(row).or_default().reverted += 1;
            self.s.reverted += 1;
            if receipt.revert_code() == Some("IpmRejected") {
                self.detect("ipm", hash(&tx.to_canonical()), tx.sender, "inference_attempt", None);
            }
            return;
        }
        self.s.paid_in += tx.value;
        self.account(tx.sender).paid_in += tx.value;
        for event in receipt.decoded_events() {
            self.event(tx.sender, event);
        }
    }

    fn debit(&mut self, party: EntityId, amount: u64) {
        if self.account(party).take(amount) != 0 {
            self.s.accounting_anomalies += 1;
        }
    }

    fn event(&mut self, sender: EntityId, event: Event) {
        match event {
            Event::Deployed { owner } => self.account(owner).role = Some(Role::Administrator),
            Event::Registered { e_id, role, .. } => self.account(e_id).role = Some(role),
            Event::EnrollmentLocked { owners, users, total_cost, share } => {
                self.s.registration = Some((owners, users, total_cost, share));
            }
            Event::GuaranteeDeposited { e_id, amount } => self.account(e_id).deposit += amount,
            Event::SharePaid { amount, .. } => self.s.pool += amount,
            Event::RewardPaid { e_id, amount, .. } => {
                if self.s.pool < amount {
                    self.s.accounting_anomalies += 1;
                }
                self.s.pool = self.s.pool.saturating_sub(amount);
                let a = self.account(e_id);
                a.balance += amount;
                a.rewards += amount;
            }
            Event::DroppedOut { e_id, payout } => {
                let a = self.account(e_id);
                let held = a.balance + a.deposit;
                a.balance = 0;
                a.deposit = 0;
                a.withdrawn += payout;
                a.exited = true;
                if held != payout {
                    self.s.accounting_anomalies += 1;
                }
                self.s.withdrawn += payout;
            }
            Event::BindingConflict { binding, publisher, .. } => {
                self.conflicts.entry(binding).or_default().push(publisher);
            }
            Event::KsRequested { key, requester, tpa, r, t, pk_service } => {
                self.s.obligations.push(ObligationRecord {
                    key,
                    requester,
                    tpa,
                    pk_service,
                    status: ObligationStatus::Requested,
                    late: false,
                    req_t: t,
                    resp_t: None,
                    verdict: None,
                    settlements: 0,
                    out_of_order: false,
                });
                let i = self.s.obligations.len() - 1;
                self.by_key.insert(key, i);
                self.by_request.insert((requester, r), i);
            }
            Event::KsResponded { key, refused, t, .. } => {
                if let Some(ob) = self.obligation(&key) {
                    ob.out_of_order |= ob.status != ObligationStatus::Requested || t <= ob.req_t;
                    ob.status = if refused { ObligationStatus::Refused } else { ObligationStatus::Responded };
                    ob.resp_t = Some(t);
                }
            }
            Event::KsLateResponse { key, .. } => {
                if let Some(ob) = self.obligation(&key) {
                    ob.late = true;
                }
            }
            Event::KsConfirmed { key, .. } | Event::KsDisputed { key, .. } => {
                let disputed = matches!(event, Event::KsDisputed { .. });
                if let Some(ob) = self.obligation(&key) {
                    ob.out_of_order |= ob.status != ObligationStatus::Responded;
                    ob.status = if disputed { ObligationStatus::Disputed } else { ObligationStatus::Confirmed };
                }
            }
            Event::KsInspected { key, verdict } => {
                let Some(ob) = self.obligation(&key) else { return };
                ob.verdict = Some(verdict);
                let (requester, tpa) = (ob.requester, ob.tpa);
                let parties = match verdict {
                    KsVerdict::Healthy => vec![],
                    KsVerdict::UnconfirmedService => vec![requester],
                    KsVerdict::Disputed => vec![tpa, requester],
                    KsVerdict::CensorshipSuspected | KsVerdict::TimestampViolation => vec![tpa],
                };
                for p in parties {
                    self.detect("ks", key, p, verdict_cause(verdict), Some(sender));
                }
            }
            Event::PpInspected { binding, verdict, .. } => {
                if verdict == PpVerdict::ConflictingBindings {
                    for p in self.conflicts.get(&binding).cloned().unwrap_or_default() {
                        self.detect("pp", binding, p, "conflicting_bindings", Some(sender));
                    }
                }
            }
            Event::Fined { subject, party, monitor, amount, cause } => {
                self.debit(party, amount);
                self.account(party).fined += amount;
                self.account(monitor).balance += amount;
                let n = self.fined.entry((subject, party)).or_default();
                *n += 1;
                if *n > 1 {
                    self.s.repeated_fines += 1;
                }
                let kind = if self.by_key.contains_key(&subject) { "ks" } else { "pp" };
                let i = self.detect(kind, subject, party, &cause, Some(monitor));
                self.s.detections[i].fine += amount;
                if let Some(ob) = self.obligation(&subject) {
                    ob.settlements += 1;
                }
            }
            Event::Escrowed { key, party, amount } => {
                self.debit(party, amount);
                self.account(party).escrowed += amount;
                self.s.escrow += amount;
                let i = self.detect("ks", key, party, "disputed", Some(sender));
                self.s.detections[i].escrowed += amount;
                if let Some(ob) = self.obligation(&key) {
                    // two escrow events make one settlement
                    if party == ob.tpa {
                        ob.settlements += 1;
                    }
                }
            }
            Event::EnrollmentOpened | Event::OwnershipTransferred { .. } | Event::BindingPublished { .. } => {}
        }
    }

    fn obligation(&mut self, key: &Digest) -> Option<&mut ObligationRecord> {
        self.by_key.get(key).map(|i| &mut self.s.obligations[*i])
    }
}
