use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::actors::QueryOutcome;
use crate::contract::{CostItem, KsVerdict, ObligationStatus, Role};
use crate::crypto::{hash, Digest, EntityId};
use crate::ledger::{export_chain, verify_chain, Block, Ledger};

use super::chain::ChainSummary;
use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasRow {
    pub function: CostItem,
    pub description: String,
    pub unit_gas: u64,
    pub calls: u64,
    pub reverted: u64,
    pub total_gas: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRow {
    pub owners: u64,
    pub users: u64,
    pub total_cost: u64,
    pub share: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRow {
    pub label: String,
    pub id: EntityId,
    pub role: Option<Role>,
    pub paid_in: u64,
    pub gas: u64,
    pub rewards: u64,
    pub fined: u64,
    pub escrowed: u64,
    pub balance: u64,
    pub deposit: u64,
    pub withdrawn: u64,
    pub exited: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationRow {
    pub key: Digest,
    pub requester: String,
    pub service: String,
    pub status: ObligationStatus,
    pub verdict: Option<KsVerdict>,
    pub late: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub party: String,
    pub cause: String,
    pub fine: u64,
    pub escrowed: u64,
    pub kind: String,
    pub subject: Digest,
    pub monitor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conservation {
    pub paid_in: u64,
    pub pool: u64,
    pub balances: u64,
    pub deposits: u64,
    pub escrow: u64,
    pub withdrawn: u64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub holds: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl InvariantCheck {
    pub fn new(name: &str, holds: bool, detail: impl Into<String>) -> Self {
        let detail = if holds { String::new() } else { detail.into() };
        Self { name: name.into(), holds, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub micros: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub passed: bool,
    /// `None` when the scenario states no expectation.
    pub expectation_met: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expectation_diff: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violated: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: String,
    pub outcome: Outcome,
    pub blocks: u64,
    pub transactions: u64,
    pub reverted: u64,
    pub gas_total: u64,
    pub gas: Vec<GasRow>,
    pub registration: Option<RegistrationRow>,
    pub entities: Vec<EntityRow>,
    pub obligations: Vec<ObligationRow>,
    pub detections: Vec<DetectionRow>,
    pub conservation: Conservation,
    #[serde(default)]
    pub queries: Vec<QueryOutcome>,
    pub invariants: Vec<InvariantCheck>,
    pub chain_digest: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<PhaseTiming>>,
}

pub fn chain_digest(blocks: &[Block]) -> Digest {
    hash(export_chain(blocks).as_bytes())
}

/// Names entities by harness label where known, else by short id.
pub struct Labels(pub BTreeMap<EntityId, String>);

impl Labels {
    pub fn name(&self, id: &EntityId) -> String {
        self.0.get(id).cloned().unwrap_or_else(|| id.short())
    }
}

/// Checks that need nothing beyond the chain itself.
pub fn chain_invariants(blocks: &[Block], summary: &ChainSummary) -> Vec<InvariantCheck> {
    let verified = verify_chain(blocks);
    let replay = Ledger::replay(blocks);
    let out_of_order: Vec<String> =
        summary.obligations.iter().filter(|o| o.out_of_order).map(|o| o.key.short()).collect();
    let resettled: Vec<String> =
        summary.obligations.iter().filter(|o| o.settlements > 1).map(|o| o.key.short()).collect();
    vec![
        InvariantCheck::new("chain_consistent", verified.is_consistent(), format!("{verified:?}")),
        InvariantCheck::new(
            "replay_reproduces_chain",
            replay.is_ok(),
            replay.err().map(|e| e.to_string()).unwrap_or_default(),
        ),
        InvariantCheck::new(
            "gas_matches_schedule",
            summary.gas_mismatches == 0,
            format!("{} receipts off schedule", summary.gas_mismatches),
        ),
        InvariantCheck::new(
            "conservation",
            summary.conserves(),
            format!(
                "paid in {} vs held {} with {} anomalies",
                summary.paid_in,
                summary.total_held(),
                summary.accounting_anomalies
            ),
        ),
        InvariantCheck::new("status_monotone", out_of_order.is_empty(), out_of_order.join(",")),
        InvariantCheck::new(
            "fines_settle_once",
            resettled.is_empty() && summary.repeated_fines == 0,
            format!("resettled {resettled:?}, repeated fines {}", summary.repeated_fines),
        ),
    ]
}

impl ScenarioReport {
    /// Builds every chain-derived section. Run-specific parts (queries,
    /// harness invariants, the outcome) are left for the caller.
    pub fn from_chain(name: &str, seed: &str, blocks: &[Block], labels: &Labels) -> Result<Self, ScenarioError> {
        let s = ChainSummary::read(blocks)?;
        let gas = CostItem::ALL
            .iter()
            .map(|item| {
                let t = s.gas.get(item).cloned().unwrap_or_default();
                GasRow {
                    function: *item,
                    description: item.describe().to_string(),
                    unit_gas: s.cost_model.get(*item),
                    calls: t.calls,
                    reverted: t.reverted,
                    total_gas: t.gas,
                }
            })
            .collect();
        let entities = s
            .accounts
            .iter()
            .map(|(id, a)| EntityRow {
                label: labels.name(id),
                id: *id,
                role: a.role,
                paid_in: a.paid_in,
                gas: a.gas,
                rewards: a.rewards,
                fined: a.fined,
                escrowed: a.escrowed,
                balance: a.balance,
                deposit: a.deposit,
                withdrawn: a.withdrawn,
                exited: a.exited,
            })
            .collect();
        let obligations = s
            .obligations
            .iter()
            .map(|o| ObligationRow {
                key: o.key,
                requester: labels.name(&o.requester),
                service: if o.pk_service { "pk" } else { "sk" }.into(),
                status: o.status,
                verdict: o.verdict,
                late: o.late,
            })
            .collect();
        let detections = s
            .detections
            .iter()
            .map(|d| DetectionRow {
                party: labels.name(&d.party),
                cause: d.cause.clone(),
                fine: d.fine,
                escrowed: d.escrowed,
                kind: d.kind.clone(),
                subject: d.subject,
                monitor: d.monitor.as_ref().map(|m| labels.name(m)),
            })
            .collect();
        let conservation = Conservation {
            paid_in: s.paid_in,
            pool: s.pool,
            balances: s.accounts.values().map(|a| a.balance).sum(),
            deposits: s.accounts.values().map(|a| a.deposit).sum(),
            escrow: s.escrow,
            withdrawn: s.withdrawn,
            holds: s.conserves(),
        };
        let invariants = chain_invariants(blocks, &s);
        let mut report = Self {
            name: name.to_string(),
            seed: seed.to_string(),
            outcome: Outcome { passed: false, expectation_met: None, expectation_diff: vec![], violated: vec![] },
            blocks: s.blocks,
            transactions: s.transactions,
            reverted: s.reverted,
            gas_total: s.gas_total,
            gas,
            registration: s.registration.map(|(owners, users, total_cost, share)| RegistrationRow {
                owners,
                users,
                total_cost,
                share,
            }),
            entities,
            obligations,
            detections,
            conservation,
            queries: Vec::new(),
            invariants,
            chain_digest: chain_digest(blocks),
            timings: None,
        };
        report.settle_outcome(None);
        Ok(report)
    }

    /// Recomputes `outcome` from the invariants and an optional expectation result.
    pub fn settle_outcome(&mut self, expectation: Option<Vec<String>>) {
        let violated: Vec<String> = self.invariants.iter().filter(|c| !c.holds).map(|c| c.name.clone()).collect();
        let expectation_met = expectation.as_ref().map(Vec::is_empty);
        self.outcome = Outcome {
            passed: violated.is_empty() && expectation_met != Some(false),
            expectation_met,
            expectation_diff: expectation.unwrap_or_default(),
            violated,
        };
    }

    pub fn gas_row(&self, item: CostItem) -> Option<&GasRow> {
        self.gas.iter().find(|r| r.function == item)
    }

    pub fn entity(&self, label: &str) -> Option<&EntityRow> {
        self.entities.iter().find(|e| e.label == label)
    }

    pub fn invariant(&self, name: &str) -> Option<&InvariantCheck> {
        self.invariants.iter().find(|c| c.name == name)
    }

    /// `(cause, party) → count` over all detections.
    pub fn detection_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut out = BTreeMap::new();
        for d in &self.detections {
            *out.entry((d.cause.clone(), d.party.clone())).or_default() += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(format!("unknown report format {other}")),
        }
    }
}

/// Serializes a report. CSV carries only the gas table, one row per schedule row.
pub fn emit_report(report: &ScenarioReport, format: ReportFormat) -> Result<String, ScenarioError> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| ScenarioError::Io(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| ScenarioError::Io(e.to_string());
            w.write_record(["function", "description", "unit_gas", "calls", "reverted", "total_gas"]).map_err(io)?;
            for r in &report.gas {
                w.write_record([
                    r.function.name().to_string(),
                    r.description.clone(),
                    r.unit_gas.to_string(),
                    r.calls.to_string(),
                    r.reverted.to_string(),
                    r.total_gas.to_string(),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| ScenarioError::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| ScenarioError::Io(e.to_string()))
        }
        ReportFormat::Table => Ok(table(report)),
    }
}

fn table(r: &ScenarioReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}  seed {}", r.name, r.seed);
    let _ = writeln!(
        out,
        "{} blocks, {} transactions ({} reverted), {} gas, chain {}",
        r.blocks, r.transactions, r.reverted, r.gas_total, r.chain_digest
    );
    let _ = writeln!(out, "\n{:<24} {:>10} {:>6} {:>6} {:>12}", "function", "unit gas", "calls", "revert", "total gas");
    for g in &r.gas {
        let _ = writeln!(
            out,
            "{:<24} {:>10} {:>6} {:>6} {:>12}",
            g.function.name(),
            g.unit_gas,
            g.calls,
            g.reverted,
            g.total_gas
        );
    }
    if let Some(reg) = &r.registration {
        let _ = writeln!(
            out,
            "\nregistration: {} owners, {} users, total {}, share {}",
            reg.owners, reg.users, reg.total_cost, reg.share
        );
    }
    let _ = writeln!(
        out,
        "\n{:<12} {:<14} {:>10} {:>10} {:>9} {:>9} {:>10} {:>10}",
        "entity", "role", "paid in", "gas", "rewards", "fined", "balance", "withdrawn"
    );
    for e in &r.entities {
        let role = e.role.map(|r| format!("{r:?}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<12} {:<14} {:>10} {:>10} {:>9} {:>9} {:>10} {:>10}",
            e.label,
            role,
            e.paid_in,
            e.gas,
            e.rewards,
            e.fined,
            e.balance + e.deposit,
            e.withdrawn
        );
    }
    let _ = writeln!(out, "\nobligations: {}", r.obligations.len());
    for o in &r.obligations {
        let verdict = o.verdict.map(|v| format!("{v:?}")).unwrap_or_else(|| "uninspected".into());
        let _ = writeln!(out, "  {} {:<10} {} {:?} {}", o.key.short(), o.requester, o.service, o.status, verdict);
    }
    let _ = writeln!(out, "\ndetections: {}", r.detections.len());
    for d in &r.detections {
        let _ = writeln!(out, "  {:<10} {:<22} fine {:>7} escrow {:>7}", d.party, d.cause, d.fine, d.escrowed);
    }
    let c = &r.conservation;
    let _ = writeln!(
        out,
        "\nconservation: paid in {} = pool {} + balances {} + deposits {} + escrow {} + withdrawn {} ({})",
        c.paid_in,
        c.pool,
        c.balances,
        c.deposits,
        c.escrow,
        c.withdrawn,
        if c.holds { "ok" } else { "VIOLATED" }
    );
    for q in &r.queries {
        let _ = writeln!(
            out,
            "query {} {:?}: {:?} result {:?} expected {:?}",
            q.actor, q.payload, q.status, q.result, q.expected
        );
    }
    let _ = writeln!(out);
    for i in &r.invariants {
        let _ = writeln!(
            out,
            "{} {}{}",
            if i.holds { "ok  " } else { "FAIL" },
            i.name,
            if i.detail.is_empty() { String::new() } else { format!(": {}", i.detail) }
        );
    }
    if let Some(t) = &r.timings {
        for p in t {
            let _ = writeln!(out, "time {:<12} {:>9} us", p.phase, p.micros);
        }
    }
    let _ = writeln!(out, "outcome: {}", if r.outcome.passed { "PASS" } else { "FAIL" });
    out
}
