//! Scripted end-to-end runs and their reports.

mod chain;
mod config;
mod report;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actors::{HarnessError, SweepEntry, World};
use crate::contract::ipm;
use crate::contract::ObligationStatus;
use crate::crypto::EntityId;
use crate::ledger::{Block, LedgerError};

pub use chain::{Account, ChainSummary, Detection, GasTally, ObligationRecord};
pub use config::{Expectation, ExpectedDetection, ScenarioConfig};
pub use report::{
    chain_digest, chain_invariants, emit_report, Conservation, DetectionRow, EntityRow, GasRow, InvariantCheck, Labels,
    ObligationRow, Outcome, PhaseTiming, RegistrationRow, ReportFormat, ScenarioReport,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("unreadable chain: {0}")]
    Chain(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Attach wall-clock per phase. Off by default so reports stay byte-stable.
    pub timings: bool,
}

pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub world: World,
    pub sweep: Vec<SweepEntry>,
}

impl ScenarioRun {
    pub fn blocks(&self) -> &[Block] {
        self.world.ledger.blocks()
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    run_scenario_with(config, RunOptions::default())
}

pub fn run_scenario_with(config: &ScenarioConfig, opts: RunOptions) -> Result<ScenarioRun, ScenarioError> {
    let wp = config.world_params()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |phase: &str, timings: &mut Vec<PhaseTiming>| {
        timings.push(PhaseTiming { phase: phase.into(), micros: clock.elapsed().as_micros() as u64 });
        clock = Instant::now();
    };

    let mut world = World::new(&wp)?;
    world.open_enrollment()?;
    world.run_phase1()?;
    world.lock_and_fund()?;
    lap("enrollment", &mut timings);
    world.run_phase2()?;
    lap("fe_setup", &mut timings);
    world.run_phase3()?;
    lap("encryption", &mut timings);
    world.run_phase4()?;
    lap("queries", &mut timings);
    let sweep = world.run_monitor()?;
    lap("monitoring", &mut timings);
    world.run_dropout()?;
    lap("dropout", &mut timings);

    let labels = Labels(world.profiles().map(|p| (p.id(), p.label.clone())).collect());
    let seed = hex::encode(wp.seed);
    let mut report = ScenarioReport::from_chain(&config.name, &seed, world.ledger.blocks(), &labels)?;
    report.queries = world.query_outcomes();
    report.invariants.extend(harness_invariants(config, &world, &report, &sweep));
    let expectation = config.expect.as_ref().map(|e| expectation_diff(e, &report));
    report.settle_outcome(expectation);
    if opts.timings {
        lap("report", &mut timings);
        report.timings = Some(timings);
    }
    Ok(ScenarioRun { report, world, sweep })
}

/// Harness labels for every actor the config describes, derived from its seed.
pub fn labels_for(config: &ScenarioConfig) -> Result<Labels, ScenarioError> {
    let world = World::new(&config.world_params()?)?;
    Ok(Labels(world.profiles().map(|p| (p.id(), p.label.clone())).collect()))
}

/// Differences between expected and observed `(cause, party)` counts.
pub fn expectation_diff(expect: &Expectation, report: &ScenarioReport) -> Vec<String> {
    let mut want: BTreeMap<(String, String), usize> = BTreeMap::new();
    for e in &expect.detections {
        *want.entry((e.cause.clone(), e.party.clone())).or_default() += e.count;
    }
    let got = report.detection_counts();
    let keys: std::collections::BTreeSet<_> = want.keys().chain(got.keys()).collect();
    let mut diff = Vec::new();
    for key in keys {
        let (w, g) = (want.get(key).copied().unwrap_or(0), got.get(key).copied().unwrap_or(0));
        if w != g {
            diff.push(format!("{} on {}: expected {w}, observed {g}", key.0, key.1));
        }
    }
    diff
}

/// Detection each adversarial flag must produce, as `(cause, party label)`.
fn required_detections(config: &ScenarioConfig) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (label, f) in &config.adversary {
        if f.tpa_forge_response_no_delivery || f.tpa_deliver_invalid_key {
            out.push(("disputed".into(), label.clone()));
        }
        if f.tpa_censor_user.is_some() {
            out.push(("censorship_suspected".into(), label.clone()));
        }
        if f.user_fabricate_request {
            out.push(("unconfirmed_service".into(), label.clone()));
        }
        if f.user_inference_attack {
            out.push(("inference_attempt".into(), label.clone()));
        }
        if f.owner_conflicting_binding {
            out.push(("conflicting_bindings".into(), label.clone()));
        }
    }
    out
}

fn harness_invariants(
    config: &ScenarioConfig,
    world: &World,
    report: &ScenarioReport,
    sweep: &[SweepEntry],
) -> Vec<InvariantCheck> {
    let state = world.ledger.state();
    let label = |id: &EntityId| world.label_of(id).map(str::to_string).unwrap_or_else(|| id.short());
    let mut checks = Vec::new();

    let mut mismatched = Vec::new();
    for e in &report.entities {
        if state.balance(&e.id) != e.balance || state.deposit(&e.id) != e.deposit {
            mismatched.push(e.label.clone());
        }
    }
    let c = &report.conservation;
    if (c.pool, c.escrow, c.withdrawn, c.paid_in) != (state.contract_pool, state.escrow, state.withdrawn, state.paid_in)
    {
        mismatched.push("totals".into());
    }
    for o in &report.obligations {
        if state.ks_obligations.get(&o.key).map(|s| s.status) != Some(o.status) {
            mismatched.push(o.key.short());
        }
    }
    checks.push(InvariantCheck::new("report_matches_state", mismatched.is_empty(), mismatched.join(",")));
    checks.push(InvariantCheck::new(
        "state_conservation",
        state.conservation_holds(),
        format!("paid in {} vs held {}", state.paid_in, state.total_held()),
    ));

    let n = config.n_owners;
    let full: Vec<String> =
        state.ipm_history.iter().filter(|(_, h)| ipm::rank(h) >= n).map(|(id, _)| label(id)).collect();
    checks.push(InvariantCheck::new("ipm_rank_below_n", full.is_empty(), full.join(",")));

    let wrong: Vec<String> = report
        .queries
        .iter()
        .filter(|q| q.result.is_some() && q.result != q.expected)
        .map(|q| format!("{} {:?}", q.actor, q.result))
        .collect();
    let undecrypted: Vec<String> = report
        .queries
        .iter()
        .filter(|q| {
            q.expected.is_some()
                && q.result.is_none()
                && q.status == crate::actors::QueryStatus::Confirmed
                && !config.is_adversarial(&q.actor)
                && world.owners.iter().all(|o| o.ciphertext.is_some())
        })
        .map(|q| q.actor.clone())
        .collect();
    checks.push(InvariantCheck::new(
        "fe_results_correct",
        wrong.is_empty() && undecrypted.is_empty(),
        format!("wrong {wrong:?}, undecrypted {undecrypted:?}"),
    ));

    let fined_honest: Vec<String> = report
        .entities
        .iter()
        .filter(|e| e.fined > 0 && !config.is_adversarial(&e.label))
        .map(|e| e.label.clone())
        .collect();
    checks.push(InvariantCheck::new("no_honest_party_fined", fined_honest.is_empty(), fined_honest.join(",")));

    if config.adversary.values().all(|f| f.is_honest()) {
        let unclean: Vec<String> = report
            .obligations
            .iter()
            .filter(|o| {
                !matches!(o.status, ObligationStatus::Confirmed | ObligationStatus::Refused)
                    || o.verdict.is_some_and(|v| v != crate::contract::KsVerdict::Healthy)
            })
            .map(|o| o.key.short())
            .collect();
        let clean = unclean.is_empty() && report.detections.is_empty() && report.entities.iter().all(|e| e.fined == 0);
        checks.push(InvariantCheck::new(
            "honest_run_clean",
            clean,
            format!("obligations {unclean:?}, {} detections", report.detections.len()),
        ));
    }

    if config.n_monitors > 0 {
        let counts = report.detection_counts();
        let missing: Vec<String> = required_detections(config)
            .into_iter()
            .filter(|k| !counts.contains_key(k))
            .map(|(c, p)| format!("{c} on {p}"))
            .collect();
        checks.push(InvariantCheck::new("adversaries_detected", missing.is_empty(), missing.join(",")));

        let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
        for e in sweep {
            for p in &e.parties {
                *seen.entry((e.verdict.clone(), label(p))).or_default() += 1;
            }
        }
        checks.push(InvariantCheck::new(
            "monitor_findings_match_chain",
            seen == counts,
            format!("monitor {seen:?} vs chain {counts:?}"),
        ));
    }
    checks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub owners: usize,
    /// Fastest of the repeats, in microseconds.
    pub runtime_micros: u64,
    pub transactions: u64,
    pub obligations: usize,
    pub passed: bool,
}

/// Config for `owners` data owners derived from `base`: vector queries are
/// replaced by one all-ones query per original query.
pub fn config_for_owners(base: &ScenarioConfig, owners: usize) -> ScenarioConfig {
    let mut c = base.clone();
    c.n_owners = owners;
    c.fe_dim = None;
    c.owner_values = None;
    c.queries = base.queries.iter().map(|_| vec![1; owners]).collect();
    c.expect = None;
    c
}

/// Runs the scenario once per owner count and records the fastest of `repeats` runs.
pub fn scale_sweep(base: &ScenarioConfig, counts: &[usize], repeats: usize) -> Result<Vec<SweepPoint>, ScenarioError> {
    if counts.contains(&0) {
        return Err(ScenarioError::ConfigInvalid("owner counts must be at least 1".into()));
    }
    let mut out = Vec::new();
    for &owners in counts {
        let config = config_for_owners(base, owners);
        let mut best = u64::MAX;
        let mut last = None;
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            let run = run_scenario(&config)?;
            best = best.min(start.elapsed().as_micros() as u64);
            last = Some(run.report);
        }
        let report = last.expect("at least one repeat");
        out.push(SweepPoint {
            owners,
            runtime_micros: best,
            transactions: report.transactions,
            obligations: report.obligations.len(),
            passed: report.outcome.passed,
        });
    }
    Ok(out)
}
