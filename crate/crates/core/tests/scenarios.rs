use tab_core::contract::CostItem;
use tab_core::ledger::{export_chain, import_chain, verify_chain};
use tab_core::scenario::{
    emit_report, labels_for, run_scenario, run_scenario_with, ReportFormat, RunOptions, ScenarioConfig, ScenarioReport,
};

const BUNDLED: [(&str, &str); 8] = [
    ("baseline", include_str!("../../../scenarios/baseline.json")),
    ("empty", include_str!("../../../scenarios/empty.json")),
    ("censorship", include_str!("../../../scenarios/censorship.json")),
    ("forged-response", include_str!("../../../scenarios/forged-response.json")),
    ("invalid-key", include_str!("../../../scenarios/invalid-key.json")),
    ("fabricated-request", include_str!("../../../scenarios/fabricated-request.json")),
    ("inference-attack", include_str!("../../../scenarios/inference-attack.json")),
    ("conflicting-binding", include_str!("../../../scenarios/conflicting-binding.json")),
];

fn bundled(name: &str) -> ScenarioConfig {
    let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name).unwrap();
    ScenarioConfig::from_json(text).unwrap()
}

#[test]
fn every_bundled_scenario_passes() {
    for (name, text) in BUNDLED {
        let config = ScenarioConfig::from_json(text).unwrap();
        config.validate().unwrap();
        let run = run_scenario(&config).unwrap();
        let o = &run.report.outcome;
        assert!(o.passed, "{name}: {o:?}");
        assert_eq!(o.expectation_met, Some(true), "{name}");
    }
}

#[test]
fn runs_are_deterministic() {
    for name in ["baseline", "censorship", "forged-response"] {
        let a = run_scenario(&bundled(name)).unwrap();
        let b = run_scenario(&bundled(name)).unwrap();
        assert_eq!(export_chain(a.blocks()), export_chain(b.blocks()), "{name}");
        let ja = emit_report(&a.report, ReportFormat::Json).unwrap();
        let jb = emit_report(&b.report, ReportFormat::Json).unwrap();
        assert_eq!(ja, jb, "{name}");
    }
}

#[test]
fn seeds_change_the_run() {
    let a = run_scenario(&bundled("baseline")).unwrap();
    let b = run_scenario(&bundled("baseline").with_seed(&[9; 32])).unwrap();
    assert_ne!(a.report.chain_digest, b.report.chain_digest);
    assert!(b.report.outcome.passed);
}

#[test]
fn json_report_round_trips() {
    let run = run_scenario(&bundled("censorship")).unwrap();
    let text = emit_report(&run.report, ReportFormat::Json).unwrap();
    let back: ScenarioReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, run.report);
}

#[test]
fn timings_are_opt_in() {
    let plain = run_scenario(&bundled("baseline")).unwrap();
    assert!(plain.report.timings.is_none());
    assert!(!emit_report(&plain.report, ReportFormat::Json).unwrap().contains("timings"));
    let timed = run_scenario_with(&bundled("baseline"), RunOptions { timings: true }).unwrap();
    assert!(timed.report.timings.as_ref().is_some_and(|t| !t.is_empty()));
    assert_eq!(timed.report.chain_digest, plain.report.chain_digest);
}

#[test]
fn table_and_csv_output() {
    let run = run_scenario(&bundled("baseline")).unwrap();
    let table = emit_report(&run.report, ReportFormat::Table).unwrap();
    let line = table.lines().find(|l| l.starts_with("registerMonitor ")).expect("registerMonitor row");
    assert!(line.contains("36521"));

    let csv_text = emit_report(&run.report, ReportFormat::Csv).unwrap();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["function", "description", "unit_gas", "calls", "reverted", "total_gas"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let names: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    let expected: Vec<&str> = CostItem::ALL.iter().map(|c| c.name()).collect();
    assert_eq!(names, expected);
    for r in &rows {
        let (unit, calls, total): (u64, u64, u64) =
            (r[2].parse().unwrap(), r[3].parse().unwrap(), r[5].parse().unwrap());
        assert_eq!(unit * calls, total, "{}", &r[0]);
    }
}

#[test]
fn empty_scenario_has_no_obligations() {
    let run = run_scenario(&bundled("empty")).unwrap();
    assert!(run.report.obligations.is_empty());
    assert!(run.report.detections.is_empty());
    assert!(run.report.outcome.passed);
}

#[test]
fn report_rebuilds_from_exported_chain() {
    for name in ["baseline", "forged-response", "conflicting-binding"] {
        let config = bundled(name);
        let run = run_scenario(&config).unwrap();
        let blocks = import_chain(&export_chain(run.blocks())).unwrap();
        assert!(verify_chain(&blocks).is_consistent());
        let labels = labels_for(&config).unwrap();
        let rebuilt = ScenarioReport::from_chain(&run.report.name, &run.report.seed, &blocks, &labels).unwrap();
        let r = &run.report;
        assert_eq!(rebuilt.gas, r.gas, "{name}");
        assert_eq!(rebuilt.entities, r.entities, "{name}");
        assert_eq!(rebuilt.obligations, r.obligations, "{name}");
        assert_eq!(rebuilt.detections, r.detections, "{name}");
        assert_eq!(rebuilt.conservation, r.conservation, "{name}");
        assert_eq!(rebuilt.registration, r.registration, "{name}");
        assert_eq!(rebuilt.chain_digest, r.chain_digest, "{name}");

        let receipts: u64 = blocks.iter().flat_map(|b| &b.receipts).map(|x| x.gas_used).sum();
        assert_eq!(r.gas_total, receipts, "{name}");
        assert_eq!(r.gas.iter().map(|g| g.total_gas).sum::<u64>(), receipts, "{name}");
        let txs: usize = blocks.iter().map(|b| b.transactions.len()).sum();
        assert_eq!(r.transactions, txs as u64);
    }
}

#[test]
fn registration_figures_for_three_owners_two_users() {
    let run = run_scenario(&bundled("baseline")).unwrap();
    let reg = run.report.registration.as_ref().unwrap();
    assert_eq!((reg.owners, reg.users, reg.total_cost, reg.share), (3, 2, 226_391, 113_196));
    for label in ["user-1", "user-2"] {
        let e = run.report.entity(label).unwrap();
        assert_eq!(e.paid_in, 113_196 + 1_000_000, "{label}");
    }
    assert!(run.report.conservation.holds);
}

#[test]
fn mismatched_expectation_fails_the_run() {
    let mut config = bundled("baseline");
    config.expect = Some(serde_json::from_str(r#"{"detections":[{"cause":"disputed","party":"tpa"}]}"#).unwrap());
    let run = run_scenario(&config).unwrap();
    assert!(!run.report.outcome.passed);
    assert_eq!(run.report.outcome.expectation_met, Some(false));
    assert_eq!(run.report.outcome.expectation_diff.len(), 1);
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        r#"{"n_owners": 0}"#,
        r#"{"queries": [[1, 1]]}"#,
        r#"{"queries": [[100, 1, 1]]}"#,
        r#"{"seed": "zz"}"#,
        r#"{"adversary": {"nobody": {"user_inference_attack": true}}}"#,
        r#"{"adversary": {"owner-1": {"user_inference_attack": true}}}"#,
        r#"{"unknown_field": 1}"#,
        r#"{"fe_bound": 100000}"#,
    ] {
        let rejected = ScenarioConfig::from_json(bad).and_then(|c| c.validate());
        assert!(rejected.is_err(), "{bad}");
    }
}
