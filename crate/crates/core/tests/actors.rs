mod common;

use std::collections::BTreeMap;

use tab_core::actors::{BehaviorFlags, DirectMessage, MessageKind, QueryStatus, World};
use tab_core::codec::Canonical;
use tab_core::contract::{
    binding_key, FunctionName, KeyServicePayload, ObligationStatus, PpVerdict, Role, FE_COMMON_LABEL,
};
use tab_core::crypto::hash;
use tab_core::scenario::{run_scenario, ScenarioConfig};

fn config() -> ScenarioConfig {
    ScenarioConfig { queries: vec![vec![1, 1, 1]], ..ScenarioConfig::default() }
}

fn seeded(mut c: ScenarioConfig, tag: u8) -> ScenarioConfig {
    let mut s = [0u8; 32];
    s[31] = tag;
    s[0] = 0xa5;
    c.seed = Some(hex::encode(s));
    c
}

fn adversary(label: &str, flags: BehaviorFlags) -> BTreeMap<String, BehaviorFlags> {
    BTreeMap::from([(label.to_string(), flags)])
}

fn world(c: &ScenarioConfig) -> World {
    World::new(&c.world_params().unwrap()).unwrap()
}

fn through_phase3(c: &ScenarioConfig) -> World {
    let mut w = world(c);
    w.open_enrollment().unwrap();
    w.run_phase1().unwrap();
    w.lock_and_fund().unwrap();
    w.run_phase2().unwrap();
    w.run_phase3().unwrap();
    w
}

fn owner_statuses(w: &World) -> Vec<ObligationStatus> {
    let state = w.ledger.state();
    w.owners
        .iter()
        .map(|o| {
            state
                .ks_obligations
                .values()
                .find(|ob| ob.requester == o.profile.id())
                .map(|ob| ob.status)
                .expect("owner request on chain")
        })
        .collect()
}

#[test]
fn phase1_registers_everyone() {
    let mut w = world(&config());
    w.open_enrollment().unwrap();
    assert_eq!(w.run_phase1().unwrap(), 7);
    let state = w.ledger.state();
    for p in w.profiles().skip(1) {
        assert_eq!(state.role_of(&p.id()), Some(p.role));
        let pp = &state.pp_obligations[&binding_key(&p.id(), "")];
        assert_eq!(pp.pk, p.keys.pk.as_bytes().to_vec());
        assert!(pp.self_verifies());
    }
    assert_eq!(state.role_of(&w.admin.id()), Some(Role::Administrator));
}

#[test]
fn phase1_with_nobody_sends_nothing() {
    let mut wp = ScenarioConfig::default().world_params().unwrap();
    (wp.n_owners, wp.m_users, wp.n_monitors, wp.with_tpa) = (0, 0, 0, false);
    wp.owner_values.clear();
    wp.queries.clear();
    let mut w = World::new(&wp).unwrap();
    let blocks = w.ledger.blocks().len();
    assert_eq!(w.run_phase1().unwrap(), 0);
    assert_eq!(w.ledger.blocks().len(), blocks);
}

#[test]
fn phase1_conflicting_owner_publishes_second_binding() {
    let c = ScenarioConfig {
        adversary: adversary("owner-2", BehaviorFlags { owner_conflicting_binding: true, ..Default::default() }),
        ..config()
    };
    let mut w = world(&c);
    w.open_enrollment().unwrap();
    w.run_phase1().unwrap();
    let id = w.owners[1].profile.id();
    let key = binding_key(&id, "");
    assert_eq!(w.ledger.state().pp_conflicts[&key].len(), 1);
    assert_eq!(w.ledger.state().pp_verdict(&id, ""), PpVerdict::ConflictingBindings);
    assert_eq!(w.ledger.state().pp_verdict(&w.owners[0].profile.id(), ""), PpVerdict::Valid);
}

#[test]
fn phase2_common_key_binding() {
    let c = seeded(config(), 1);
    let mut w = world(&c);
    w.open_enrollment().unwrap();
    w.run_phase1().unwrap();
    w.lock_and_fund().unwrap();
    let key = w.run_phase2().unwrap().expect("authority present");
    let tpa = w.tpa_id().unwrap();
    assert_eq!(binding_key(&tpa, FE_COMMON_LABEL), key);
    assert_eq!(w.ledger.state().pp_verdict(&tpa, FE_COMMON_LABEL), PpVerdict::Valid);
    let published = w.published_common_key().unwrap();
    assert_eq!(Some(published.clone()), w.tpa.as_ref().unwrap().common.clone());

    let again = through_phase3(&c).published_common_key().unwrap();
    assert_eq!(again, published);
    let other = through_phase3(&seeded(config(), 2)).published_common_key().unwrap();
    assert_ne!(other, published);
}

#[test]
fn phase3_honest_owners_confirm_and_encrypt() {
    let w = through_phase3(&config());
    assert!(owner_statuses(&w).iter().all(|s| *s == ObligationStatus::Confirmed));
    assert!(w.owners.iter().all(|o| o.ciphertext.is_some()));
}

#[test]
fn phase3_forged_response_never_confirms() {
    let c = ScenarioConfig {
        adversary: adversary("tpa", BehaviorFlags { tpa_forge_response_no_delivery: true, ..Default::default() }),
        ..config()
    };
    let w = through_phase3(&c);
    assert!(owner_statuses(&w).iter().all(|s| *s == ObligationStatus::Disputed));
    assert!(w.owners.iter().all(|o| o.ciphertext.is_none()));
}

#[test]
fn phase3_invalid_key_is_disputed() {
    let c = ScenarioConfig {
        adversary: adversary("tpa", BehaviorFlags { tpa_deliver_invalid_key: true, ..Default::default() }),
        ..config()
    };
    let w = through_phase3(&c);
    assert!(owner_statuses(&w).iter().all(|s| *s == ObligationStatus::Disputed));
}

#[test]
fn phase4_inner_product() {
    let c = ScenarioConfig { owner_values: Some(vec![2, 3, 4]), m_users: 1, ..config() };
    let mut w = through_phase3(&c);
    w.run_phase4().unwrap();
    let out = w.query_outcomes();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].status, QueryStatus::Confirmed);
    assert_eq!(out[0].result, Some(9));
    assert_eq!(out[0].expected, Some(9));
}

#[test]
fn phase4_attribute_request_is_refused() {
    let c = ScenarioConfig { m_users: 1, attribute_queries: vec![vec!["dept:x".into()]], ..config() };
    let mut w = through_phase3(&c);
    w.run_phase4().unwrap();
    let refused: Vec<_> =
        w.query_outcomes().into_iter().filter(|o| matches!(o.payload, KeyServicePayload::AttributeSet(_))).collect();
    assert_eq!(refused.len(), 1);
    assert_eq!(refused[0].status, QueryStatus::Refused);
}

#[test]
fn phase4_inference_attack_stopped_at_first_request() {
    let c = ScenarioConfig {
        adversary: adversary("user-1", BehaviorFlags { user_inference_attack: true, ..Default::default() }),
        ..config()
    };
    let mut w = through_phase3(&c);
    w.run_phase4().unwrap();
    let attacker: Vec<_> = w.query_outcomes().into_iter().filter(|o| o.actor == "user-1").collect();
    assert_eq!(attacker[0].status, QueryStatus::Rejected { code: "IpmRejected".into() });
    assert!(attacker.iter().all(|o| o.result.is_none()));
    let uid = w.users[0].profile.id();
    assert!(w.ledger.state().ipm_history.get(&uid).is_none_or(Vec::is_empty));
}

#[test]
fn censorship_detected_and_fined() {
    let c = ScenarioConfig {
        adversary: adversary("tpa", BehaviorFlags { tpa_censor_user: Some("user-1".into()), ..Default::default() }),
        ..config()
    };
    let mut w = through_phase3(&c);
    w.run_phase4().unwrap();
    let entries = w.run_monitor().unwrap();
    let tpa = w.tpa_id().unwrap();
    let censored: Vec<_> = entries.iter().filter(|e| e.verdict == "censorship_suspected").collect();
    assert_eq!(censored.len(), 1);
    assert_eq!(censored[0].parties, vec![tpa]);
    assert_eq!(censored[0].fines, vec![(tpa, c.fine)]);
    let total_fines: usize = entries.iter().map(|e| e.fines.len()).sum();
    assert_eq!(total_fines, 1);
}

#[test]
fn honest_sweep_is_all_healthy_and_free() {
    let mut w = through_phase3(&config());
    w.run_phase4().unwrap();
    let monitor = w.monitors[0].profile.id();
    let balance = w.ledger.state().balance(&monitor);
    let entries = w.run_monitor().unwrap();
    assert!(!entries.is_empty());
    for e in &entries {
        assert!(matches!(e.verdict.as_str(), "healthy" | "valid"), "{e:?}");
        assert!(e.fines.is_empty() && e.escrowed.is_empty());
    }
    assert_eq!(w.ledger.state().balance(&monitor), balance);
    assert_eq!(w.monitors[0].findings.len(), entries.len());
}

#[test]
fn monitor_on_an_empty_chain_finds_nothing() {
    let mut w = world(&config());
    assert!(w.run_monitor().unwrap().is_empty());
}

#[test]
fn honest_runs_are_clean_across_seeds() {
    for tag in 0..8 {
        let run = run_scenario(&seeded(config(), tag)).unwrap();
        assert!(run.report.outcome.passed, "seed {tag}: {:?}", run.report.outcome);
        assert!(run.report.detections.is_empty(), "seed {tag}");
        assert!(run.report.entities.iter().all(|e| e.fined == 0 && e.escrowed == 0));
        assert!(run.report.queries.iter().all(|q| q.status == QueryStatus::Confirmed && q.result == q.expected));
    }
}

fn flag_cases() -> Vec<(&'static str, BehaviorFlags, &'static str)> {
    vec![
        ("tpa", BehaviorFlags { tpa_forge_response_no_delivery: true, ..Default::default() }, "disputed"),
        ("tpa", BehaviorFlags { tpa_deliver_invalid_key: true, ..Default::default() }, "disputed"),
        ("tpa", BehaviorFlags { tpa_censor_user: Some("user-2".into()), ..Default::default() }, "censorship_suspected"),
        ("user-1", BehaviorFlags { user_fabricate_request: true, ..Default::default() }, "unconfirmed_service"),
        ("user-2", BehaviorFlags { user_inference_attack: true, ..Default::default() }, "inference_attempt"),
        ("owner-3", BehaviorFlags { owner_conflicting_binding: true, ..Default::default() }, "conflicting_bindings"),
    ]
}

#[test]
fn every_misbehavior_is_detected_and_only_the_culprit_is_fined() {
    for (label, flags, cause) in flag_cases() {
        for tag in 0..3 {
            let c = seeded(ScenarioConfig { adversary: adversary(label, flags.clone()), ..config() }, tag);
            let run = run_scenario(&c).unwrap();
            let r = &run.report;
            assert!(
                r.detections.iter().any(|d| d.party == label && d.cause == cause),
                "{label}/{cause} seed {tag}: {:?}",
                r.detections
            );
            for e in &r.entities {
                if e.label != label {
                    assert_eq!(e.fined, 0, "{} fined under {label}/{cause}", e.label);
                }
            }
            assert!(r.invariants.iter().all(|i| i.holds), "{label}/{cause}: {:?}", r.invariants);
        }
    }
}

#[test]
fn fabricated_response_injection_is_rejected() {
    let c = ScenarioConfig {
        adversary: adversary("user-1", BehaviorFlags { user_fabricate_request: true, ..Default::default() }),
        ..config()
    };
    let run = run_scenario(&c).unwrap();
    let user = run.world.users[0].profile.id();
    let injected: Vec<_> = run
        .world
        .ledger
        .blocks()
        .iter()
        .flat_map(|b| b.transactions.iter().zip(&b.receipts))
        .filter(|(tx, r)| tx.function == FunctionName::RecordKSResp && !r.is_success())
        .collect();
    assert!(!injected.is_empty());
    assert!(injected.iter().all(|(_, r)| r.revert_code() == Some("BadSignature")));
    let tpa = run.report.entities.iter().find(|e| e.label == "tpa").unwrap();
    assert_eq!(tpa.fined, 0);
    assert!(run
        .world
        .ledger
        .state()
        .ks_obligations
        .values()
        .filter(|o| o.requester == user)
        .all(|o| o.status == ObligationStatus::Requested || o.status == ObligationStatus::Responded));
}

#[test]
fn off_ledger_messages_leave_the_chain_untouched() {
    let mut w = through_phase3(&config());
    let (digest, blocks) = (w.ledger.state().digest(), w.ledger.blocks().len());
    let (a, b) = (w.users[0].profile.id(), w.tpa_id().unwrap());
    let key = hash(b"k");
    w.channel.send(DirectMessage::new(a, b, MessageKind::KeyRequest, &key, b"secret", 0));
    let got = w.channel.receive(&b);
    assert_eq!(got.len(), 1);
    assert_eq!(got[0].open(), Some((key, b"secret".to_vec())));
    assert_eq!(w.ledger.state().digest(), digest);
    assert_eq!(w.ledger.blocks().len(), blocks);

    // functional keys travel only off-ledger
    w.run_phase4().unwrap();
    let fe = w.tpa.as_ref().unwrap().fe.as_ref().unwrap();
    let sk = tab_core::ipfe::derive_key(&fe.msk, &[1, 1, 1]).unwrap().to_canonical();
    assert!(w.channel.sent() > 0);
    for block in w.ledger.blocks() {
        for tx in &block.transactions {
            assert!(!tx.payload.windows(sk.len()).any(|win| win == sk.as_slice()));
        }
    }
}
