mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{populated, rank_mod_primes, Sim};
use proptest::prelude::*;
use tab_core::contract::{Call, CostItem, CostModel, Event, KeyServicePayload, ObligationPP, Params, FE_COMMON_LABEL};
use tab_core::crypto::{hash, Digest, Nonce};

const LABELS: [&str; 7] = ["admin", "tpa", "owner-1", "owner-2", "user-1", "user-2", "monitor-1"];

#[derive(Debug, Clone)]
enum Op {
    Request { user: usize, y: Vec<i64> },
    PkRequest { owner: usize },
    Respond { pick: usize, refuse: bool },
    Confirm { pick: usize, honest: bool },
    Inspect { pick: usize },
    InspectPp { who: usize },
    Advance { ticks: u64 },
    Dropout { who: usize },
    Claim { who: usize },
    Deposit { who: usize, amount: u64 },
    Rebind { who: usize },
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..2usize, prop::collection::vec(-2i64..=2, 3)).prop_map(|(user, y)| Op::Request { user, y }),
        1 => (0..3usize).prop_map(|owner| Op::PkRequest { owner }),
        3 => (any::<usize>(), prop::bool::weighted(0.1)).prop_map(|(pick, refuse)| Op::Respond { pick, refuse }),
        2 => (any::<usize>(), prop::bool::weighted(0.8)).prop_map(|(pick, honest)| Op::Confirm { pick, honest }),
        3 => any::<usize>().prop_map(|pick| Op::Inspect { pick }),
        1 => (0..LABELS.len()).prop_map(|who| Op::InspectPp { who }),
        2 => (0..15u64).prop_map(|ticks| Op::Advance { ticks }),
        1 => (0..LABELS.len()).prop_map(|who| Op::Dropout { who }),
        1 => (0..LABELS.len()).prop_map(|who| Op::Claim { who }),
        1 => (0..LABELS.len(), 0..2_000_000u64).prop_map(|(who, amount)| Op::Deposit { who, amount }),
        1 => (0..LABELS.len()).prop_map(|who| Op::Rebind { who }),
    ]
}

struct Known {
    key: Digest,
    requester: String,
    r: Nonce,
    f: KeyServicePayload,
}

/// Runs `ops` against a populated contract and checks the state-level laws after every transaction.
fn check_sequence(cost: Option<CostModel>, ops: &[Op]) -> Result<(), TestCaseError> {
    let mut sim = match cost {
        Some(c) => {
            let mut s = Sim::with_cost(Params::default(), c);
            common::enroll(&mut s, 3, 2);
            common::fund(&mut s, 2);
            s
        }
        None => populated(Params::default(), 3, 2),
    };
    let mut known: Vec<Known> = Vec::new();
    let mut stages: BTreeMap<Digest, u8> = BTreeMap::new();
    let mut fined: BTreeSet<(Digest, tab_core::crypto::EntityId)> = BTreeSet::new();
    let mut escrowed: BTreeSet<(Digest, tab_core::crypto::EntityId)> = BTreeSet::new();

    for op in ops {
        let (label, call, value) = match op {
            Op::Advance { ticks } => {
                let t = sim.t() + ticks;
                sim.advance_to(t);
                continue;
            }
            Op::Request { user, y } => {
                let label = format!("user-{}", user + 1);
                let r = sim.fresh_nonce();
                let f = KeyServicePayload::Vector(y.clone());
                let key = sim.key_of(&label, &r);
                known.push(Known { key, requester: label.clone(), r, f: f.clone() });
                (label.clone(), sim.req_call(&label, r, f), 0)
            }
            Op::PkRequest { owner } => {
                let label = format!("owner-{}", owner + 1);
                let r = sim.fresh_nonce();
                let f = KeyServicePayload::PublicKeyRequest;
                let key = sim.key_of(&label, &r);
                known.push(Known { key, requester: label.clone(), r, f: f.clone() });
                (label.clone(), sim.req_call(&label, r, f), 0)
            }
            Op::Respond { pick, refuse } if !known.is_empty() => {
                let k = &known[pick % known.len()];
                let sigma = if *refuse { tab_core::contract::refusal_digest(&k.f) } else { hash(&k.key.0) };
                let (req, r) = (k.requester.clone(), k.r);
                ("tpa".to_string(), sim.resp_call(&req, r, sigma, *refuse), 0)
            }
            Op::Confirm { pick, honest } if !known.is_empty() => {
                let k = &known[pick % known.len()];
                let sigma = if *honest { hash(&k.key.0) } else { hash(b"other") };
                let (req, key, r) = (k.requester.clone(), k.key, k.r);
                let call = sim.confirm_call(&req, key, r, sigma);
                (req, call, 0)
            }
            Op::Inspect { pick } if !known.is_empty() => {
                ("monitor-1".to_string(), Call::InspectObligationKS { key: known[pick % known.len()].key }, 0)
            }
            Op::InspectPp { who } => {
                let e_id = sim.id(LABELS[*who]);
                ("monitor-1".to_string(), Call::InspectObligationPP { e_id, label: String::new() }, 0)
            }
            Op::Dropout { who } => (LABELS[*who].to_string(), Call::Dropout, 0),
            Op::Claim { who } => (LABELS[*who].to_string(), Call::RewardRegisterCost, 0),
            Op::Deposit { who, amount } => (LABELS[*who].to_string(), Call::DepositGuarantee, *amount),
            Op::Rebind { who } => {
                let shadow = tab_core::crypto::KeyPair::from_seed(&[*who as u8 + 1; 32]);
                let id = sim.id(LABELS[*who]);
                let pk = shadow.pk.as_bytes().to_vec();
                let sig = shadow.sign(&ObligationPP::signed_message(&id, FE_COMMON_LABEL, &pk));
                let pp = ObligationPP { e_id: id, label: FE_COMMON_LABEL.to_string(), pk, sig };
                (LABELS[*who].to_string(), Call::PublishBinding(pp), 0)
            }
            _ => continue,
        };

        let expected_gas = sim.state().cost_model.get(sim.state().cost_item(&call));
        let before = sim.state().clone();
        let receipt = sim.send(&label, call, value);

        prop_assert_eq!(receipt.gas_used, expected_gas, "gas for {:?}", op);
        prop_assert!(sim.state().conservation_holds(), "conservation after {:?}", op);
        if !receipt.is_success() {
            prop_assert_eq!(sim.state().digest(), before.digest(), "revert changed state: {:?}", op);
        }
        for (key, ob) in &sim.state().ks_obligations {
            let stage = ob.status.stage();
            let prev = stages.insert(*key, stage).unwrap_or(0);
            prop_assert!(stage >= prev, "status went backwards on {:?}", op);
        }
        for e in receipt.decoded_events() {
            match e {
                Event::Fined { subject, party, .. } => {
                    prop_assert!(fined.insert((subject, party)), "fined twice for one subject");
                }
                Event::Escrowed { key, party, .. } => {
                    prop_assert!(escrowed.insert((key, party)), "escrowed twice for one obligation");
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn cost_model() -> impl Strategy<Value = CostModel> {
    prop::collection::vec(1u64..500_000, CostItem::ALL.len()).prop_map(|units| {
        let mut c = CostModel::default();
        for (item, u) in CostItem::ALL.iter().zip(units) {
            c.set(*item, u);
        }
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contract_laws_hold_under_random_traffic(ops in prop::collection::vec(op(), 1..40)) {
        check_sequence(None, &ops)?;
    }

    #[test]
    fn receipts_follow_any_cost_schedule(cost in cost_model(), ops in prop::collection::vec(op(), 1..25)) {
        check_sequence(Some(cost), &ops)?;
    }

    #[test]
    fn inference_gate_matches_rank_oracle(
        n in 2usize..=5,
        k_min in 1usize..=3,
        raw in prop::collection::vec(prop::collection::vec(-3i64..=3, 5), 1..10),
    ) {
        let k_min = k_min.min(n);
        let params = Params { k_min, ..Params::default() };
        let mut sim = populated(params, n, 1);
        let mut accepted: Vec<Vec<i64>> = Vec::new();
        for row in raw {
            let y: Vec<i64> = row[..n].to_vec();
            let support = y.iter().filter(|v| **v != 0).count();
            let mut with_y = accepted.clone();
            with_y.push(y.clone());
            let expect = support >= k_min && rank_mod_primes(&with_y) < n;
            let r = sim.fresh_nonce();
            let call = sim.req_call("user-1", r, KeyServicePayload::Vector(y.clone()));
            let receipt = sim.send("user-1", call, 0);
            if expect {
                prop_assert!(receipt.is_success(), "{:?} after {:?}: {:?}", y, accepted, receipt.status);
                accepted.push(y);
            } else {
                prop_assert_eq!(receipt.revert_code(), Some("IpmRejected"), "{:?} after {:?}", y, accepted);
            }
            prop_assert!(rank_mod_primes(&accepted) < n);
        }
        let uid = sim.id("user-1");
        let stored = sim.state().ipm_history.get(&uid).cloned().unwrap_or_default();
        prop_assert_eq!(stored, accepted);
    }
}
