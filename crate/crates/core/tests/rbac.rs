mod common;

use common::{populated, Sim, ADMIN};
use tab_core::contract::{Call, CostModel, KeyServicePayload, ObligationPP, Params, FE_COMMON_LABEL};
use tab_core::crypto::{hash, Digest, Nonce};

const CALLERS: [&str; 6] = [ADMIN, "tpa", "owner-1", "user-1", "monitor-1", "stranger"];

/// Expected access per function, columns in `CALLERS` order.
#[rustfmt::skip]
const TABLE: &[(&str, [bool; 6])] = &[
    //                          admin  tpa    owner  user   monitor stranger
    ("deploy",                 [false, false, false, false, false, false]),
    ("enrollOpen",             [true,  false, false, false, false, false]),
    ("enrollLock",             [true,  false, false, false, false, false]),
    ("transferOwnership",      [true,  false, false, false, false, false]),
    ("renounceOwnership",      [true,  false, false, false, false, false]),
    ("registerAuthority",      [false, false, false, false, false, true]),
    ("registerActorDataOwner", [false, false, false, false, false, true]),
    ("registerActorDataUser",  [false, false, false, false, false, true]),
    ("registerMonitor",        [false, false, false, false, false, true]),
    ("publishBinding",         [false, true,  true,  true,  true,  false]),
    ("depositGuarantee",       [false, true,  false, true,  false, false]),
    ("payRegistrationShare",   [false, false, false, true,  false, false]),
    ("rewardRegisterCost",     [false, true,  true,  false, false, false]),
    ("rewardDeploymentCost",   [true,  false, false, false, false, false]),
    ("dropout",                [true,  true,  true,  true,  true,  false]),
    ("recordKSReq/pk",         [false, false, true,  false, false, false]),
    ("recordKSReq/vector",     [false, false, false, true,  false, false]),
    ("recordKSReq/attributes", [false, false, false, true,  false, false]),
    ("recordKSResp",           [false, true,  false, false, false, false]),
    ("recordKSConfirm",        [false, false, true,  true,  false, false]),
    ("inspectObligationKS",    [false, false, false, false, true,  false]),
    ("inspectObligationPP",    [false, false, false, false, true,  false]),
];

struct World {
    sim: Sim,
    owner_pending: (Digest, Nonce),
    user_pending: (Digest, Nonce),
    user_open_nonce: Nonce,
}

fn world() -> World {
    let mut sim = populated(Params::default(), 3, 1);
    let (k1, r1, _) = sim.request("owner-1", KeyServicePayload::PublicKeyRequest);
    sim.respond("owner-1", r1, hash(b"pk"));
    let (k2, r2, _) = sim.request("user-1", KeyServicePayload::Vector(vec![1, 1, 1]));
    sim.respond("user-1", r2, hash(b"sk"));
    let (_, r3, _) = sim.request("user-1", KeyServicePayload::Vector(vec![1, 2, 3]));
    World { sim, owner_pending: (k1, r1), user_pending: (k2, r2), user_open_nonce: r3 }
}

/// A well-formed call for `function`, signed by `caller` wherever a signature is needed.
fn call_for(w: &mut World, function: &str, caller: &str) -> Call {
    let sim = &mut w.sim;
    let me = sim.keys(caller);
    match function {
        "deploy" => Call::Deploy { params: Params::default(), cost_model: CostModel::default() },
        "enrollOpen" => Call::EnrollOpen,
        "enrollLock" => Call::EnrollLock,
        "transferOwnership" => Call::TransferOwnership { new_owner: sim.id("successor") },
        "renounceOwnership" => Call::RenounceOwnership,
        "rewardDeploymentCost" => Call::RewardDeploymentCost,
        "registerAuthority" => Call::RegisterAuthority(ObligationPP::identity(&me)),
        "registerActorDataOwner" => Call::RegisterActorDataOwner(ObligationPP::identity(&me)),
        "registerActorDataUser" => Call::RegisterActorDataUser(ObligationPP::identity(&me)),
        "registerMonitor" => Call::RegisterMonitor(ObligationPP::identity(&me)),
        "publishBinding" => Call::PublishBinding(ObligationPP::labelled(&me, FE_COMMON_LABEL, b"k".to_vec())),
        "depositGuarantee" => Call::DepositGuarantee,
        "payRegistrationShare" => Call::PayRegistrationShare,
        "rewardRegisterCost" => Call::RewardRegisterCost,
        "dropout" => Call::Dropout,
        "recordKSReq/pk" => {
            let r = sim.fresh_nonce();
            sim.req_call(caller, r, KeyServicePayload::PublicKeyRequest)
        }
        "recordKSReq/vector" => {
            let r = sim.fresh_nonce();
            sim.req_call(caller, r, KeyServicePayload::Vector(vec![1, 1, 2]))
        }
        "recordKSReq/attributes" => {
            let r = sim.fresh_nonce();
            sim.req_call(caller, r, KeyServicePayload::attribute_set(&["a"]))
        }
        "recordKSResp" => {
            let t = sim.t();
            let requester = sim.id("user-1");
            let resp = tab_core::contract::SnapshotResp::new(&me, w.user_open_nonce, hash(b"sk3"), false, t);
            Call::RecordKSResp { requester, resp }
        }
        "recordKSConfirm" => {
            let (key, r) = if caller == "user-1" { w.user_pending } else { w.owner_pending };
            sim.confirm_call(caller, key, r, hash(b"whatever"))
        }
        "inspectObligationKS" => Call::InspectObligationKS { key: w.user_pending.0 },
        "inspectObligationPP" => Call::InspectObligationPP { e_id: sim.id("owner-1"), label: String::new() },
        other => panic!("no call for {other}"),
    }
}

fn value_for(function: &str) -> u64 {
    match function {
        "depositGuarantee" => Params::default().guarantee,
        "payRegistrationShare" => 1_000_000,
        _ => 0,
    }
}

fn is_role_code(code: &str) -> bool {
    matches!(code, "NotOwner" | "WrongRole" | "NotRegistered" | "AlreadyRegistered" | "WrongCaller" | "AlreadyDeployed")
}

#[test]
fn table_covers_every_function() {
    let mut names: Vec<&str> = TABLE.iter().map(|(f, _)| f.split('/').next().unwrap()).collect();
    names.dedup();
    let all: Vec<&str> = tab_core::contract::FunctionName::ALL.iter().map(|f| f.name()).collect();
    assert_eq!(names, all);
}

#[test]
fn every_caller_against_every_function() {
    let base = world();
    let mut failures = Vec::new();
    for (function, row) in TABLE {
        for (caller, allowed) in CALLERS.iter().zip(row) {
            let mut w = base_parts(&base);
            let call = call_for(&mut w, function, caller);
            let before = w.sim.state().digest();
            let receipt = w.sim.send(caller, call, value_for(function));
            let code = receipt.revert_code().map(str::to_string);
            match (allowed, code) {
                (true, Some(c)) if is_role_code(&c) => {
                    failures.push(format!("{function} by {caller}: refused with {c}"))
                }
                (false, None) => failures.push(format!("{function} by {caller}: succeeded")),
                (false, Some(c)) if !is_role_code(&c) => {
                    failures.push(format!("{function} by {caller}: {c} instead of a role error"))
                }
                (false, Some(_)) if w.sim.state().digest() != before => {
                    failures.push(format!("{function} by {caller}: state changed on refusal"))
                }
                _ => {}
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

fn base_parts(w: &World) -> World {
    World {
        sim: w.sim.clone(),
        owner_pending: w.owner_pending,
        user_pending: w.user_pending,
        user_open_nonce: w.user_open_nonce,
    }
}

#[test]
fn confirm_by_another_requester_is_a_caller_error() {
    let mut w = world();
    let (key, r) = w.user_pending;
    let call = w.sim.confirm_call("owner-1", key, r, hash(b"sk"));
    assert_eq!(w.sim.err("owner-1", call, 0), "WrongCaller");
}

#[test]
fn exited_party_loses_all_access() {
    let mut sim = populated(Params::default(), 3, 1);
    sim.ok("monitor-1", Call::Dropout, 0);
    let key = hash(b"x");
    assert_eq!(sim.err("monitor-1", Call::InspectObligationKS { key }, 0), "NotRegistered");
}
