//! Contract entry points and their argument encodings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::crypto::{Digest, EntityId};

use super::cost::{CostItem, CostModel};
use super::types::{ObligationPP, Params, SnapshotConfirm, SnapshotReq, SnapshotResp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FunctionName {
    Deploy,
    EnrollOpen,
    EnrollLock,
    TransferOwnership,
    RenounceOwnership,
    RegisterAuthority,
    RegisterActorDataOwner,
    RegisterActorDataUser,
    RegisterMonitor,
    PublishBinding,
    DepositGuarantee,
    PayRegistrationShare,
    RewardRegisterCost,
    RewardDeploymentCost,
    Dropout,
    RecordKSReq,
    RecordKSResp,
    RecordKSConfirm,
    InspectObligationKS,
    InspectObligationPP,
}

impl FunctionName {
    pub const ALL: [FunctionName; 20] = [
        FunctionName::Deploy,
        FunctionName::EnrollOpen,
        FunctionName::EnrollLock,
        FunctionName::TransferOwnership,
        FunctionName::RenounceOwnership,
        FunctionName::RegisterAuthority,
        FunctionName::RegisterActorDataOwner,
        FunctionName::RegisterActorDataUser,
        FunctionName::RegisterMonitor,
        FunctionName::PublishBinding,
        FunctionName::DepositGuarantee,
        FunctionName::PayRegistrationShare,
        FunctionName::RewardRegisterCost,
        FunctionName::RewardDeploymentCost,
        FunctionName::Dropout,
        FunctionName::RecordKSReq,
        FunctionName::RecordKSResp,
        FunctionName::RecordKSConfirm,
        FunctionName::InspectObligationKS,
        FunctionName::InspectObligationPP,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionName::Deploy => "deploy",
            FunctionName::EnrollOpen => "enrollOpen",
            FunctionName::EnrollLock => "enrollLock",
            FunctionName::TransferOwnership => "transferOwnership",
            FunctionName::RenounceOwnership => "renounceOwnership",
            FunctionName::RegisterAuthority => "registerAuthority",
            FunctionName::RegisterActorDataOwner => "registerActorDataOwner",
            FunctionName::RegisterActorDataUser => "registerActorDataUser",
            FunctionName::RegisterMonitor => "registerMonitor",
            FunctionName::PublishBinding => "publishBinding",
            FunctionName::DepositGuarantee => "depositGuarantee",
            FunctionName::PayRegistrationShare => "payRegistrationShare",
            FunctionName::RewardRegisterCost => "rewardRegisterCost",
            FunctionName::RewardDeploymentCost => "rewardDeploymentCost",
            FunctionName::Dropout => "dropout",
            FunctionName::RecordKSReq => "recordKSReq",
            FunctionName::RecordKSResp => "recordKSResp",
            FunctionName::RecordKSConfirm => "recordKSConfirm",
            FunctionName::InspectObligationKS => "inspectObligationKS",
            FunctionName::InspectObligationPP => "inspectObligationPP",
        }
    }

    pub fn is_payable(self) -> bool {
        matches!(self, FunctionName::DepositGuarantee | FunctionName::PayRegistrationShare)
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for FunctionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown function {s}"))
    }
}

impl Canonical for FunctionName {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.tag());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let tag = dec.u64()?;
        Self::ALL.get(tag as usize).copied().ok_or_else(|| CodecError::Invalid(format!("function tag {tag}")))
    }
}

/// A decoded call with its arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    Deploy { params: Params, cost_model: CostModel },
    EnrollOpen,
    EnrollLock,
    TransferOwnership { new_owner: EntityId },
    RenounceOwnership,
    RegisterAuthority(ObligationPP),
    RegisterActorDataOwner(ObligationPP),
    RegisterActorDataUser(ObligationPP),
    RegisterMonitor(ObligationPP),
    PublishBinding(ObligationPP),
    DepositGuarantee,
    PayRegistrationShare,
    RewardRegisterCost,
    RewardDeploymentCost,
    Dropout,
    RecordKSReq(SnapshotReq),
    RecordKSResp { requester: EntityId, resp: SnapshotResp },
    RecordKSConfirm { key: Digest, confirm: SnapshotConfirm },
    InspectObligationKS { key: Digest },
    InspectObligationPP { e_id: EntityId, label: String },
}

impl Call {
    pub fn function(&self) -> FunctionName {
        match self {
            Call::Deploy { .. } => FunctionName::Deploy,
            Call::EnrollOpen => FunctionName::EnrollOpen,
            Call::EnrollLock => FunctionName::EnrollLock,
            Call::TransferOwnership { .. } => FunctionName::TransferOwnership,
            Call::RenounceOwnership => FunctionName::RenounceOwnership,
            Call::RegisterAuthority(_) => FunctionName::RegisterAuthority,
            Call::RegisterActorDataOwner(_) => FunctionName::RegisterActorDataOwner,
            Call::RegisterActorDataUser(_) => FunctionName::RegisterActorDataUser,
            Call::RegisterMonitor(_) => FunctionName::RegisterMonitor,
            Call::PublishBinding(_) => FunctionName::PublishBinding,
            Call::DepositGuarantee => FunctionName::DepositGuarantee,
            Call::PayRegistrationShare => FunctionName::PayRegistrationShare,
            Call::RewardRegisterCost => FunctionName::RewardRegisterCost,
            Call::RewardDeploymentCost => FunctionName::RewardDeploymentCost,
            Call::Dropout => FunctionName::Dropout,
            Call::RecordKSReq(_) => FunctionName::RecordKSReq,
            Call::RecordKSResp { .. } => FunctionName::RecordKSResp,
            Call::RecordKSConfirm { .. } => FunctionName::RecordKSConfirm,
            Call::InspectObligationKS { .. } => FunctionName::InspectObligationKS,
            Call::InspectObligationPP { .. } => FunctionName::InspectObligationPP,
        }
    }

    /// Canonical argument bytes carried in the transaction payload.
    pub fn payload(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            Call::Deploy { params, cost_model } => {
                enc.record(params).record(cost_model);
            }
            Call::TransferOwnership { new_owner } => new_owner.encode(&mut enc),
            Call::RegisterAuthority(pp)
            | Call::RegisterActorDataOwner(pp)
            | Call::RegisterActorDataUser(pp)
            | Call::RegisterMonitor(pp)
            | Call::PublishBinding(pp) => {
                enc.record(pp);
            }
            Call::RecordKSReq(req) => {
                enc.record(req);
            }
            Call::RecordKSResp { requester, resp } => {
                requester.encode(&mut enc);
                enc.record(resp);
            }
            Call::RecordKSConfirm { key, confirm } => {
                key.encode(&mut enc);
                enc.record(confirm);
            }
            Call::InspectObligationKS { key } => key.encode(&mut enc),
            Call::InspectObligationPP { e_id, label } => {
                e_id.encode(&mut enc);
                enc.str(label);
            }
            Call::EnrollOpen
            | Call::EnrollLock
            | Call::RenounceOwnership
            | Call::DepositGuarantee
            | Call::PayRegistrationShare
            | Call::RewardRegisterCost
            | Call::RewardDeploymentCost
            | Call::Dropout => {}
        }
        enc.finish()
    }

    pub fn decode(function: FunctionName, payload: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(payload);
        let call = match function {
            FunctionName::Deploy => Call::Deploy { params: dec.record()?, cost_model: dec.record()? },
            FunctionName::EnrollOpen => Call::EnrollOpen,
            FunctionName::EnrollLock => Call::EnrollLock,
            FunctionName::TransferOwnership => Call::TransferOwnership { new_owner: EntityId::decode(&mut dec)? },
            FunctionName::RenounceOwnership => Call::RenounceOwnership,
            FunctionName::RegisterAuthority => Call::RegisterAuthority(dec.record()?),
            FunctionName::RegisterActorDataOwner => Call::RegisterActorDataOwner(dec.record()?),
            FunctionName::RegisterActorDataUser => Call::RegisterActorDataUser(dec.record()?),
            FunctionName::RegisterMonitor => Call::RegisterMonitor(dec.record()?),
            FunctionName::PublishBinding => Call::PublishBinding(dec.record()?),
            FunctionName::DepositGuarantee => Call::DepositGuarantee,
            FunctionName::PayRegistrationShare => Call::PayRegistrationShare,
            FunctionName::RewardRegisterCost => Call::RewardRegisterCost,
            FunctionName::RewardDeploymentCost => Call::RewardDeploymentCost,
            FunctionName::Dropout => Call::Dropout,
            FunctionName::RecordKSReq => Call::RecordKSReq(dec.record()?),
            FunctionName::RecordKSResp => {
                Call::RecordKSResp { requester: EntityId::decode(&mut dec)?, resp: dec.record()? }
            }
            FunctionName::RecordKSConfirm => {
                Call::RecordKSConfirm { key: Digest::decode(&mut dec)?, confirm: dec.record()? }
            }
            FunctionName::InspectObligationKS => Call::InspectObligationKS { key: Digest::decode(&mut dec)? },
            FunctionName::InspectObligationPP => {
                Call::InspectObligationPP { e_id: EntityId::decode(&mut dec)?, label: dec.str()? }
            }
        };
        dec.finish()?;
        Ok(call)
    }
}

/// Gas row charged for a function when the payload does not refine it.
pub fn base_cost_item(function: FunctionName) -> CostItem {
    match function {
        FunctionName::Deploy => CostItem::Deployment,
        FunctionName::EnrollOpen => CostItem::EnrollOpen,
        FunctionName::EnrollLock => CostItem::EnrollLock,
        FunctionName::TransferOwnership => CostItem::TransferOwnership,
        FunctionName::RenounceOwnership => CostItem::RenounceOwnership,
        FunctionName::RegisterAuthority => CostItem::RegisterAuthority,
        FunctionName::RegisterActorDataOwner => CostItem::RegisterActorDataOwner,
        FunctionName::RegisterActorDataUser => CostItem::RegisterActorDataUser,
        FunctionName::RegisterMonitor => CostItem::RegisterMonitor,
        FunctionName::PublishBinding => CostItem::PublishBinding,
        FunctionName::DepositGuarantee => CostItem::DepositGuarantee,
        FunctionName::PayRegistrationShare => CostItem::PayRegistrationShare,
        FunctionName::RewardRegisterCost => CostItem::RewardRegisterCost,
        FunctionName::RewardDeploymentCost => CostItem::RewardDeploymentCost,
        FunctionName::Dropout => CostItem::Dropout,
        FunctionName::RecordKSReq => CostItem::RecordKSSKReq,
        FunctionName::RecordKSResp => CostItem::RecordKSSKResp,
        FunctionName::RecordKSConfirm => CostItem::RecordKSConfirm,
        FunctionName::InspectObligationKS => CostItem::InspectObligationKS,
        FunctionName::InspectObligationPP => CostItem::InspectObligationPP,
    }
}
