//! Flat per-function gas schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, CodecError, Decoder, Encoder};

/// One row of the gas schedule. The first sixteen rows, in declaration order,
/// are the measured functions of the reference deployment; the rest are
/// functions with no measured cost whose defaults borrow the closest measured row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CostItem {
    Deployment,
    EnrollOpen,
    EnrollLock,
    Dropout,
    DepositGuarantee,
    RewardRegisterCost,
    RewardDeploymentCost,
    RegisterAuthority,
    RegisterActorDataOwner,
    RegisterActorDataUser,
    RegisterMonitor,
    RecordKSSKReq,
    RecordKSSKResp,
    RecordKSConfirm,
    InspectObligationKS,
    InspectObligationPP,
    RecordKSPKReq,
    RecordKSPKResp,
    PayRegistrationShare,
    PublishBinding,
    TransferOwnership,
    RenounceOwnership,
}

impl CostItem {
    pub const ALL: [CostItem; 22] = [
        CostItem::Deployment,
        CostItem::EnrollOpen,
        CostItem::EnrollLock,
        CostItem::Dropout,
        CostItem::DepositGuarantee,
        CostItem::RewardRegisterCost,
        CostItem::RewardDeploymentCost,
        CostItem::RegisterAuthority,
        CostItem::RegisterActorDataOwner,
        CostItem::RegisterActorDataUser,
        CostItem::RegisterMonitor,
        CostItem::RecordKSSKReq,
        CostItem::RecordKSSKResp,
        CostItem::RecordKSConfirm,
        CostItem::InspectObligationKS,
        CostItem::InspectObligationPP,
        CostItem::RecordKSPKReq,
        CostItem::RecordKSPKResp,
        CostItem::PayRegistrationShare,
        CostItem::PublishBinding,
        CostItem::TransferOwnership,
        CostItem::RenounceOwnership,
    ];

    /// Rows with a measured reference cost.
    pub const MEASURED: usize = 16;

    pub fn name(self) -> &'static str {
        match self {
            CostItem::Deployment => "deployment",
            CostItem::EnrollOpen => "enrollOpen",
            CostItem::EnrollLock => "enrollLock",
            CostItem::Dropout => "dropout",
            CostItem::DepositGuarantee => "depositGuarantee",
            CostItem::RewardRegisterCost => "rewardRegisterCost",
            CostItem::RewardDeploymentCost => "rewardDeploymentCost",
            CostItem::RegisterAuthority => "registerAuthority",
            CostItem::RegisterActorDataOwner => "registerActorDataOwner",
            CostItem::RegisterActorDataUser => "registerActorDataUser",
            CostItem::RegisterMonitor => "registerMonitor",
            CostItem::RecordKSSKReq => "recordKSSKReq",
            CostItem::RecordKSSKResp => "recordKSSKResp",
            CostItem::RecordKSConfirm => "recordKSConfirm",
            CostItem::InspectObligationKS => "inspectObligationKS",
            CostItem::InspectObligationPP => "inspectObligationPP",
            CostItem::RecordKSPKReq => "recordKSPKReq",
            CostItem::RecordKSPKResp => "recordKSPKResp",
            CostItem::PayRegistrationShare => "payRegistrationShare",
            CostItem::PublishBinding => "publishBinding",
            CostItem::TransferOwnership => "transferOwnership",
            CostItem::RenounceOwnership => "renounceOwnership",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn is_measured(self) -> bool {
        Self::ALL[..Self::MEASURED].contains(&self)
    }

    pub fn describe(self) -> &'static str {
        match self {
            CostItem::Deployment => "deploy the smart contract",
            CostItem::EnrollOpen => "open the enrollment",
            CostItem::EnrollLock => "lock the enrollment",
            CostItem::Dropout => "allow to drop out and withdraw the balance",
            CostItem::DepositGuarantee => "deposit the guarantee",
            CostItem::RewardRegisterCost => "reward registration cost for non-payable entity",
            CostItem::RewardDeploymentCost => "reward deployment for the administrator",
            CostItem::RegisterAuthority => "register the role of third-party authority",
            CostItem::RegisterActorDataOwner => "register the role of data owner",
            CostItem::RegisterActorDataUser => "register the role of data user",
            CostItem::RegisterMonitor => "register the role of monitor",
            CostItem::RecordKSSKReq => "publish the key service request snapshot",
            CostItem::RecordKSSKResp => "publish the key service response snapshot",
            CostItem::RecordKSConfirm => "confirm receipt of the key service obligation",
            CostItem::InspectObligationKS => "inspect the key service audit obligation",
            CostItem::InspectObligationPP => "check the public parameter binding",
            CostItem::RecordKSPKReq => "publish a public-key service request snapshot",
            CostItem::RecordKSPKResp => "publish a public-key service response snapshot",
            CostItem::PayRegistrationShare => "pay the equal share of registration costs",
            CostItem::PublishBinding => "publish an identity-to-public-key binding",
            CostItem::TransferOwnership => "transfer contract ownership",
            CostItem::RenounceOwnership => "leave the contract without owner",
        }
    }

    pub fn default_cost(self) -> u64 {
        match self {
            CostItem::Deployment => 4_125_603,
            CostItem::EnrollOpen => 44_126,
            CostItem::EnrollLock => 14_531,
            CostItem::Dropout => 28_293,
            CostItem::DepositGuarantee => 28_083,
            CostItem::RewardRegisterCost => 52_949,
            CostItem::RewardDeploymentCost => 51_584,
            CostItem::RegisterAuthority => 38_276,
            CostItem::RegisterActorDataOwner => 38_335,
            CostItem::RegisterActorDataUser => 36_555,
            CostItem::RegisterMonitor => 36_521,
            CostItem::RecordKSSKReq => 43_173,
            CostItem::RecordKSSKResp => 84_211,
            CostItem::RecordKSConfirm => 43_402,
            CostItem::InspectObligationKS => 24_511,
            CostItem::InspectObligationPP => 37_482,
            CostItem::RecordKSPKReq => CostItem::RecordKSSKReq.default_cost(),
            CostItem::RecordKSPKResp => CostItem::RecordKSSKResp.default_cost(),
            CostItem::PayRegistrationShare => CostItem::DepositGuarantee.default_cost(),
            CostItem::PublishBinding => CostItem::InspectObligationPP.default_cost(),
            CostItem::TransferOwnership | CostItem::RenounceOwnership => CostItem::EnrollLock.default_cost(),
        }
    }
}

/// Gas units per [`CostItem`]. Serializes as a `name → units` map; deserializing
/// a partial map overrides only the named rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostModel(BTreeMap<CostItem, u64>);

impl Default for CostModel {
    fn default() -> Self {
        Self(CostItem::ALL.iter().map(|c| (*c, c.default_cost())).collect())
    }
}

impl CostModel {
    pub fn get(&self, item: CostItem) -> u64 {
        self.0.get(&item).copied().unwrap_or_else(|| item.default_cost())
    }

    pub fn set(&mut self, item: CostItem, units: u64) {
        self.0.insert(item, units);
    }

    pub fn with_overrides(mut self, overrides: &BTreeMap<CostItem, u64>) -> Self {
        for (item, units) in overrides {
            self.set(*item, *units);
        }
        self
    }
}

impl<'de> Deserialize<'de> for CostModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let overrides = BTreeMap::<CostItem, u64>::deserialize(deserializer)?;
        Ok(CostModel::default().with_overrides(&overrides))
    }
}

impl Canonical for CostModel {
    fn encode(&self, enc: &mut Encoder) {
        let rows: Vec<(CostItem, u64)> = CostItem::ALL.iter().map(|c| (*c, self.get(*c))).collect();
        enc.list(&rows, |e, (item, units)| {
            e.str(item.name()).u64(*units);
        });
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let rows = dec.list(|d| {
            let name = d.str()?;
            let item =
                CostItem::from_name(&name).ok_or_else(|| CodecError::Invalid(format!("unknown cost row {name}")))?;
            Ok((item, d.u64()?))
        })?;
        Ok(Self(rows.into_iter().collect()))
    }
}
