use thiserror::Error;

use super::ipm::IpmReason;
use super::types::Role;

/// Why a contract call reverted.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("caller is not the contract owner")]
    NotOwner,
    #[error("role {role:?} may not call {function}")]
    WrongRole { function: &'static str, role: Role },
    #[error("caller is not registered")]
    NotRegistered,
    #[error("caller is already registered")]
    AlreadyRegistered,
    #[error("caller is not the party this record belongs to")]
    WrongCaller,
    #[error("account has left the contract")]
    Exited,
    #[error("enrollment is closed")]
    EnrollmentClosed,
    #[error("operation not allowed in this phase")]
    WrongPhase,
    #[error("signature does not verify")]
    BadSignature,
    #[error("binding does not belong to the caller")]
    IdentityMismatch,
    #[error("an authority is already registered")]
    TpaExists,
    #[error("no authority is registered")]
    NoTpa,
    #[error("value {offered} below required {required}")]
    InsufficientValue { required: u64, offered: u64 },
    #[error("function is not payable")]
    UnexpectedValue,
    #[error("registration share already paid")]
    AlreadyPaid,
    #[error("pool cannot fund this reward")]
    PoolUnfunded,
    #[error("reward already claimed")]
    AlreadyClaimed,
    #[error("caller still has open obligations")]
    OpenObligations,
    #[error("caller has no guarantee deposit")]
    NoGuarantee,
    #[error("obligation key already used")]
    DuplicateNonce,
    #[error("request rejected by inference prevention: {0}")]
    IpmRejected(IpmReason),
    #[error("vector has {found} entries, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry {value} at {index} exceeds bound {bound}")]
    EntryOutOfBound { index: usize, value: i64, bound: u64 },
    #[error("unknown obligation")]
    UnknownObligation,
    #[error("response time must be after the request time")]
    TimestampOrder,
    #[error("snapshot time {claimed} differs from ledger time {now}")]
    TimestampMismatch { claimed: u64, now: u64 },
    #[error("obligation is not in the required status")]
    WrongStatus,
    #[error("refusal digest does not commit to the request")]
    BadRefusalDigest,
    #[error("contract already deployed")]
    AlreadyDeployed,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}

impl ContractError {
    /// Stable identifier written into reverted receipts.
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::NotOwner => "NotOwner",
            ContractError::WrongRole { .. } => "WrongRole",
            ContractError::NotRegistered => "NotRegistered",
            ContractError::AlreadyRegistered => "AlreadyRegistered",
            ContractError::WrongCaller => "WrongCaller",
            ContractError::Exited => "Exited",
            ContractError::EnrollmentClosed => "EnrollmentClosed",
            ContractError::WrongPhase => "WrongPhase",
            ContractError::BadSignature => "BadSignature",
            ContractError::IdentityMismatch => "IdentityMismatch",
            ContractError::TpaExists => "TpaExists",
            ContractError::NoTpa => "NoTpa",
            ContractError::InsufficientValue { .. } => "InsufficientValue",
            ContractError::UnexpectedValue => "UnexpectedValue",
            ContractError::AlreadyPaid => "AlreadyPaid",
            ContractError::PoolUnfunded => "PoolUnfunded",
            ContractError::AlreadyClaimed => "AlreadyClaimed",
            ContractError::OpenObligations => "OpenObligations",
            ContractError::NoGuarantee => "NoGuarantee",
            ContractError::DuplicateNonce => "DuplicateNonce",
            ContractError::IpmRejected(_) => "IpmRejected",
            ContractError::DimensionMismatch { .. } => "DimensionMismatch",
            ContractError::EntryOutOfBound { .. } => "EntryOutOfBound",
            ContractError::UnknownObligation => "UnknownObligation",
            ContractError::TimestampOrder => "TimestampOrder",
            ContractError::TimestampMismatch { .. } => "TimestampMismatch",
            ContractError::WrongStatus => "WrongStatus",
            ContractError::BadRefusalDigest => "BadRefusalDigest",
            ContractError::AlreadyDeployed => "AlreadyDeployed",
            ContractError::MalformedPayload(_) => "MalformedPayload",
        }
    }

    pub fn is_role_error(&self) -> bool {
        matches!(
            self,
            ContractError::NotOwner
                | ContractError::WrongRole { .. }
                | ContractError::NotRegistered
                | ContractError::AlreadyRegistered
                | ContractError::WrongCaller
        )
    }
}
