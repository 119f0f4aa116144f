pub mod actors;
pub mod codec;
pub mod contract;
pub mod crypto;
pub mod ipfe;
pub mod ledger;
pub mod scenario;
