use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::actors::{derive_seed, BehaviorFlags, WorldParams};
use crate::contract::{CostItem, CostModel, Params, Role};
use crate::ipfe::product_range;

use super::ScenarioError;

fn default_name() -> String {
    "scenario".into()
}
fn three() -> usize {
    3
}
fn two() -> usize {
    2
}
fn one() -> usize {
    1
}
fn default_delta_t() -> u64 {
    10
}
fn default_bound() -> u64 {
    10
}
fn default_fine() -> u64 {
    100_000
}
fn default_guarantee() -> u64 {
    1_000_000
}
fn yes() -> bool {
    true
}

/// Scenario input. Every field except `seed` has a default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "three")]
    pub n_owners: usize,
    #[serde(default = "two")]
    pub m_users: usize,
    #[serde(default = "one")]
    pub n_monitors: usize,
    #[serde(default = "yes")]
    pub with_tpa: bool,
    #[serde(default = "default_delta_t")]
    pub delta_t: u64,
    #[serde(default = "two")]
    pub k_min: usize,
    #[serde(default = "default_bound")]
    pub fe_bound: u64,
    /// Must equal `n_owners` when given.
    #[serde(default)]
    pub fe_dim: Option<usize>,
    #[serde(default = "default_fine")]
    pub fine: u64,
    #[serde(default = "default_guarantee")]
    pub guarantee: u64,
    /// Overrides of the default gas schedule, by row name.
    #[serde(default)]
    pub cost_model: BTreeMap<CostItem, u64>,
    /// Behaviour flags by actor label (`tpa`, `owner-1`, `user-2`, ...).
    #[serde(default)]
    pub adversary: BTreeMap<String, BehaviorFlags>,
    /// 32 bytes of hex.
    #[serde(default)]
    pub seed: Option<String>,
    #[serde(default)]
    pub queries: Vec<Vec<i64>>,
    #[serde(default)]
    pub attribute_queries: Vec<Vec<String>>,
    /// One plaintext per owner; drawn from the seed when absent.
    #[serde(default)]
    pub owner_values: Option<Vec<i64>>,
    #[serde(default)]
    pub expect: Option<Expectation>,
}

/// Detections a run must produce, as an exact multiset.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default)]
    pub detections: Vec<ExpectedDetection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedDetection {
    pub cause: String,
    pub party: String,
    #[serde(default = "one")]
    pub count: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))
    }

    pub fn seed_bytes(&self) -> Result<[u8; 32], ScenarioError> {
        let Some(s) = &self.seed else {
            return Ok([0; 32]);
        };
        let bytes = hex::decode(s.strip_prefix("0x").unwrap_or(s))
            .map_err(|e| ScenarioError::ConfigInvalid(format!("seed: {e}")))?;
        bytes
            .try_into()
            .map_err(|b: Vec<u8>| ScenarioError::ConfigInvalid(format!("seed has {} bytes, expected 32", b.len())))
    }

    pub fn with_seed(mut self, seed: &[u8; 32]) -> Self {
        self.seed = Some(hex::encode(seed));
        self
    }

    pub fn params(&self) -> Params {
        Params {
            delta_t: self.delta_t,
            fine: self.fine,
            guarantee: self.guarantee,
            k_min: self.k_min,
            fe_bound: self.fe_bound,
        }
    }

    pub fn cost(&self) -> CostModel {
        CostModel::default().with_overrides(&self.cost_model)
    }

    fn role_of_label(&self, label: &str) -> Option<Role> {
        let indexed = |prefix: &str, count: usize| {
            label.strip_prefix(prefix).and_then(|i| i.parse::<usize>().ok()).is_some_and(|i| (1..=count).contains(&i))
        };
        match label {
            "admin" => Some(Role::Administrator),
            "tpa" if self.with_tpa => Some(Role::Tpa),
            _ if indexed("owner-", self.n_owners) => Some(Role::DataOwner),
            _ if indexed("user-", self.m_users) => Some(Role::DataUser),
            _ if indexed("monitor-", self.n_monitors) => Some(Role::Monitor),
            _ => None,
        }
    }

    pub fn owner_values(&self, seed: &[u8; 32]) -> Vec<i64> {
        if let Some(v) = &self.owner_values {
            return v.clone();
        }
        let b = self.fe_bound as i64;
        let mut rng = ChaCha20Rng::from_seed(derive_seed(seed, "owner-values", ""));
        (0..self.n_owners).map(|_| rng.gen_range(-b..=b)).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::ConfigInvalid(m));
        if self.n_owners == 0 {
            return bad("at least one data owner is required".into());
        }
        if let Some(d) = self.fe_dim {
            if d != self.n_owners {
                return bad(format!("fe_dim {d} differs from n_owners {}", self.n_owners));
            }
        }
        if self.fe_bound == 0 {
            return bad("fe_bound must be positive".into());
        }
        if product_range(self.n_owners, self.fe_bound) > 1 << 32 {
            return bad("n_owners * fe_bound^2 exceeds 2^32".into());
        }
        if self.m_users == 0 && !(self.queries.is_empty() && self.attribute_queries.is_empty()) {
            return bad("queries need at least one data user".into());
        }
        let b = self.fe_bound;
        for q in &self.queries {
            if q.len() != self.n_owners {
                return bad(format!("query of length {} for {} owners", q.len(), self.n_owners));
            }
            if q.iter().any(|v| v.unsigned_abs() > b) {
                return bad(format!("query {q:?} exceeds bound {b}"));
            }
        }
        if let Some(v) = &self.owner_values {
            if v.len() != self.n_owners || v.iter().any(|x| x.unsigned_abs() > b) {
                return bad("owner_values must have one in-bound entry per owner".into());
            }
        }
        self.seed_bytes()?;
        for (label, flags) in &self.adversary {
            let Some(role) = self.role_of_label(label) else {
                return bad(format!("adversary entry for unknown actor {label}"));
            };
            if !flags.is_honest() && !flags.applies_to(role) {
                return bad(format!("flags set on {label} do not apply to its role"));
            }
            if let Some(target) = &flags.tpa_censor_user {
                if !matches!(self.role_of_label(target), Some(Role::DataUser | Role::DataOwner)) {
                    return bad(format!("censorship target {target} is not an owner or user"));
                }
            }
        }
        Ok(())
    }

    pub fn world_params(&self) -> Result<WorldParams, ScenarioError> {
        self.validate()?;
        let seed = self.seed_bytes()?;
        Ok(WorldParams {
            seed,
            params: self.params(),
            cost_model: self.cost(),
            n_owners: self.n_owners,
            m_users: self.m_users,
            n_monitors: self.n_monitors,
            with_tpa: self.with_tpa,
            owner_values: self.owner_values(&seed),
            queries: self.queries.clone(),
            attribute_queries: self.attribute_queries.clone(),
            adversary: self.adversary.clone(),
        })
    }

    /// Whether an actor label carries any adversarial flag.
    pub fn is_adversarial(&self, label: &str) -> bool {
        self.adversary.get(label).is_some_and(|f| !f.is_honest())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_baseline_shape() {
        let c = ScenarioConfig::default();
        assert_eq!((c.n_owners, c.m_users, c.n_monitors, c.delta_t, c.k_min), (3, 2, 1, 10, 2));
        assert_eq!((c.fine, c.guarantee), (100_000, 1_000_000));
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            r#"{"n_owners": 0}"#,
            r#"{"fe_dim": 4}"#,
            r#"{"m_users": 0, "queries": [[1,1,1]]}"#,
            r#"{"queries": [[1,1]]}"#,
            r#"{"queries": [[1,1,99]]}"#,
            r#"{"seed": "abcd"}"#,
            r#"{"adversary": {"user-9": {"user_fabricate_request": true}}}"#,
            r#"{"adversary": {"tpa": {"user_fabricate_request": true}}}"#,
            r#"{"adversary": {"tpa": {"tpa_censor_user": "monitor-1"}}}"#,
            r#"{"fe_bound": 100000}"#,
        ];
        for c in cases {
            let parsed = ScenarioConfig::from_json(c);
            assert!(parsed.is_err() || parsed.unwrap().validate().is_err(), "{c}");
        }
        assert!(ScenarioConfig::from_json(r#"{"unknown": 1}"#).is_err());
    }

    #[test]
    fn owner_values_are_seeded_and_in_bound() {
        let c = ScenarioConfig::default();
        let a = c.owner_values(&[1; 32]);
        assert_eq!(a, c.owner_values(&[1; 32]));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|v| v.unsigned_abs() <= c.fe_bound));
    }
}
