//! Random experiment scenarios: topologies, buyer/seller roles, bundles,
//! reserve prices, and multi-step replications with persistent wallets.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{run_auction_step, settle, EngineError};
use crate::model::{AuctionOutcome, Instance, Wallet};
use crate::oracle::{solve_optimal, OracleError, OracleResult};

/// Generator used for every replication, as recorded in run metadata.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3)";
/// How a replication's generator is derived from the master seed.
pub const SEED_SCHEME: &str =
    "ChaCha8Rng::seed_from_u64(master_seed), set_stream(replication_index)";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_users: usize,
    pub n_resources: usize,
    pub density: f64,
    pub buyer_fraction: f64,
    /// Inclusive range of integer bundle quantities.
    pub quantity_range: (u32, u32),
    /// Range of the buyer reserve multiplier.
    pub epsilon_range: (f64, f64),
    pub seller_initial_price: f64,
    pub price_increment: f64,
    pub initial_budget: f64,
    pub steps: usize,
    pub replications: usize,
    pub confidence: f64,
    pub master_seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_users: 10,
            n_resources: 3,
            density: 0.3,
            buyer_fraction: 0.2,
            quantity_range: (1, 10),
            epsilon_range: (1.5, 2.0),
            seller_initial_price: 1.0,
            price_increment: 1.0,
            initial_budget: 100.0,
            steps: 10,
            replications: 20,
            confidence: 0.9,
            master_seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn new(n_users: usize, n_resources: usize, density: f64) -> Self {
        Self {
            n_users,
            n_resources,
            density,
            ..Self::default()
        }
    }

    /// One message per invalid field.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.n_users == 0 {
            errs.push("n_users: must be positive".to_string());
        }
        if self.n_resources == 0 {
            errs.push("n_resources: must be positive".to_string());
        }
        if !(0.0..=1.0).contains(&self.density) {
            errs.push(format!("density: {} is outside [0, 1]", self.density));
        }
        if !(0.0..=1.0).contains(&self.buyer_fraction) {
            errs.push(format!(
                "buyer_fraction: {} is outside [0, 1]",
                self.buyer_fraction
            ));
        }
        let (qlo, qhi) = self.quantity_range;
        if qlo > qhi {
            errs.push(format!("quantity_range: [{qlo}, {qhi}] is empty"));
        }
        let (elo, ehi) = self.epsilon_range;
        if !(elo.is_finite() && ehi.is_finite() && elo >= 0.0 && elo <= ehi) {
            errs.push(format!(
                "epsilon_range: [{elo}, {ehi}] must satisfy 0 <= low <= high"
            ));
        }
        if !(self.seller_initial_price.is_finite() && self.seller_initial_price >= 0.0) {
            errs.push("seller_initial_price: must be finite and non-negative".to_string());
        }
        if !(self.price_increment.is_finite() && self.price_increment > 0.0) {
            errs.push("price_increment: must be finite and positive".to_string());
        }
        if !(self.initial_budget.is_finite() && self.initial_budget >= 0.0) {
            errs.push("initial_budget: must be finite and non-negative".to_string());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            errs.push(format!("confidence: {} is outside (0, 1)", self.confidence));
        }
        errs
    }

    pub fn n_buyers(&self) -> usize {
        ((self.buyer_fraction * self.n_users as f64).round() as usize).min(self.n_users)
    }
}

/// Generator for replication `replication` under `master_seed`.
pub fn replication_rng(master_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication);
    rng
}

/// Symmetric adjacency with one Bernoulli(`density`) draw per unordered pair.
#[allow(clippy::needless_range_loop)]
pub fn generate_topology<R: Rng + ?Sized>(n: usize, density: f64, rng: &mut R) -> Vec<Vec<bool>> {
    let mut m = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                m[i][j] = true;
                m[j][i] = true;
            }
        }
    }
    m
}

pub fn buyer_reserve_price(req_row: &[f64], epsilon: f64) -> f64 {
    epsilon * req_row.iter().sum::<f64>()
}

/// Fresh topology, a fixed quota of pure buyers chosen at random, uniform
/// integer bundles, and reserve prices `ε_i · Σ_r Req_ri`.
pub fn generate_step_instance<R: Rng + ?Sized>(params: &ScenarioParams, rng: &mut R) -> Instance {
    let n = params.n_users;
    let n_res = params.n_resources;
    let adjacency = generate_topology(n, params.density, rng);

    let mut is_buyer = vec![false; n];
    for i in sample(rng, n, params.n_buyers()) {
        is_buyer[i] = true;
    }

    let (qlo, qhi) = params.quantity_range;
    let (elo, ehi) = params.epsilon_range;
    let mut req = vec![vec![0.0; n]; n_res];
    let mut off = vec![vec![0.0; n]; n_res];
    let mut buyer_reserve = vec![0.0; n];
    for i in 0..n {
        let target = if is_buyer[i] { &mut req } else { &mut off };
        for row in target.iter_mut() {
            row[i] = f64::from(rng.gen_range(qlo..=qhi));
        }
        if is_buyer[i] {
            let eps = if elo < ehi {
                rng.gen_range(elo..=ehi)
            } else {
                elo
            };
            let row: Vec<f64> = req.iter().map(|r| r[i]).collect();
            buyer_reserve[i] = buyer_reserve_price(&row, eps);
        }
    }

    Instance {
        n_users: n,
        n_resources: n_res,
        adjacency,
        req,
        off,
        buyer_reserve,
        seller_reserve_price: vec![vec![params.seller_initial_price; n]; n_res],
        price_increment: params.price_increment,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OraclePolicy {
    #[default]
    Off,
    Exact,
    Budget(Duration),
}

impl OraclePolicy {
    pub fn budget(&self) -> Option<Option<Duration>> {
        match self {
            OraclePolicy::Off => None,
            OraclePolicy::Exact => Some(None),
            OraclePolicy::Budget(d) => Some(Some(*d)),
        }
    }
}

impl fmt::Display for OraclePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OraclePolicy::Off => f.write_str("off"),
            OraclePolicy::Exact => f.write_str("exact"),
            OraclePolicy::Budget(d) => write!(f, "budget={}", d.as_secs_f64()),
        }
    }
}

impl FromStr for OraclePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(OraclePolicy::Off),
            "exact" => Ok(OraclePolicy::Exact),
            _ => {
                let secs = s
                    .strip_prefix("budget=")
                    .ok_or_else(|| format!("expected off, exact or budget=SECS, got {s:?}"))?;
                let secs: f64 = secs
                    .parse()
                    .map_err(|_| format!("budget seconds {secs:?} is not a number"))?;
                Duration::try_from_secs_f64(secs)
                    .map(OraclePolicy::Budget)
                    .map_err(|_| format!("budget seconds {secs} is not a valid duration"))
            }
        }
    }
}

impl Serialize for OraclePolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OraclePolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub instance: Instance,
    pub outcome: AuctionOutcome,
    pub oracle: Option<OracleResult>,
    pub wallet_before: Wallet,
    pub wallet_after: Wallet,
}

#[derive(Debug, Clone)]
pub struct ReplicationHistory {
    pub params: ScenarioParams,
    pub replication: usize,
    pub initial_wallet: Wallet,
    pub steps: Vec<StepRecord>,
}

impl ReplicationHistory {
    /// Wallet after `step` steps (step 0 is the initial wallet).
    pub fn wallet_at(&self, step: usize) -> Option<&Wallet> {
        if step == 0 {
            Some(&self.initial_wallet)
        } else {
            self.steps.get(step - 1).map(|s| &s.wallet_after)
        }
    }
}

/// Runs `params.steps` generate/auction/settle cycles with persistent
/// wallets, optionally solving each step's instance with the oracle.
pub fn run_replication(
    params: &ScenarioParams,
    replication: usize,
    oracle: OraclePolicy,
) -> Result<ReplicationHistory, ScenarioError> {
    let errs = params.validate();
    if !errs.is_empty() {
        return Err(ScenarioError::InvalidParams(errs));
    }
    let mut rng = replication_rng(params.master_seed, replication as u64);
    let initial_wallet = Wallet::uniform(params.n_users, params.initial_budget);
    let mut wallet = initial_wallet.clone();
    let mut steps = Vec::with_capacity(params.steps);
    for step in 1..=params.steps {
        let instance = generate_step_instance(params, &mut rng);
        let outcome = run_auction_step(&instance, &wallet)?;
        let wallet_after = settle(&outcome, &wallet)?;
        let oracle = match oracle.budget() {
            None => None,
            Some(budget) => Some(solve_optimal(&instance, budget)?),
        };
        steps.push(StepRecord {
            step,
            instance,
            outcome,
            oracle,
            wallet_before: std::mem::replace(&mut wallet, wallet_after.clone()),
            wallet_after,
        });
    }
    Ok(ReplicationHistory {
        params: params.clone(),
        replication,
        initial_wallet,
        steps,
    })
}
