//! Shared domain types: instances, allocations, price boards, wallets and
//! auction outcomes, plus the allocation validator.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for every `<=` comparison on quantities and prices.
pub const EPS: f64 = 1e-9;

/// Index of a user (0-based, contiguous).
pub type UserId = usize;
/// Index of a resource type (0-based, contiguous).
pub type ResourceId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed allocation: {0}")]
    Malformed(String),
    #[error("buyer {buyer} has a partial assignment ({assigned} of {demanded} resources)")]
    PartialAssignment {
        buyer: UserId,
        assigned: usize,
        demanded: usize,
    },
}

/// Static description of one allocation step.
///
/// `req`, `off` and `seller_reserve_price` are indexed `[resource][user]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n_users: usize,
    pub n_resources: usize,
    #[serde(with = "bit_matrix")]
    pub adjacency: Vec<Vec<bool>>,
    pub req: Vec<Vec<f64>>,
    pub off: Vec<Vec<f64>>,
    pub buyer_reserve: Vec<f64>,
    pub seller_reserve_price: Vec<Vec<f64>>,
    pub price_increment: f64,
}

mod bit_matrix {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[Vec<bool>], s: S) -> Result<S::Ok, S::Error> {
        let bits: Vec<Vec<u8>> = m
            .iter()
            .map(|row| row.iter().map(|&b| u8::from(b)).collect())
            .collect();
        bits.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<bool>>, D::Error> {
        let bits = Vec::<Vec<u8>>::deserialize(d)?;
        bits.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(D::Error::custom(format!(
                            "adjacency entries must be 0 or 1, found {other}"
                        ))),
                    })
                    .collect()
            })
            .collect()
    }
}

impl Instance {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    pub fn is_neighbor(&self, i: UserId, j: UserId) -> bool {
        self.adjacency[i][j]
    }

    pub fn neighbors(&self, i: UserId) -> Vec<UserId> {
        (0..self.n_users)
            .filter(|&j| self.adjacency[i][j])
            .collect()
    }

    /// Resources that user `i` requests a strictly positive amount of.
    pub fn demanded(&self, i: UserId) -> Vec<ResourceId> {
        (0..self.n_resources)
            .filter(|&r| self.req[r][i] > EPS)
            .collect()
    }

    pub fn is_buyer(&self, i: UserId) -> bool {
        (0..self.n_resources).any(|r| self.req[r][i] > EPS)
    }

    pub fn buyers(&self) -> Vec<UserId> {
        (0..self.n_users).filter(|&i| self.is_buyer(i)).collect()
    }

    pub fn req_row(&self, i: UserId) -> Vec<f64> {
        (0..self.n_resources).map(|r| self.req[r][i]).collect()
    }

    pub fn bundle_size(&self, i: UserId) -> f64 {
        (0..self.n_resources).map(|r| self.req[r][i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CheckId {
    Dimensions,
    Symmetry,
    Diagonal,
    Negative,
    NonFinite,
    PriceIncrement,
}

/// One well-formedness problem found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: CheckId,
    pub index: Vec<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?}: {}", self.check, self.index, self.message)
    }
}

/// Returns every invariant violation of `inst`, sorted by check then index.
///
/// Shape problems are reported alone: element checks need well-formed
/// matrices to index into.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, r) = (inst.n_users, inst.n_resources);
    let mut dim = |index: Vec<usize>, message: String| {
        out.push(Violation {
            check: CheckId::Dimensions,
            index,
            message,
        })
    };
    if n == 0 {
        dim(vec![], "n_users must be positive".into());
    }
    if r == 0 {
        dim(vec![], "n_resources must be positive".into());
    }
    if inst.adjacency.len() != n || inst.adjacency.iter().any(|row| row.len() != n) {
        dim(vec![0], format!("adjacency must be {n}x{n}"));
    }
    for (k, (name, m)) in [
        ("req", &inst.req),
        ("off", &inst.off),
        ("seller_reserve_price", &inst.seller_reserve_price),
    ]
    .into_iter()
    .enumerate()
    {
        if m.len() != r || m.iter().any(|row| row.len() != n) {
            dim(vec![k + 1], format!("{name} must be {r}x{n}"));
        }
    }
    if inst.buyer_reserve.len() != n {
        dim(vec![4], format!("buyer_reserve must have {n} entries"));
    }
    if !out.is_empty() {
        return out;
    }

    for i in 0..n {
        if inst.adjacency[i][i] {
            out.push(Violation {
                check: CheckId::Diagonal,
                index: vec![i, i],
                message: format!("user {i} is adjacent to itself"),
            });
        }
        for j in i + 1..n {
            if inst.adjacency[i][j] != inst.adjacency[j][i] {
                out.push(Violation {
                    check: CheckId::Symmetry,
                    index: vec![i, j],
                    message: format!("adjacency[{i}][{j}] != adjacency[{j}][{i}]"),
                });
            }
        }
    }

    let mut value = |name: &str, index: Vec<usize>, v: f64| {
        if !v.is_finite() {
            out.push(Violation {
                check: CheckId::NonFinite,
                index,
                message: format!("{name} is not finite"),
            });
        } else if v < 0.0 {
            out.push(Violation {
                check: CheckId::Negative,
                index,
                message: format!("{name} is negative ({v})"),
            });
        }
    };
    for (k, (name, m)) in [
        ("req", &inst.req),
        ("off", &inst.off),
        ("seller_reserve_price", &inst.seller_reserve_price),
    ]
    .into_iter()
    .enumerate()
    {
        for (res, row) in m.iter().enumerate() {
            for (u, &v) in row.iter().enumerate() {
                value(name, vec![k, res, u], v);
            }
        }
    }
    for (u, &v) in inst.buyer_reserve.iter().enumerate() {
        value("buyer_reserve", vec![3, u], v);
    }
    if !(inst.price_increment.is_finite() && inst.price_increment > 0.0) {
        out.push(Violation {
            check: CheckId::PriceIncrement,
            index: vec![],
            message: format!(
                "price_increment must be positive and finite ({})",
                inst.price_increment
            ),
        });
    }

    out.sort_by(|a, b| (a.check, &a.index).cmp(&(b.check, &b.index)));
    out
}

/// Sparse decision tensor: buyer -> (resource -> seller).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    assignment: BTreeMap<UserId, BTreeMap<ResourceId, UserId>>,
}

impl Allocation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a whole bundle for `buyer`, replacing anything it had.
    pub fn assign_bundle(
        &mut self,
        buyer: UserId,
        choices: impl IntoIterator<Item = (ResourceId, UserId)>,
    ) {
        let bundle: BTreeMap<_, _> = choices.into_iter().collect();
        if bundle.is_empty() {
            self.assignment.remove(&buyer);
        } else {
            self.assignment.insert(buyer, bundle);
        }
    }

    pub fn remove_buyer(&mut self, buyer: UserId) -> Option<BTreeMap<ResourceId, UserId>> {
        self.assignment.remove(&buyer)
    }

    pub fn bundle(&self, buyer: UserId) -> Option<&BTreeMap<ResourceId, UserId>> {
        self.assignment.get(&buyer)
    }

    pub fn seller_of(&self, buyer: UserId, resource: ResourceId) -> Option<UserId> {
        self.assignment.get(&buyer)?.get(&resource).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, &BTreeMap<ResourceId, UserId>)> {
        self.assignment.iter().map(|(&b, m)| (b, m))
    }

    pub fn buyers(&self) -> impl Iterator<Item = UserId> + '_ {
        self.assignment.keys().copied()
    }

    /// Number of `X_irj = 1` entries.
    pub fn entry_count(&self) -> usize {
        self.assignment.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

fn check_ids(inst: &Instance, alloc: &Allocation) -> Result<(), ModelError> {
    for (buyer, bundle) in alloc.iter() {
        if buyer >= inst.n_users {
            return Err(ModelError::Malformed(format!(
                "buyer id {buyer} out of range"
            )));
        }
        for (&r, &j) in bundle {
            if r >= inst.n_resources {
                return Err(ModelError::Malformed(format!(
                    "resource id {r} out of range (buyer {buyer})"
                )));
            }
            if j >= inst.n_users {
                return Err(ModelError::Malformed(format!(
                    "seller id {j} out of range (buyer {buyer})"
                )));
            }
        }
    }
    Ok(())
}

/// True iff `alloc` satisfies all-or-none, single seller per resource,
/// per-assignment and aggregate capacity, and the neighbour restriction.
///
/// A buyer's bundle is complete when it covers exactly the resources the
/// buyer requests a positive amount of.
pub fn check_allocation(inst: &Instance, alloc: &Allocation) -> Result<bool, ModelError> {
    check_ids(inst, alloc)?;
    let mut used = vec![vec![0.0; inst.n_users]; inst.n_resources];
    for (buyer, bundle) in alloc.iter() {
        let demanded = inst.demanded(buyer);
        if demanded.is_empty() || !demanded.iter().copied().eq(bundle.keys().copied()) {
            return Ok(false);
        }
        for (&r, &j) in bundle {
            if !inst.is_neighbor(buyer, j) {
                return Ok(false);
            }
            let q = inst.req[r][buyer];
            if q > inst.off[r][j] + EPS {
                return Ok(false);
            }
            used[r][j] += q;
        }
    }
    let over = used
        .iter()
        .zip(&inst.off)
        .any(|(u, o)| u.iter().zip(o).any(|(u, o)| *u > o + EPS));
    Ok(!over)
}

/// Number of buyers with a complete bundle.
pub fn count_matches(inst: &Instance, alloc: &Allocation) -> Result<usize, ModelError> {
    check_ids(inst, alloc)?;
    for (buyer, bundle) in alloc.iter() {
        let demanded = inst.demanded(buyer);
        if !demanded.iter().copied().eq(bundle.keys().copied()) {
            return Err(ModelError::PartialAssignment {
                buyer,
                assigned: bundle.len(),
                demanded: demanded.len(),
            });
        }
    }
    Ok(alloc.iter().count())
}

/// Current unitary selling prices, indexed `[resource][seller]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBoard {
    prices: Vec<Vec<f64>>,
}

impl PriceBoard {
    pub fn new(prices: Vec<Vec<f64>>) -> Self {
        Self { prices }
    }

    pub fn from_reserve(inst: &Instance) -> Self {
        Self::new(inst.seller_reserve_price.clone())
    }

    pub fn uniform(n_resources: usize, n_users: usize, price: f64) -> Self {
        Self::new(vec![vec![price; n_users]; n_resources])
    }

    pub fn get(&self, r: ResourceId, j: UserId) -> f64 {
        self.prices[r][j]
    }

    pub fn raise(&mut self, r: ResourceId, j: UserId, delta: f64) {
        debug_assert!(delta >= 0.0);
        self.prices[r][j] += delta;
    }

    pub fn seller_prices(&self, j: UserId) -> Vec<f64> {
        self.prices.iter().map(|row| row[j]).collect()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.prices
    }

    /// True iff every price here is at least the matching price in `earlier`.
    pub fn dominates(&self, earlier: &PriceBoard) -> bool {
        self.prices
            .iter()
            .flatten()
            .zip(earlier.prices.iter().flatten())
            .all(|(now, before)| now >= before)
    }
}

/// Σ over selected `(r, j)` of `SP_rj · Req_r`.
pub fn bundle_cost(prices: &PriceBoard, req_row: &[f64], selection: &[Option<UserId>]) -> f64 {
    req_row
        .iter()
        .zip(selection)
        .enumerate()
        .filter_map(|(r, (&q, choice))| choice.map(|j| prices.get(r, j) * q))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wallet {
    balances: Vec<f64>,
}

impl Wallet {
    pub fn new(balances: Vec<f64>) -> Self {
        Self { balances }
    }

    pub fn uniform(n_users: usize, amount: f64) -> Self {
        Self::new(vec![amount; n_users])
    }

    pub fn balance(&self, user: UserId) -> f64 {
        self.balances[user]
    }

    pub fn balances(&self) -> &[f64] {
        &self.balances
    }

    pub fn len(&self) -> usize {
        self.balances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balances.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.balances.iter().sum()
    }

    pub(crate) fn balances_mut(&mut self) -> &mut [f64] {
        &mut self.balances
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    ReserveExceeded,
    NoFeasibleSeller,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::ReserveExceeded => "reserve-exceeded",
            DropReason::NoFeasibleSeller => "no-feasible-seller",
        })
    }
}

/// Tokens owed by `buyer` to `seller` for `quantity` items of `resource`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payment {
    pub buyer: UserId,
    pub seller: UserId,
    pub resource: ResourceId,
    pub quantity: f64,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub allocation: Allocation,
    pub final_prices: PriceBoard,
    pub payments: Vec<Payment>,
    pub rounds: usize,
    pub dropouts: BTreeMap<UserId, DropReason>,
}

impl AuctionOutcome {
    pub fn paid_by(&self, buyer: UserId) -> f64 {
        self.payments
            .iter()
            .filter(|p| p.buyer == buyer)
            .fold(0.0, |acc, p| acc + p.amount)
    }

    pub fn tokens_traded(&self) -> f64 {
        self.payments.iter().fold(0.0, |acc, p| acc + p.amount)
    }

    pub fn items_traded(&self) -> f64 {
        self.payments.iter().fold(0.0, |acc, p| acc + p.quantity)
    }
}
