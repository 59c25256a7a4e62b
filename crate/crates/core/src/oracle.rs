//! Exact maximum-matching oracle and a brute-force reference enumerator.
//!
//! Once the set of matched buyers is fixed, the capacity constraints of
//! different resources no longer interact: the set is feasible iff, for
//! every resource separately, its members can be packed onto neighbouring
//! sellers. The branch-and-bound below therefore branches on buyers
//! (match / leave unmatched) and keeps one packing per resource, repairing
//! it with a small exact search only when a new buyer does not fit
//! directly.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{validate_instance, Allocation, Instance, ResourceId, UserId, EPS};

/// Enumeration limit for [`brute_force_optimal`].
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("instance needs {0} assignment combinations, above the brute-force limit")]
    TooLarge(u128),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub optimum: usize,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
struct Need {
    resource: ResourceId,
    qty: f64,
    /// Neighbours whose full offer covers `qty`.
    sellers: Vec<UserId>,
}

#[derive(Debug, Clone)]
struct Candidate {
    buyer: UserId,
    needs: Vec<Need>,
}

/// Buyers that can each be served on their own, with their per-resource
/// seller candidates.
fn candidates(inst: &Instance) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = inst
        .buyers()
        .into_iter()
        .filter_map(|buyer| {
            let needs: Vec<Need> = inst
                .demanded(buyer)
                .into_iter()
                .map(|r| {
                    let qty = inst.req[r][buyer];
                    let sellers = (0..inst.n_users)
                        .filter(|&j| inst.is_neighbor(buyer, j) && inst.off[r][j] + EPS >= qty)
                        .collect();
                    Need {
                        resource: r,
                        qty,
                        sellers,
                    }
                })
                .collect();
            needs
                .iter()
                .all(|n| !n.sellers.is_empty())
                .then_some(Candidate { buyer, needs })
        })
        .collect();
    // Largest bundles first; stable on id.
    out.sort_by(|a, b| {
        inst.bundle_size(b.buyer)
            .total_cmp(&inst.bundle_size(a.buyer))
            .then(a.buyer.cmp(&b.buyer))
    });
    out
}

/// Current packing of one resource: remaining capacity per seller and the
/// seller chosen for each member (indexed by candidate position).
#[derive(Debug, Clone)]
struct Packing {
    remaining: Vec<f64>,
    members: Vec<(usize, UserId)>,
}

struct Search<'a> {
    inst: &'a Instance,
    cands: Vec<Candidate>,
    packings: Vec<Packing>,
    matched: Vec<usize>,
    best: Vec<(usize, Vec<(ResourceId, UserId)>)>,
    nodes: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

impl<'a> Search<'a> {
    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.timed_out = true;
                }
            }
        }
        self.timed_out
    }

    fn need_of(&self, cand: usize, r: ResourceId) -> &Need {
        self.cands[cand]
            .needs
            .iter()
            .find(|n| n.resource == r)
            .expect("member packed on a resource it does not need")
    }

    /// Exact packing of `members` onto resource `r` from full offers.
    fn repack(&mut self, r: ResourceId, mut members: Vec<usize>) -> Option<Packing> {
        members.sort_by(|&a, &b| {
            let (na, nb) = (self.need_of(a, r), self.need_of(b, r));
            nb.qty
                .total_cmp(&na.qty)
                .then(na.sellers.len().cmp(&nb.sellers.len()))
                .then(a.cmp(&b))
        });
        let mut remaining = self.inst.off[r].clone();
        let mut chosen = Vec::with_capacity(members.len());
        let mut failed = HashSet::new();
        if self.pack_dfs(r, &members, 0, &mut remaining, &mut chosen, &mut failed) {
            Some(Packing {
                remaining,
                members: members.into_iter().zip(chosen).collect(),
            })
        } else {
            None
        }
    }

    fn pack_dfs(
        &mut self,
        r: ResourceId,
        members: &[usize],
        depth: usize,
        remaining: &mut Vec<f64>,
        chosen: &mut Vec<UserId>,
        failed: &mut HashSet<(usize, Vec<u64>)>,
    ) -> bool {
        if depth == members.len() {
            return true;
        }
        if self.tick() {
            return false;
        }
        let key = (
            depth,
            remaining.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        );
        if failed.contains(&key) {
            return false;
        }
        let need = self.need_of(members[depth], r).clone();
        for &j in &need.sellers {
            if remaining[j] + EPS < need.qty {
                continue;
            }
            remaining[j] -= need.qty;
            chosen.push(j);
            if self.pack_dfs(r, members, depth + 1, remaining, chosen, failed) {
                return true;
            }
            chosen.pop();
            remaining[j] += need.qty;
            if self.timed_out {
                return false;
            }
        }
        failed.insert(key);
        false
    }

    /// Tries to add candidate `c` to every packing it needs. On success
    /// returns the packings it replaced, for restoring on backtrack.
    fn admit(&mut self, c: usize) -> Option<Vec<(ResourceId, Packing)>> {
        let mut saved = Vec::new();
        let needs = self.cands[c].needs.clone();
        for need in &needs {
            let r = need.resource;
            let pack = &self.packings[r];
            // Best fit: the tightest seller that still has room.
            let direct = need
                .sellers
                .iter()
                .copied()
                .filter(|&j| pack.remaining[j] + EPS >= need.qty)
                .min_by(|&a, &b| {
                    pack.remaining[a]
                        .total_cmp(&pack.remaining[b])
                        .then(a.cmp(&b))
                });
            let next = match direct {
                Some(j) => {
                    let mut p = pack.clone();
                    p.remaining[j] -= need.qty;
                    p.members.push((c, j));
                    Some(p)
                }
                None => {
                    let mut members: Vec<usize> = pack.members.iter().map(|m| m.0).collect();
                    members.push(c);
                    self.repack(r, members)
                }
            };
            match next {
                Some(p) => saved.push((r, std::mem::replace(&mut self.packings[r], p))),
                None => {
                    self.restore(saved);
                    return None;
                }
            }
        }
        Some(saved)
    }

    fn restore(&mut self, saved: Vec<(ResourceId, Packing)>) {
        for (r, p) in saved.into_iter().rev() {
            self.packings[r] = p;
        }
    }

    fn record_incumbent(&mut self) {
        self.best = self
            .matched
            .iter()
            .map(|&c| {
                let bundle = self.cands[c]
                    .needs
                    .iter()
                    .map(|n| {
                        let seller = self.packings[n.resource]
                            .members
                            .iter()
                            .find(|m| m.0 == c)
                            .map(|m| m.1)
                            .expect("matched buyer missing from packing");
                        (n.resource, seller)
                    })
                    .collect();
                (self.cands[c].buyer, bundle)
            })
            .collect();
    }

    fn branch(&mut self, k: usize) {
        if self.tick() {
            return;
        }
        if self.matched.len() > self.best.len() {
            self.record_incumbent();
        }
        if k == self.cands.len() {
            return;
        }
        if self.matched.len() + (self.cands.len() - k) <= self.best.len() {
            return;
        }
        if let Some(saved) = self.admit(k) {
            self.matched.push(k);
            self.branch(k + 1);
            self.matched.pop();
            self.restore(saved);
            if self.timed_out {
                return;
            }
        }
        self.branch(k + 1);
    }
}

/// Maximum number of fully matched buyers, by branch-and-bound.
///
/// With a `time_budget` the best allocation found so far is returned once
/// the budget runs out, flagged as not proven optimal.
pub fn solve_optimal(
    inst: &Instance,
    time_budget: Option<Duration>,
) -> Result<OracleResult, OracleError> {
    if let Some(v) = validate_instance(inst).first() {
        return Err(OracleError::InvalidInstance(v.to_string()));
    }
    let start = Instant::now();
    let mut search = Search {
        inst,
        cands: candidates(inst),
        packings: (0..inst.n_resources)
            .map(|r| Packing {
                remaining: inst.off[r].clone(),
                members: Vec::new(),
            })
            .collect(),
        matched: Vec::new(),
        best: Vec::new(),
        nodes: 0,
        deadline: time_budget.map(|b| start + b),
        timed_out: false,
    };
    search.branch(0);

    let mut allocation = Allocation::new();
    for (buyer, bundle) in &search.best {
        allocation.assign_bundle(*buyer, bundle.iter().copied());
    }
    Ok(OracleResult {
        optimum: search.best.len(),
        allocation,
        proven_optimal: !search.timed_out,
        nodes_explored: search.nodes,
        elapsed: start.elapsed(),
    })
}

/// Exhaustive maximum: every buyer either unmatched or given one of its
/// complete neighbour assignments, capacities checked at the leaves.
pub fn brute_force_optimal(inst: &Instance) -> Result<usize, OracleError> {
    if let Some(v) = validate_instance(inst).first() {
        return Err(OracleError::InvalidInstance(v.to_string()));
    }
    // Per buyer: for each demanded resource, (resource, qty, sellers).
    let options: Vec<Vec<(ResourceId, f64, Vec<UserId>)>> = inst
        .buyers()
        .into_iter()
        .map(|b| {
            inst.demanded(b)
                .into_iter()
                .map(|r| {
                    let q = inst.req[r][b];
                    let sellers = (0..inst.n_users)
                        .filter(|&j| inst.is_neighbor(b, j) && inst.off[r][j] + EPS >= q)
                        .collect();
                    (r, q, sellers)
                })
                .collect()
        })
        .collect();
    let mut combos: u128 = 1;
    for needs in &options {
        let per_buyer = needs
            .iter()
            .fold(1u128, |acc, n| acc.saturating_mul(n.2.len() as u128));
        combos = combos.saturating_mul(per_buyer + 1);
    }
    if combos > BRUTE_FORCE_LIMIT {
        return Err(OracleError::TooLarge(combos));
    }

    struct Enum<'a> {
        inst: &'a Instance,
        options: Vec<Vec<(ResourceId, f64, Vec<UserId>)>>,
        used: Vec<Vec<f64>>,
        over: usize,
        best: usize,
    }
    impl Enum<'_> {
        fn add(&mut self, r: ResourceId, j: UserId, q: f64) {
            let cap = self.inst.off[r][j] + EPS;
            let was = self.used[r][j] > cap;
            self.used[r][j] += q;
            self.over += usize::from(!was && self.used[r][j] > cap);
        }
        fn remove(&mut self, r: ResourceId, j: UserId, q: f64) {
            let cap = self.inst.off[r][j] + EPS;
            let was = self.used[r][j] > cap;
            self.used[r][j] -= q;
            self.over -= usize::from(was && self.used[r][j] <= cap);
        }
        fn buyer(&mut self, b: usize, matched: usize) {
            if b == self.options.len() {
                if self.over == 0 {
                    self.best = self.best.max(matched);
                }
                return;
            }
            self.buyer(b + 1, matched);
            self.resource(b, 0, matched);
        }
        fn resource(&mut self, b: usize, k: usize, matched: usize) {
            if k == self.options[b].len() {
                self.buyer(b + 1, matched + 1);
                return;
            }
            let (r, q) = (self.options[b][k].0, self.options[b][k].1);
            for idx in 0..self.options[b][k].2.len() {
                let j = self.options[b][k].2[idx];
                self.add(r, j, q);
                self.resource(b, k + 1, matched);
                self.remove(r, j, q);
            }
        }
    }

    let mut e = Enum {
        inst,
        options,
        used: vec![vec![0.0; inst.n_users]; inst.n_resources],
        over: 0,
        best: 0,
    };
    e.buyer(0, 0);
    Ok(e.best)
}
