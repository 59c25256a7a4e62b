//! Synchronous-round ascending clock auction.
//!
//! Every round, each still-active buyer picks the cheapest neighbour able to
//! supply each requested resource in full, sellers aggregate the resulting
//! demand and raise the price of every over-demanded resource by the price
//! increment. The auction stops at the first round in which no seller
//! raises a price; the bids of that round become the allocation.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    validate_instance, Allocation, AuctionOutcome, DropReason, Instance, Payment, PriceBoard,
    ResourceId, UserId, Wallet, EPS,
};
use crate::trace::{AuctionObserver, TraceEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("wallet has {got} entries, instance has {expected} users")]
    WalletSize { expected: usize, got: usize },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("auction exceeded its round bound of {0}")]
    RoundBoundExceeded(usize),
    #[error("buyer {buyer} owes {owed} tokens but holds {balance}")]
    InsufficientBalance {
        buyer: UserId,
        owed: f64,
        balance: f64,
    },
}

/// What one buyer knows when it bids.
#[derive(Debug, Clone)]
pub struct BuyerView<'a> {
    pub buyer: UserId,
    pub neighbors: &'a [UserId],
    pub prices: &'a PriceBoard,
    /// Offers indexed `[resource][seller]`.
    pub offers: &'a [Vec<f64>],
    pub req: Vec<f64>,
    pub reserve: f64,
    /// `min(reserve, balance)`.
    pub cap: f64,
}

impl<'a> BuyerView<'a> {
    pub fn new(
        inst: &'a Instance,
        neighbors: &'a [UserId],
        prices: &'a PriceBoard,
        buyer: UserId,
        balance: f64,
    ) -> Self {
        let reserve = inst.buyer_reserve[buyer];
        Self {
            buyer,
            neighbors,
            prices,
            offers: &inst.off,
            req: inst.req_row(buyer),
            reserve,
            cap: reserve.min(balance),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidSelection {
    pub buyer: UserId,
    /// Chosen seller per resource; `None` for resources not requested or
    /// not reached before a withdrawal.
    pub choices: Vec<Option<UserId>>,
    /// Bundle cost accumulated so far (the full cost when not withdrawn).
    pub cost: f64,
    /// Neighbours able to cover each requested resource in full.
    pub feasible: Vec<Vec<UserId>>,
    pub withdrawn: Option<DropReason>,
}

impl BidSelection {
    pub fn bids(&self) -> impl Iterator<Item = (ResourceId, UserId)> + '_ {
        self.choices
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|j| (r, j)))
    }
}

/// Picks, resource by resource, the cheapest neighbour offering at least the
/// requested amount (lowest id on ties), withdrawing as soon as a resource
/// has no such neighbour or the running cost passes the buyer's cap.
pub fn buyer_select_bids(view: &BuyerView<'_>) -> BidSelection {
    let n_res = view.req.len();
    let mut sel = BidSelection {
        buyer: view.buyer,
        choices: vec![None; n_res],
        cost: 0.0,
        feasible: vec![Vec::new(); n_res],
        withdrawn: None,
    };
    for (r, &q) in view.req.iter().enumerate() {
        if q <= EPS {
            continue;
        }
        let feasible: Vec<UserId> = view
            .neighbors
            .iter()
            .copied()
            .filter(|&j| view.offers[r][j] + EPS >= q)
            .collect();
        let best = feasible
            .iter()
            .copied()
            .fold(None, |best: Option<UserId>, j| match best {
                Some(b) if view.prices.get(r, b) <= view.prices.get(r, j) => Some(b),
                _ => Some(j),
            });
        sel.feasible[r] = feasible;
        let Some(k) = best else {
            sel.withdrawn = Some(DropReason::NoFeasibleSeller);
            return sel;
        };
        sel.choices[r] = Some(k);
        sel.cost += view.prices.get(r, k) * q;
        if sel.cost > view.cap + EPS {
            sel.withdrawn = Some(DropReason::ReserveExceeded);
            return sel;
        }
    }
    sel
}

/// A request for `quantity` items of `resource` from `seller`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bid {
    pub buyer: UserId,
    pub seller: UserId,
    pub resource: ResourceId,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SellerRoundState {
    pub seller: UserId,
    pub offers: Vec<f64>,
    pub prices: Vec<f64>,
    pub demand: Vec<f64>,
    pub excess: bool,
    pub increment: f64,
}

impl SellerRoundState {
    pub fn new(seller: UserId, offers: Vec<f64>, prices: Vec<f64>, increment: f64) -> Self {
        let n = offers.len();
        Self {
            seller,
            offers,
            prices,
            demand: vec![0.0; n],
            excess: false,
            increment,
        }
    }

    pub fn from_instance(inst: &Instance, board: &PriceBoard, seller: UserId) -> Self {
        let offers = (0..inst.n_resources).map(|r| inst.off[r][seller]).collect();
        Self::new(
            seller,
            offers,
            board.seller_prices(seller),
            inst.price_increment,
        )
    }

    /// Re-aggregates demand from `bids` and raises the price of every
    /// resource whose demand exceeds the offer. `declared_req` is the
    /// `[resource][user]` request matrix bids are checked against.
    ///
    /// Returns the excess flag.
    pub fn update_prices(
        &mut self,
        bids: &[Bid],
        declared_req: &[Vec<f64>],
    ) -> Result<bool, EngineError> {
        self.demand.iter_mut().for_each(|d| *d = 0.0);
        for bid in bids {
            if bid.seller != self.seller {
                return Err(EngineError::ProtocolViolation(format!(
                    "bid from buyer {} addressed to seller {} delivered to seller {}",
                    bid.buyer, bid.seller, self.seller
                )));
            }
            let declared = declared_req
                .get(bid.resource)
                .and_then(|row| row.get(bid.buyer))
                .copied()
                .ok_or_else(|| {
                    EngineError::ProtocolViolation(format!(
                        "bid references unknown buyer {} or resource {}",
                        bid.buyer, bid.resource
                    ))
                })?;
            if bid.quantity > declared + EPS {
                return Err(EngineError::ProtocolViolation(format!(
                    "buyer {} bid {} of resource {} but declared {}",
                    bid.buyer, bid.quantity, bid.resource, declared
                )));
            }
            self.demand[bid.resource] += bid.quantity;
        }
        self.excess = false;
        for r in 0..self.offers.len() {
            if self.demand[r] > self.offers[r] + EPS {
                self.prices[r] += self.increment;
                self.excess = true;
            }
        }
        Ok(self.excess)
    }
}

/// Upper bound on bidding rounds: `1 + R·N·⌈P_max/ΔP⌉` with
/// `P_max = max RP_i / Req_ri + ΔP` over positive requests.
pub fn round_bound(inst: &Instance) -> usize {
    let dp = inst.price_increment;
    let mut p_max: f64 = 0.0;
    for r in 0..inst.n_resources {
        for i in 0..inst.n_users {
            let q = inst.req[r][i];
            if q > EPS {
                p_max = p_max.max(inst.buyer_reserve[i] / q);
            }
        }
    }
    p_max += dp;
    let steps = (p_max / dp).ceil();
    let bound = 1.0 + (inst.n_resources * inst.n_users) as f64 * steps;
    if bound >= usize::MAX as f64 {
        usize::MAX
    } else {
        bound as usize
    }
}

pub fn run_auction_step(inst: &Instance, wallets: &Wallet) -> Result<AuctionOutcome, EngineError> {
    run_auction_step_observed(inst, wallets, &mut ())
}

/// Runs the auction to quiescence, reporting every bid, withdrawal, price
/// rise and payment to `observer`. Payments are computed but not applied;
/// see [`settle`].
pub fn run_auction_step_observed(
    inst: &Instance,
    wallets: &Wallet,
    observer: &mut dyn AuctionObserver,
) -> Result<AuctionOutcome, EngineError> {
    let violations = validate_instance(inst);
    if let Some(first) = violations.first() {
        return Err(EngineError::InvalidInstance(first.to_string()));
    }
    if wallets.len() != inst.n_users {
        return Err(EngineError::WalletSize {
            expected: inst.n_users,
            got: wallets.len(),
        });
    }

    let neighbors: Vec<Vec<UserId>> = (0..inst.n_users).map(|i| inst.neighbors(i)).collect();
    let bound = round_bound(inst);
    let mut board = PriceBoard::from_reserve(inst);
    let mut active = inst.buyers();
    let mut dropouts = BTreeMap::new();
    let mut round = 0;

    let selections = loop {
        round += 1;
        if round > bound {
            return Err(EngineError::RoundBoundExceeded(bound));
        }

        let mut inbox: Vec<Vec<Bid>> = vec![Vec::new(); inst.n_users];
        let mut selections = Vec::with_capacity(active.len());
        let mut still_active = Vec::with_capacity(active.len());
        for &buyer in &active {
            let view = BuyerView::new(
                inst,
                &neighbors[buyer],
                &board,
                buyer,
                wallets.balance(buyer),
            );
            let sel = buyer_select_bids(&view);
            if let Some(reason) = sel.withdrawn {
                observer.on_event(&TraceEvent::Withdraw {
                    round,
                    buyer,
                    reason,
                    cost: sel.cost,
                    cap: view.cap,
                });
                dropouts.insert(buyer, reason);
                continue;
            }
            observer.on_event(&TraceEvent::Bid {
                round,
                buyer,
                choices: sel.bids().collect(),
                cost: sel.cost,
            });
            for (r, j) in sel.bids() {
                inbox[j].push(Bid {
                    buyer,
                    seller: j,
                    resource: r,
                    quantity: view.req[r],
                });
            }
            still_active.push(buyer);
            selections.push(sel);
        }
        active = still_active;

        let mut raised = false;
        for (seller, bids) in inbox.iter().enumerate() {
            if bids.is_empty() {
                continue;
            }
            let mut state = SellerRoundState::from_instance(inst, &board, seller);
            if !state.update_prices(bids, &inst.req)? {
                continue;
            }
            raised = true;
            for r in 0..inst.n_resources {
                let before = board.get(r, seller);
                if state.prices[r] > before {
                    board.raise(r, seller, state.prices[r] - before);
                    observer.on_event(&TraceEvent::PriceRaise {
                        round,
                        seller,
                        resource: r,
                        from: before,
                        to: board.get(r, seller),
                        demand: state.demand[r],
                        offer: state.offers[r],
                    });
                }
            }
        }
        observer.on_round_end(round, &board);
        if !raised {
            observer.on_event(&TraceEvent::Quiescent { round });
            break selections;
        }
    };

    let mut allocation = Allocation::new();
    let mut payments = Vec::new();
    for sel in &selections {
        allocation.assign_bundle(sel.buyer, sel.bids());
        for (r, j) in sel.bids() {
            let quantity = inst.req[r][sel.buyer];
            let payment = Payment {
                buyer: sel.buyer,
                seller: j,
                resource: r,
                quantity,
                amount: board.get(r, j) * quantity,
            };
            observer.on_event(&TraceEvent::Payment {
                round,
                buyer: payment.buyer,
                seller: payment.seller,
                resource: payment.resource,
                quantity: payment.quantity,
                amount: payment.amount,
            });
            payments.push(payment);
        }
    }

    Ok(AuctionOutcome {
        allocation,
        final_prices: board,
        payments,
        rounds: round,
        dropouts,
    })
}

/// Moves every payment from its buyer to its seller.
pub fn settle(outcome: &AuctionOutcome, wallets: &Wallet) -> Result<Wallet, EngineError> {
    let n = wallets.len();
    let mut owed: BTreeMap<UserId, f64> = BTreeMap::new();
    for p in &outcome.payments {
        if p.buyer >= n || p.seller >= n {
            return Err(EngineError::WalletSize {
                expected: p.buyer.max(p.seller) + 1,
                got: n,
            });
        }
        *owed.entry(p.buyer).or_default() += p.amount;
    }
    for (&buyer, &total) in &owed {
        let balance = wallets.balance(buyer);
        if total > balance + EPS {
            return Err(EngineError::InsufficientBalance {
                buyer,
                owed: total,
                balance,
            });
        }
    }
    let mut next = wallets.clone();
    let balances = next.balances_mut();
    for p in &outcome.payments {
        balances[p.buyer] -= p.amount;
        balances[p.seller] += p.amount;
    }
    Ok(next)
}
