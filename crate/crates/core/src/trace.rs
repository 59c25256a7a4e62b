//! Line-oriented step traces: `<round> <kind> <actor> <payload>`.

use std::fmt::Write as _;

use crate::model::{Allocation, DropReason, PriceBoard, ResourceId, UserId};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Bid {
        round: usize,
        buyer: UserId,
        choices: Vec<(ResourceId, UserId)>,
        cost: f64,
    },
    Withdraw {
        round: usize,
        buyer: UserId,
        reason: DropReason,
        cost: f64,
        cap: f64,
    },
    PriceRaise {
        round: usize,
        seller: UserId,
        resource: ResourceId,
        from: f64,
        to: f64,
        demand: f64,
        offer: f64,
    },
    Quiescent {
        round: usize,
    },
    Payment {
        round: usize,
        buyer: UserId,
        seller: UserId,
        resource: ResourceId,
        quantity: f64,
        amount: f64,
    },
}

impl TraceEvent {
    /// Renders the event as one line; `base` is added to every user and
    /// resource id (0 for raw ids, 1 for 1-based display).
    pub fn line(&self, base: usize) -> String {
        match self {
            TraceEvent::Bid {
                round,
                buyer,
                choices,
                cost,
            } => {
                let mut s = format!("{round} bid {}", buyer + base);
                for (r, j) in choices {
                    let _ = write!(s, " r{}:{}", r + base, j + base);
                }
                let _ = write!(s, " cost={cost}");
                s
            }
            TraceEvent::Withdraw {
                round,
                buyer,
                reason,
                cost,
                cap,
            } => format!(
                "{round} withdraw {} {reason} cost={cost} cap={cap}",
                buyer + base
            ),
            TraceEvent::PriceRaise {
                round,
                seller,
                resource,
                from,
                to,
                demand,
                offer,
            } => format!(
                "{round} raise {} r{} {from}->{to} demand={demand} offer={offer}",
                seller + base,
                resource + base
            ),
            TraceEvent::Quiescent { round } => format!("{round} end - quiescent"),
            TraceEvent::Payment {
                round,
                buyer,
                seller,
                resource,
                quantity,
                amount,
            } => format!(
                "{round} pay {} seller={} r{} qty={quantity} tokens={amount}",
                buyer + base,
                seller + base,
                resource + base
            ),
        }
    }
}

/// Receives engine events as they happen.
pub trait AuctionObserver {
    fn on_event(&mut self, _event: &TraceEvent) {}
    fn on_round_end(&mut self, _round: usize, _prices: &PriceBoard) {}
}

impl AuctionObserver for () {}

impl AuctionObserver for Vec<TraceEvent> {
    fn on_event(&mut self, event: &TraceEvent) {
        self.push(event.clone());
    }
}

/// One `assign` line per matched buyer, tagged with `round`.
pub fn allocation_lines(alloc: &Allocation, round: usize, base: usize) -> Vec<String> {
    alloc
        .iter()
        .map(|(buyer, bundle)| {
            let mut s = format!("{round} assign {}", buyer + base);
            for (r, j) in bundle {
                let _ = write!(s, " r{}:{}", r + base, j + base);
            }
            s
        })
        .collect()
}
