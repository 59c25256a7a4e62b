//! Per-step statistics, replication-level confidence intervals and budget
//! histograms.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::count_matches;
use crate::scenario::{ReplicationHistory, StepRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("replication {0} was run with different scenario parameters")]
    MismatchedParams(usize),
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("step {step} of replication {replication}: {message}")]
    BadStep {
        replication: usize,
        step: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub matches_auction: usize,
    /// Oracle match count and whether it was proven optimal.
    pub matches_optimal: Option<(usize, bool)>,
    /// Tokens per item, `None` when nothing traded.
    pub avg_unit_price: Option<f64>,
    pub rounds: usize,
    pub tokens_traded: f64,
    pub items_traded: f64,
}

impl StepStats {
    pub fn from_record(rec: &StepRecord) -> Result<Self, crate::model::ModelError> {
        let tokens = rec.outcome.tokens_traded();
        let items = rec.outcome.items_traded();
        Ok(Self {
            matches_auction: count_matches(&rec.instance, &rec.outcome.allocation)?,
            matches_optimal: rec.oracle.as_ref().map(|o| (o.optimum, o.proven_optimal)),
            avg_unit_price: (items > 0.0).then(|| tokens / items),
            rounds: rec.outcome.rounds,
            tokens_traded: tokens,
            items_traded: items,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
    /// Set when fewer than two samples were given; `half_width` is 0.
    pub degenerate: bool,
}

/// Two-sided Student-t quantile `t_{1-α/2, dof}` for `confidence = 1-α`.
pub fn t_quantile(confidence: f64, dof: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 1");
    dist.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Sample mean with a Student-t half-width `t · s / √n`.
pub fn confidence_interval(samples: &[f64], confidence: f64) -> ConfidenceInterval {
    let n = samples.len();
    let mean = if n == 0 {
        0.0
    } else {
        samples.iter().sum::<f64>() / n as f64
    };
    if n < 2 {
        return ConfidenceInterval {
            mean,
            half_width: 0.0,
            degenerate: true,
        };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half_width = if var == 0.0 {
        0.0
    } else {
        t_quantile(confidence, n - 1) * var.sqrt() / (n as f64).sqrt()
    };
    ConfidenceInterval {
        mean,
        half_width,
        degenerate: false,
    }
}

/// Left-closed bins of `bin_width` anchored at 0; only non-empty bins are
/// listed, in increasing order.
pub fn budget_histogram(
    balances: &[f64],
    bin_width: f64,
) -> Result<Vec<(f64, usize)>, MetricsError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(MetricsError::BinWidth(bin_width));
    }
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for &b in balances {
        *bins.entry((b / bin_width).floor() as i64).or_default() += 1;
    }
    Ok(bins
        .into_iter()
        .map(|(k, c)| (k as f64 * bin_width, c))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSnapshot {
    pub step: usize,
    pub bins: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub replications: usize,
    pub auction: ConfidenceInterval,
    /// Present when every step of every replication ran the oracle.
    pub optimal: Option<ConfidenceInterval>,
    /// Oracle results that hit their time budget.
    pub unproven_steps: usize,
    /// `mean auction / mean optimal`, rounded to two decimals.
    pub ratio: Option<f64>,
    /// Pooled tokens per item over every trade.
    pub avg_price: Option<f64>,
    pub mean_rounds: f64,
    pub max_rounds: usize,
    /// Budget distribution of the first replication, after step
    /// `min(5, T)` and after the last step.
    pub histograms: Vec<BudgetSnapshot>,
}

/// Steps whose wallets are reported by [`aggregate_run`].
pub fn snapshot_steps(steps: usize) -> Vec<usize> {
    let mut out = vec![steps.min(5), steps];
    out.dedup();
    out
}

pub fn aggregate_run(
    histories: &[ReplicationHistory],
    bin_width: f64,
) -> Result<RunSummary, MetricsError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(MetricsError::BinWidth(bin_width));
    }
    let confidence = histories.first().map_or(0.9, |h| h.params.confidence);
    if let Some(first) = histories.first() {
        if let Some(h) = histories.iter().find(|h| h.params != first.params) {
            return Err(MetricsError::MismatchedParams(h.replication));
        }
    }

    let mut auction_totals = Vec::with_capacity(histories.len());
    let mut optimal_totals = Vec::with_capacity(histories.len());
    let mut all_have_oracle = true;
    let mut unproven_steps = 0;
    let (mut tokens, mut items) = (0.0, 0.0);
    let (mut round_sum, mut max_rounds, mut auctions) = (0usize, 0usize, 0usize);

    for h in histories {
        let (mut a, mut o) = (0usize, 0usize);
        for rec in &h.steps {
            let s = StepStats::from_record(rec).map_err(|e| MetricsError::BadStep {
                replication: h.replication,
                step: rec.step,
                message: e.to_string(),
            })?;
            a += s.matches_auction;
            match s.matches_optimal {
                Some((m, proven)) => {
                    o += m;
                    unproven_steps += usize::from(!proven);
                }
                None => all_have_oracle = false,
            }
            tokens += s.tokens_traded;
            items += s.items_traded;
            round_sum += s.rounds;
            max_rounds = max_rounds.max(s.rounds);
            auctions += 1;
        }
        auction_totals.push(a as f64);
        optimal_totals.push(o as f64);
    }

    let auction = confidence_interval(&auction_totals, confidence);
    let optimal = (all_have_oracle && !histories.is_empty())
        .then(|| confidence_interval(&optimal_totals, confidence));
    let ratio = optimal
        .filter(|o| o.mean > 0.0)
        .map(|o| (auction.mean / o.mean * 100.0).round() / 100.0);

    let mut histograms = Vec::new();
    if let Some(h) = histories.first() {
        for step in snapshot_steps(h.steps.len()) {
            let wallet = h.wallet_at(step).expect("snapshot step within history");
            histograms.push(BudgetSnapshot {
                step,
                bins: budget_histogram(wallet.balances(), bin_width)?,
            });
        }
    }

    Ok(RunSummary {
        replications: histories.len(),
        auction,
        optimal,
        unproven_steps,
        ratio,
        avg_price: (items > 0.0).then(|| tokens / items),
        mean_rounds: if auctions == 0 {
            0.0
        } else {
            round_sum as f64 / auctions as f64
        },
        max_rounds,
        histograms,
    })
}
