//! Auction-based allocation of resource bundles among neighbouring peers.
//!
//! Peers either request or offer bundles of several resource types and can
//! only trade with direct neighbours. [`engine`] runs a synchronous ascending
//! clock auction that settles in virtual tokens, [`oracle`] computes the
//! maximum number of buyers any allocation could satisfy, and [`scenario`]
//! and [`metrics`] drive and summarise randomized experiments.

pub mod engine;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod sample;
pub mod scenario;
pub mod trace;

pub use engine::{
    buyer_select_bids, round_bound, run_auction_step, run_auction_step_observed, settle,
    BidSelection, BuyerView, EngineError, SellerRoundState,
};
pub use metrics::{aggregate_run, budget_histogram, confidence_interval, RunSummary, StepStats};
pub use model::{
    bundle_cost, check_allocation, count_matches, validate_instance, Allocation, AuctionOutcome,
    DropReason, Instance, ModelError, Payment, PriceBoard, Wallet,
};
pub use oracle::{brute_force_optimal, solve_optimal, OracleError, OracleResult};
pub use scenario::{
    generate_step_instance, generate_topology, run_replication, OraclePolicy, ReplicationHistory,
    ScenarioParams,
};
