//! The `demo`, `oracle` and `gen` subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use peer_auction::engine::run_auction_step_observed;
use peer_auction::sample::four_peer_instance;
use peer_auction::scenario::replication_rng;
use peer_auction::trace::{allocation_lines, TraceEvent};
use peer_auction::{
    generate_step_instance, solve_optimal, validate_instance, DropReason, Instance, ScenarioParams,
    Wallet,
};

use crate::error::CliError;

fn out_err(e: std::io::Error) -> CliError {
    CliError::io(Path::new("<stdout>"), e)
}

/// Replays the four-peer walkthrough with 1-based ids and 100 tokens each.
pub fn cmd_demo(out: &mut dyn Write) -> Result<(), CliError> {
    let inst = four_peer_instance();
    let wallets = Wallet::uniform(inst.n_users, 100.0);
    let mut events: Vec<TraceEvent> = Vec::new();
    let outcome = run_auction_step_observed(&inst, &wallets, &mut events)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut w = |s: String| writeln!(out, "{s}").map_err(out_err);
    w("# round kind actor payload (ids are 1-based)".to_string())?;
    for ev in &events {
        w(ev.line(1))?;
    }
    for (&buyer, reason) in &outcome.dropouts {
        let msg = match reason {
            DropReason::ReserveExceeded => {
                let cost = events.iter().find_map(|e| match e {
                    TraceEvent::Withdraw { buyer: b, cost, .. } if *b == buyer => Some(*cost),
                    _ => None,
                });
                format!(
                    "buyer {} withdrew: reserve {} exceeded by cost {}",
                    buyer + 1,
                    inst.buyer_reserve[buyer],
                    cost.unwrap_or(f64::NAN)
                )
            }
            DropReason::NoFeasibleSeller => {
                format!(
                    "buyer {} withdrew: no neighbour can supply its bundle",
                    buyer + 1
                )
            }
        };
        w(msg)?;
    }
    for buyer in outcome.allocation.buyers() {
        w(format!(
            "buyer {} matched: paid {} tokens",
            buyer + 1,
            outcome.paid_by(buyer)
        ))?;
    }
    for seller in 0..inst.n_users {
        if (0..inst.n_resources).all(|r| inst.off[r][seller] == 0.0) {
            continue;
        }
        let prices: Vec<String> = outcome
            .final_prices
            .seller_prices(seller)
            .iter()
            .map(|p| p.to_string())
            .collect();
        w(format!(
            "seller {} final prices ({})",
            seller + 1,
            prices.join(",")
        ))?;
    }
    w(format!("matches {}", outcome.allocation.iter().count()))?;
    w(format!("rounds {}", outcome.rounds))?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let inst = Instance::from_json(&text).map_err(|e| {
        CliError::Config(vec![format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        )])
    })?;
    let violations = validate_instance(&inst);
    if !violations.is_empty() {
        return Err(CliError::Config(
            violations
                .iter()
                .map(|v| format!("{}: {v}", path.display()))
                .collect(),
        ));
    }
    Ok(inst)
}

pub fn cmd_oracle(
    path: &Path,
    budget: Option<Duration>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let inst = read_instance(path)?;
    let res = solve_optimal(&inst, budget).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut lines = vec![
        format!("optimum {}", res.optimum),
        format!("proven {}", res.proven_optimal),
        format!("nodes {}", res.nodes_explored),
        format!("elapsed_ms {:.3}", res.elapsed.as_secs_f64() * 1e3),
    ];
    lines.extend(allocation_lines(&res.allocation, 0, 0));
    for l in lines {
        writeln!(out, "{l}").map_err(out_err)?;
    }
    Ok(())
}

/// Writes one generated step instance; the same params and seed always
/// give the same file.
pub fn cmd_gen(params: &ScenarioParams, seed: u64, out_path: &Path) -> Result<(), CliError> {
    let errs = params.validate();
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let mut rng = replication_rng(seed, 0);
    let inst = generate_step_instance(params, &mut rng);
    fs::write(out_path, inst.to_json() + "\n").map_err(|e| CliError::io(out_path, e))
}
