//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::time::{Duration, Instant};

use peer_auction::engine::run_auction_step_observed;
use peer_auction::metrics::t_quantile;
use peer_auction::scenario::replication_rng;
use peer_auction::trace::AuctionObserver;
use peer_auction::{
    aggregate_run, brute_force_optimal, check_allocation, confidence_interval, count_matches,
    generate_step_instance, round_bound, run_auction_step, run_replication, settle, solve_optimal,
    Instance, OraclePolicy, PriceBoard, RunSummary, ScenarioParams, Wallet,
};
use peer_auction_cli::config::{Configuration, ExperimentConfig};
use peer_auction_cli::{cmd_demo, cmd_run};

const DEMO_LIMIT: Duration = Duration::from_secs(1);
const ORACLE_LIMIT: Duration = Duration::from_secs(30);
const DOMINANCE_LIMIT: Duration = Duration::from_secs(60);
const TABLE_LIMIT: Duration = Duration::from_secs(120);
const TREND_LIMIT: Duration = Duration::from_secs(600);
const TERMINATION_LIMIT: Duration = Duration::from_secs(120);

const AUCTION_RANGE: (f64, f64) = (11.6, 17.6);
const OPTIMAL_RANGE: (f64, f64) = (11.7, 17.7);
const SMALL_RATIO_MIN: f64 = 0.90;
const LARGE_RATIO_MIN: f64 = 0.85;
const LARGE_BUDGET: Duration = Duration::from_secs(60);
const STAT_TOL: f64 = 5e-5;
const MONEY_TOL: f64 = 1e-9;

const SEED: u64 = 1;

struct Verdict {
    ok: bool,
    detail: String,
}

impl Verdict {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            ok,
            detail: detail.into(),
        }
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let detail = format!(
        "{} [{:.2}s, limit {}s]",
        v.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    Verdict::new(v.ok && took < limit, detail)
}

/// Hand-derived transcript of the four-peer walkthrough (ids 1-based).
const GOLDEN_DEMO: &[&str] = &[
    "# round kind actor payload (ids are 1-based)",
    "1 bid 1 r1:3 r2:4 cost=8",
    "1 bid 2 r1:4 r2:4 cost=8",
    "1 raise 4 r2 1->2 demand=11 offer=10",
    "2 bid 1 r1:3 r2:4 cost=13",
    "2 withdraw 2 reserve-exceeded cost=14 cap=10",
    "2 end - quiescent",
    "2 pay 1 seller=3 r1 qty=3 tokens=3",
    "2 pay 1 seller=4 r2 qty=5 tokens=10",
    "buyer 2 withdrew: reserve 10 exceeded by cost 14",
    "buyer 1 matched: paid 13 tokens",
    "seller 3 final prices (1,1)",
    "seller 4 final prices (1,2)",
    "matches 1",
    "rounds 2",
];

fn golden_trace() -> Verdict {
    let mut buf = Vec::new();
    if let Err(e) = cmd_demo(&mut buf) {
        return Verdict::new(false, format!("demo failed: {e}"));
    }
    let text = String::from_utf8(buf).expect("utf-8 demo output");
    let got: Vec<&str> = text.lines().collect();
    match got.iter().zip(GOLDEN_DEMO).position(|(a, b)| a != b) {
        None if got.len() == GOLDEN_DEMO.len() => {
            Verdict::new(true, format!("{} lines identical", got.len()))
        }
        None => Verdict::new(
            false,
            format!("{} lines, expected {}", got.len(), GOLDEN_DEMO.len()),
        ),
        Some(i) => Verdict::new(
            false,
            format!("line {}: {:?} != {:?}", i + 1, got[i], GOLDEN_DEMO[i]),
        ),
    }
}

fn instance(k: u64, n: usize, r: usize, density: f64, buyer_fraction: f64) -> Instance {
    let params = ScenarioParams {
        buyer_fraction,
        ..ScenarioParams::new(n, r, density)
    };
    generate_step_instance(&params, &mut replication_rng(SEED, k))
}

fn oracle_vs_enumeration() -> Verdict {
    let mut checked = 0;
    let mut positive = 0;
    for k in 0..200u64 {
        let n = 2 + (k % 5) as usize;
        let r = 1 + (k / 5 % 3) as usize;
        // First half at the default buyer share, second half with more buyers.
        let bf = if k < 100 { 0.2 } else { 0.5 };
        let inst = instance(k, n, r, 0.5, bf);
        let exact = match solve_optimal(&inst, None) {
            Ok(res) => res,
            Err(e) => return Verdict::new(false, format!("instance {k}: {e}")),
        };
        let brute = match brute_force_optimal(&inst) {
            Ok(v) => v,
            Err(e) => return Verdict::new(false, format!("instance {k}: {e}")),
        };
        if !exact.proven_optimal || exact.optimum != brute {
            return Verdict::new(
                false,
                format!(
                    "instance {k}: oracle {} vs enumeration {brute}",
                    exact.optimum
                ),
            );
        }
        checked += 1;
        positive += usize::from(brute > 0);
    }
    Verdict::new(
        true,
        format!("{checked} instances equal ({positive} with a match)"),
    )
}

fn dominance() -> Verdict {
    let mut checked = 0;
    let mut gap = 0;
    for k in 0..240u64 {
        let n = 2 + (k % 11) as usize;
        let r = 1 + (k / 11 % 3) as usize;
        let bf = [0.2, 0.35, 0.5][(k % 3) as usize];
        let density = [0.3, 0.5, 0.8][(k / 3 % 3) as usize];
        let inst = instance(10_000 + k, n, r, density, bf);
        let out = match run_auction_step(&inst, &Wallet::uniform(n, 100.0)) {
            Ok(o) => o,
            Err(e) => return Verdict::new(false, format!("instance {k}: {e}")),
        };
        let best = match solve_optimal(&inst, None) {
            Ok(b) if b.proven_optimal => b,
            Ok(_) => return Verdict::new(false, format!("instance {k}: oracle not proven")),
            Err(e) => return Verdict::new(false, format!("instance {k}: {e}")),
        };
        let got = match count_matches(&inst, &out.allocation) {
            Ok(m) => m,
            Err(e) => return Verdict::new(false, format!("instance {k}: {e}")),
        };
        if got > best.optimum {
            return Verdict::new(
                false,
                format!("instance {k}: auction {got} > optimum {}", best.optimum),
            );
        }
        checked += 1;
        gap += usize::from(got < best.optimum);
    }
    Verdict::new(
        true,
        format!("{checked} instances, auction below optimum on {gap}"),
    )
}

fn run_config(
    n: usize,
    r: usize,
    density: f64,
    oracle: OraclePolicy,
) -> Result<RunSummary, String> {
    let params = ScenarioParams {
        master_seed: SEED,
        ..ScenarioParams::new(n, r, density)
    };
    let histories = (0..params.replications)
        .map(|rep| run_replication(&params, rep, oracle).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_run(&histories, 10.0).map_err(|e| e.to_string())
}

fn table_reproduction() -> Verdict {
    let small = match run_config(10, 3, 0.3, OraclePolicy::Exact) {
        Ok(s) => s,
        Err(e) => return Verdict::new(false, e),
    };
    let opt = small.optimal.expect("oracle ran on every step");
    let ratio = small.ratio.unwrap_or(0.0);
    let in_range = |x: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&x);
    let mut ok = in_range(small.auction.mean, AUCTION_RANGE)
        && in_range(opt.mean, OPTIMAL_RANGE)
        && ratio >= SMALL_RATIO_MIN
        && small.unproven_steps == 0;
    let mut detail = format!(
        "N=10 R=3: auction {:.2} ± {:.2} (want {:?}), optimal {:.2} ± {:.2} (want {:?}), ratio {:.2} (want ≥ {SMALL_RATIO_MIN})",
        small.auction.mean, small.auction.half_width, AUCTION_RANGE, opt.mean, opt.half_width,
        OPTIMAL_RANGE, ratio
    );
    for r in [3, 5, 7] {
        let large = match run_config(50, r, 0.3, OraclePolicy::Budget(LARGE_BUDGET)) {
            Ok(s) => s,
            Err(e) => return Verdict::new(false, e),
        };
        let ratio = large.ratio.unwrap_or(0.0);
        if large.unproven_steps == 0 {
            ok &= ratio >= LARGE_RATIO_MIN;
            detail += &format!("; N=50 R={r}: ratio {ratio:.2} (want ≥ {LARGE_RATIO_MIN})");
        } else {
            detail += &format!(
                "; N=50 R={r}: {} unproven steps, ratio skipped",
                large.unproven_steps
            );
        }
    }
    Verdict::new(ok, detail)
}

fn crowded_market() -> Verdict {
    let mut rows = Vec::new();
    for rho in [0.2, 0.4, 0.6, 0.8] {
        match run_config(50, 7, rho, OraclePolicy::Off) {
            Ok(s) => rows.push((rho, s)),
            Err(e) => return Verdict::new(false, e),
        }
    }
    let matches: Vec<f64> = rows.iter().map(|(_, s)| s.auction.mean).collect();
    let prices: Vec<f64> = rows
        .iter()
        .map(|(_, s)| s.avg_price.unwrap_or(0.0))
        .collect();
    let max_rounds: Vec<usize> = rows.iter().map(|(_, s)| s.max_rounds).collect();
    let fewer_when_crowded = matches[3] < matches[1].max(matches[2]);
    let prices_rise = prices.windows(2).all(|w| w[0] < w[1]);
    let rounds_rise = max_rounds.windows(2).all(|w| w[0] < w[1]);
    Verdict::new(
        fewer_when_crowded && prices_rise && rounds_rise,
        format!(
            "matches {matches:.2?} (ρ=0.8 below peak: {fewer_when_crowded}), price {prices:.3?} (rising: {prices_rise}), max rounds {max_rounds:?} (rising: {rounds_rise})"
        ),
    )
}

#[derive(Default)]
struct Boards(Vec<PriceBoard>);

impl AuctionObserver for Boards {
    fn on_round_end(&mut self, _round: usize, prices: &PriceBoard) {
        self.0.push(prices.clone());
    }
}

fn termination_and_conservation() -> Verdict {
    let mut checked = 0;
    let mut max_used = 0.0f64;
    for k in 0..600u64 {
        let n = 4 + (k % 17) as usize;
        let r = 1 + (k / 17 % 7) as usize;
        let density = [0.2, 0.4, 0.6, 0.8, 1.0][(k % 5) as usize];
        let bf = [0.2, 0.3, 0.5][(k % 3) as usize];
        let inst = instance(20_000 + k, n, r, density, bf);
        let wallets = Wallet::new(
            (0..n)
                .map(|i| ((k as usize * 37 + i * 11) % 150) as f64)
                .collect(),
        );
        let fail = |msg: String| Verdict::new(false, format!("instance {k}: {msg}"));

        let mut boards = Boards::default();
        let out = match run_auction_step_observed(&inst, &wallets, &mut boards) {
            Ok(o) => o,
            Err(e) => return fail(e.to_string()),
        };
        let bound = round_bound(&inst);
        if out.rounds > bound {
            return fail(format!("{} rounds > bound {bound}", out.rounds));
        }
        max_used = max_used.max(out.rounds as f64 / bound as f64);
        let mut prev = PriceBoard::from_reserve(&inst);
        for b in &boards.0 {
            if !b.dominates(&prev) {
                return fail("a price decreased".into());
            }
            prev = b.clone();
        }
        match check_allocation(&inst, &out.allocation) {
            Ok(true) => {}
            Ok(false) => return fail("infeasible allocation".into()),
            Err(e) => return fail(e.to_string()),
        }
        for buyer in out.allocation.buyers() {
            let cap = inst.buyer_reserve[buyer].min(wallets.balance(buyer));
            if out.paid_by(buyer) > cap + MONEY_TOL {
                return fail(format!(
                    "buyer {buyer} paid {} > cap {cap}",
                    out.paid_by(buyer)
                ));
            }
        }
        match settle(&out, &wallets) {
            Ok(after) if (after.total() - wallets.total()).abs() <= MONEY_TOL => {}
            Ok(after) => return fail(format!("supply {} -> {}", wallets.total(), after.total())),
            Err(e) => return fail(e.to_string()),
        }
        checked += 1;
    }
    Verdict::new(
        true,
        format!(
            "{checked} instances, at most {:.1}% of the round bound used",
            max_used * 100.0
        ),
    )
}

fn determinism() -> Verdict {
    let dirs = [tempfile::tempdir(), tempfile::tempdir()];
    let [Ok(a), Ok(b)] = dirs else {
        return Verdict::new(false, "cannot create temp dirs");
    };
    let config = |dir: &std::path::Path| ExperimentConfig {
        configurations: [(10, 3, 0.3), (20, 5, 0.5)]
            .into_iter()
            .map(|(n, r, rho)| Configuration {
                config_id: format!("n{n}-r{r}"),
                oracle: OraclePolicy::Exact,
                params: ScenarioParams {
                    replications: 4,
                    steps: 5,
                    master_seed: 77,
                    ..ScenarioParams::new(n, r, rho)
                },
            })
            .collect(),
        output_dir: dir.to_path_buf(),
        parallelism: 1,
        bin_width: 10.0,
    };
    for dir in [a.path(), b.path()] {
        if let Err(e) = cmd_run(&config(dir)) {
            return Verdict::new(false, format!("run failed: {e}"));
        }
    }
    let mut detail = Vec::new();
    let mut ok = true;
    for name in ["steps.csv", "summary.csv"] {
        let x = fs::read(a.path().join(name)).unwrap_or_default();
        let y = fs::read(b.path().join(name)).unwrap_or_default();
        let same = !x.is_empty() && x == y;
        ok &= same;
        detail.push(format!(
            "{name} {} bytes {}",
            x.len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    Verdict::new(ok, detail.join(", "))
}

fn statistics() -> Verdict {
    // Published two-sided 90% t-table values.
    let t4 = 2.1318;
    let t19 = 1.7291;

    let five = confidence_interval(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.9);
    let want_five = t4 * 2.5f64.sqrt() / 5f64.sqrt();

    // Twenty samples alternating 10 ± 2: mean 10, s = 2·√(20/19).
    let twenty: Vec<f64> = (0..20)
        .map(|i| if i % 2 == 0 { 12.0 } else { 8.0 })
        .collect();
    let ci20 = confidence_interval(&twenty, 0.9);
    let want_twenty = t19 * 2.0 * (20.0f64 / 19.0).sqrt() / 20f64.sqrt();

    let close = |a: f64, b: f64| (a - b).abs() < STAT_TOL;
    let checks = [
        ("t(0.95,4)", t_quantile(0.9, 4), t4),
        ("t(0.95,19)", t_quantile(0.9, 19), t19),
        ("mean{1..5}", five.mean, 3.0),
        ("hw{1..5}", five.half_width, want_five),
        ("mean20", ci20.mean, 10.0),
        ("hw20", ci20.half_width, want_twenty),
    ];
    let ok = checks.iter().all(|&(_, got, want)| close(got, want));
    Verdict::new(
        ok,
        checks
            .iter()
            .map(|(name, got, want)| format!("{name} {got:.4} vs {want:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Verdict);
    let criteria: [Criterion; 8] = [
        ("demo golden trace", DEMO_LIMIT, golden_trace),
        (
            "oracle equals enumeration",
            ORACLE_LIMIT,
            oracle_vs_enumeration,
        ),
        ("auction never beats optimum", DOMINANCE_LIMIT, dominance),
        (
            "N=10 R=3 reproduction and N=50 ratios",
            TABLE_LIMIT,
            table_reproduction,
        ),
        ("crowded-market trends", TREND_LIMIT, crowded_market),
        (
            "termination and conservation",
            TERMINATION_LIMIT,
            termination_and_conservation,
        ),
        ("run determinism", Duration::from_secs(120), determinism),
        (
            "t-quantiles and intervals",
            Duration::from_secs(1),
            statistics,
        ),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();

    let mut failed = Vec::new();
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let v = timed(limit, check);
        println!(
            "criterion {id} {}: {name}: {}",
            if v.ok { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.ok {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
