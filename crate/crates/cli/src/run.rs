//! The `run` subcommand: every configuration × replication, then CSV output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use peer_auction::metrics::{aggregate_run, StepStats};
use peer_auction::scenario::{RNG_NAME, SEED_SCHEME};
use peer_auction::{run_replication, ReplicationHistory, RunSummary};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Configuration, ExperimentConfig};
use crate::error::CliError;

#[derive(Debug, Serialize)]
struct StepRow<'a> {
    config_id: &'a str,
    replication: usize,
    step: usize,
    matches_auction: usize,
    matches_optimal: Option<usize>,
    proven: Option<bool>,
    rounds: usize,
    tokens_traded: f64,
    items_traded: f64,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    config_id: &'a str,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "R")]
    r: usize,
    density: f64,
    mean_auction: f64,
    ci_auction: f64,
    mean_optimal: Option<f64>,
    ci_optimal: Option<f64>,
    ratio: Option<f64>,
    avg_price: Option<f64>,
    mean_rounds: f64,
    max_rounds: usize,
}

#[derive(Debug, Serialize)]
struct HistogramRow<'a> {
    config_id: &'a str,
    snapshot_step: usize,
    bin_lower: f64,
    count: usize,
}

/// Per-configuration results of a run, in configuration order.
#[derive(Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub summaries: Vec<(String, RunSummary)>,
}

fn simulate(
    cfg: &ExperimentConfig,
) -> Result<Vec<(&Configuration, Vec<ReplicationHistory>)>, CliError> {
    let jobs: Vec<(usize, usize)> = cfg
        .configurations
        .iter()
        .enumerate()
        .flat_map(|(c, conf)| (0..conf.params.replications).map(move |rep| (c, rep)))
        .collect();
    let work = |&(c, rep): &(usize, usize)| {
        let conf = &cfg.configurations[c];
        run_replication(&conf.params, rep, conf.oracle)
            .map(|h| (c, h))
            .map_err(|e| CliError::Runtime(format!("{} replication {rep}: {e}", conf.config_id)))
    };
    let mut done: Vec<(usize, ReplicationHistory)> = if cfg.parallelism <= 1 {
        jobs.iter().map(work).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(work).collect::<Result<_, _>>())?
    };
    done.sort_by_key(|(c, h)| (*c, h.replication));

    let mut grouped: Vec<(&Configuration, Vec<ReplicationHistory>)> =
        cfg.configurations.iter().map(|c| (c, Vec::new())).collect();
    for (c, h) in done {
        grouped[c].1.push(h);
    }
    Ok(grouped)
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>, CliError> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;

    let results = simulate(cfg)?;

    let mut steps = writer(&cfg.output_dir, "steps.csv")?;
    let mut summary = writer(&cfg.output_dir, "summary.csv")?;
    let mut histogram = writer(&cfg.output_dir, "histogram.csv")?;
    let mut summaries = Vec::with_capacity(results.len());

    for (conf, histories) in &results {
        let id = conf.config_id.as_str();
        for h in histories {
            for rec in &h.steps {
                let s = StepStats::from_record(rec)
                    .map_err(|e| CliError::Runtime(format!("{id}: {e}")))?;
                steps.serialize(StepRow {
                    config_id: id,
                    replication: h.replication,
                    step: rec.step,
                    matches_auction: s.matches_auction,
                    matches_optimal: s.matches_optimal.map(|m| m.0),
                    proven: s.matches_optimal.map(|m| m.1),
                    rounds: s.rounds,
                    tokens_traded: s.tokens_traded,
                    items_traded: s.items_traded,
                })?;
            }
        }

        let sum = aggregate_run(histories, cfg.bin_width)
            .map_err(|e| CliError::Runtime(format!("{id}: {e}")))?;
        summary.serialize(SummaryRow {
            config_id: id,
            n: conf.params.n_users,
            r: conf.params.n_resources,
            density: conf.params.density,
            mean_auction: sum.auction.mean,
            ci_auction: sum.auction.half_width,
            mean_optimal: sum.optimal.map(|o| o.mean),
            ci_optimal: sum.optimal.map(|o| o.half_width),
            ratio: sum.ratio,
            avg_price: sum.avg_price,
            mean_rounds: sum.mean_rounds,
            max_rounds: sum.max_rounds,
        })?;
        for snap in &sum.histograms {
            for &(bin_lower, count) in &snap.bins {
                histogram.serialize(HistogramRow {
                    config_id: id,
                    snapshot_step: snap.step,
                    bin_lower,
                    count,
                })?;
            }
        }
        summaries.push((conf.config_id.clone(), sum));
    }
    steps
        .flush()
        .map_err(|e| CliError::io(&cfg.output_dir.join("steps.csv"), e))?;
    summary
        .flush()
        .map_err(|e| CliError::io(&cfg.output_dir.join("summary.csv"), e))?;
    histogram
        .flush()
        .map_err(|e| CliError::io(&cfg.output_dir.join("histogram.csv"), e))?;

    let metadata = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RNG_NAME,
        "seed_scheme": SEED_SCHEME,
        "parallelism": cfg.parallelism,
        "bin_width": cfg.bin_width,
        "started_unix_secs": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "wall_clock_secs": clock.elapsed().as_secs_f64(),
        "configurations": cfg.configurations.iter().map(|c| json!({
            "config_id": c.config_id,
            "oracle": c.oracle.to_string(),
            "params": c.params,
        })).collect::<Vec<_>>(),
    });
    let meta_path = cfg.output_dir.join("metadata.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&metadata).expect("json"),
    )
    .map_err(|e| CliError::io(&meta_path, e))?;

    Ok(RunReport {
        output_dir: cfg.output_dir.clone(),
        summaries,
    })
}
