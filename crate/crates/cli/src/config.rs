//! Experiment configuration files.
//!
//! ```json
//! {
//!   "master_seed": 2011,
//!   "output_dir": "results",
//!   "parallelism": 4,
//!   "configurations": [
//!     { "config_id": "n10-r3", "n_users": 10, "n_resources": 3, "density": 0.3,
//!       "oracle": "exact" }
//!   ]
//! }
//! ```
//!
//! Every [`ScenarioParams`] field may appear in a configuration entry;
//! missing fields take their defaults. Top-level `master_seed`,
//! `replications`, `steps` and `oracle` apply to entries that do not set
//! them.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use peer_auction::{OraclePolicy, ScenarioParams};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::error::CliError;

pub const DEFAULT_ORACLE: &str = "budget=60";

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub config_id: String,
    pub oracle: OraclePolicy,
    pub params: ScenarioParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub configurations: Vec<Configuration>,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub bin_width: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    parallelism: Option<usize>,
    master_seed: Option<u64>,
    replications: Option<usize>,
    steps: Option<usize>,
    oracle: Option<OraclePolicy>,
    bin_width: Option<f64>,
    configurations: Vec<Map<String, Value>>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub parallel: Option<usize>,
    pub oracle: Option<OraclePolicy>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, &path.display().to_string(), overrides)
}

pub fn parse(
    text: &str,
    origin: &str,
    overrides: &Overrides,
) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
        CliError::Config(vec![format!("{origin}:{}:{}: {e}", e.line(), e.column())])
    })?;

    let mut diags = Vec::new();
    let default_oracle = overrides.oracle.or(raw.oracle).unwrap_or_else(|| {
        DEFAULT_ORACLE
            .parse()
            .expect("default oracle policy parses")
    });
    let mut seen = HashSet::new();
    let mut configurations = Vec::with_capacity(raw.configurations.len());

    if raw.configurations.is_empty() {
        diags.push("configurations: at least one configuration is required".to_string());
    }
    for (k, mut entry) in raw.configurations.into_iter().enumerate() {
        let at = format!("configurations[{k}]");
        let config_id = match entry.remove("config_id") {
            Some(Value::String(s)) if !s.is_empty() => s,
            Some(_) => {
                diags.push(format!("{at}.config_id: must be a non-empty string"));
                continue;
            }
            None => {
                diags.push(format!("{at}.config_id: missing"));
                continue;
            }
        };
        if !seen.insert(config_id.clone()) {
            diags.push(format!("{at}.config_id: duplicate id {config_id:?}"));
        }
        let oracle = match entry.remove("oracle") {
            None => default_oracle,
            Some(v) => match OraclePolicy::deserialize(&v) {
                Ok(p) => overrides.oracle.unwrap_or(p),
                Err(e) => {
                    diags.push(format!("{at}.oracle: {e}"));
                    continue;
                }
            },
        };
        for (key, value) in [
            ("master_seed", raw.master_seed.map(Value::from)),
            ("replications", raw.replications.map(Value::from)),
            ("steps", raw.steps.map(Value::from)),
        ] {
            if let Some(v) = value {
                entry.entry(key).or_insert(v);
            }
        }
        let mut params = match ScenarioParams::deserialize(Value::Object(entry)) {
            Ok(p) => p,
            Err(e) => {
                diags.push(format!("{at} ({config_id}): {e}"));
                continue;
            }
        };
        if let Some(seed) = overrides.seed {
            params.master_seed = seed;
        }
        if let Some(r) = overrides.replications {
            params.replications = r;
        }
        for msg in params.validate() {
            diags.push(format!("{at}.{msg}"));
        }
        configurations.push(Configuration {
            config_id,
            oracle,
            params,
        });
    }

    let parallelism = overrides.parallel.or(raw.parallelism).unwrap_or(1);
    if parallelism == 0 {
        diags.push("parallelism: must be at least 1".to_string());
    }
    let bin_width = raw.bin_width.unwrap_or(10.0);
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        diags.push(format!("bin_width: {bin_width} must be positive"));
    }
    if !diags.is_empty() {
        return Err(CliError::Config(diags));
    }

    Ok(ExperimentConfig {
        configurations,
        output_dir: overrides
            .out_dir
            .clone()
            .or(raw.output_dir)
            .unwrap_or_else(|| PathBuf::from("results")),
        parallelism,
        bin_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn parse_ok(text: &str) -> ExperimentConfig {
        parse(text, "test.json", &Overrides::default()).unwrap()
    }

    fn diagnostics(text: &str) -> Vec<String> {
        match parse(text, "test.json", &Overrides::default()) {
            Err(CliError::Config(d)) => d,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = parse_ok(
            r#"{"master_seed": 9, "configurations": [
                {"config_id": "a", "n_users": 20, "n_resources": 5}]}"#,
        );
        let c = &cfg.configurations[0];
        assert_eq!(c.params.master_seed, 9);
        assert_eq!(c.params.n_users, 20);
        assert_eq!(c.params.density, 0.3);
        assert_eq!(c.params.replications, 20);
        assert_eq!(c.oracle, OraclePolicy::Budget(Duration::from_secs(60)));
        assert_eq!(cfg.parallelism, 1);
        assert_eq!(cfg.output_dir, PathBuf::from("results"));
    }

    #[test]
    fn entry_values_beat_top_level() {
        let cfg = parse_ok(
            r#"{"master_seed": 9, "replications": 3, "oracle": "off", "configurations": [
                {"config_id": "a", "master_seed": 4, "oracle": "exact"},
                {"config_id": "b"}]}"#,
        );
        assert_eq!(cfg.configurations[0].params.master_seed, 4);
        assert_eq!(cfg.configurations[0].oracle, OraclePolicy::Exact);
        assert_eq!(cfg.configurations[1].params.master_seed, 9);
        assert_eq!(cfg.configurations[1].params.replications, 3);
        assert_eq!(cfg.configurations[1].oracle, OraclePolicy::Off);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            seed: Some(1),
            replications: Some(2),
            parallel: Some(3),
            oracle: Some(OraclePolicy::Off),
            out_dir: Some("x".into()),
        };
        let cfg = parse(
            r#"{"configurations": [{"config_id": "a", "oracle": "exact", "master_seed": 5}]}"#,
            "t",
            &o,
        )
        .unwrap();
        let c = &cfg.configurations[0];
        assert_eq!((c.params.master_seed, c.params.replications), (1, 2));
        assert_eq!(c.oracle, OraclePolicy::Off);
        assert_eq!(
            (cfg.parallelism, cfg.output_dir.clone()),
            (3, PathBuf::from("x"))
        );
    }

    #[test]
    fn duplicate_ids_are_reported() {
        let d = diagnostics(r#"{"configurations": [{"config_id": "a"}, {"config_id": "a"}]}"#);
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("duplicate"), "{d:?}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let d = diagnostics("{\n  \"configurations\": [\n    {\"config_id\": }\n]}");
        assert!(d[0].starts_with("test.json:3:"), "{d:?}");
    }

    #[test]
    fn field_errors_name_the_field() {
        let d = diagnostics(
            r#"{"configurations": [
                {"config_id": "a", "density": 2.0},
                {"config_id": "b", "densty": 0.2},
                {"config_id": "c", "oracle": "sometimes"}]}"#,
        );
        assert_eq!(d.len(), 3, "{d:?}");
        assert!(d[0].starts_with("configurations[0].density"));
        assert!(d[1].contains("densty"));
        assert!(d[2].starts_with("configurations[2].oracle"));
    }

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        let d = diagnostics(r#"{"configs": []}"#);
        assert!(d[0].contains("configs"), "{d:?}");
    }
}
