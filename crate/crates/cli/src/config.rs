//! Flat `section.key = value` run configuration.
//!
//! Every key, its default and its meaning live in [`KEYS`]. Defaults are
//! applied through the same setter as file values, so the help text and the
//! effective defaults cannot drift apart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use convbid_core::bidding::{BacktestConfig, TradeLog};
use convbid_core::clustering::ClusteringConfig;
use convbid_core::market::{Archetype, ArchetypeMix, GeneratorConfig, ParticipantSpec};
use convbid_core::spike::OptimizerConfig;

use crate::error::CliError;

/// `(key, default, description)`
pub const KEYS: &[(&str, &str, &str)] = &[
    ("run.seed", "0", "seed for synthetic data and forecast noise"),
    ("run.out", "out", "output directory, relative to the config file"),
    ("paths.prices", "", "price CSV; empty means <out>/prices.csv"),
    ("paths.bids", "", "bid CSV; empty means <out>/bids.csv"),
    ("paths.registry", "", "node registry CSV; empty means <out>/node_registry.csv"),
    ("paths.ground_truth", "", "planted archetypes CSV, optional; empty means <out>/ground_truth.csv if present"),
    ("generator.n_nodes", "20", "number of pricing nodes"),
    ("generator.n_major", "3", "how many of them are major aggregated nodes"),
    ("generator.n_days", "60", "number of days"),
    ("generator.start_date", "2019-01-01", "first day"),
    ("generator.base_price", "40", "mean day-ahead price"),
    ("generator.daily_amplitude", "12", "hour-of-day profile amplitude"),
    ("generator.noise_scale", "4", "day-ahead noise scale"),
    ("generator.rt_noise_scale", "6", "real-time noise scale"),
    ("generator.spike_frequency", "0.004", "spike probability per node-hour"),
    ("generator.spike_threshold", "8", "minimum spike size in noise scales"),
    ("generator.spike_scale", "40", "Pareto scale of spike excess"),
    ("generator.spike_tail", "2", "Pareto shape of spike excess"),
    ("generator.spike_cap", "1000", "largest spike excursion"),
    ("generator.positive_spike_share", "0.5", "fraction of upward spikes"),
    ("generator.rt_follow_max", "0.4", "largest per-node chance that real time follows a spike"),
    (
        "generator.participants",
        "PF1:price_forecasting:3, SS1:self_scheduling:3, OP1:opportunistic:3",
        "comma list of id:mix:n_nodes; mix is an archetype or weights like price_forecasting=0.5+opportunistic=0.5",
    ),
    ("generator.bid_hours", "8,12,17,20", "hours every participant bids in"),
    ("cluster.min_cluster_size", "50", "smallest cluster"),
    ("cluster.min_samples", "5", "core-distance neighbour count"),
    ("cluster.small_delta", "5", "largest |median price distance| of a price-forecasting cluster"),
    ("cluster.large_delta", "25", "smallest |median price distance| of self-scheduling and opportunistic clusters"),
    ("metrics.top_k", "10", "participants taken per presence metric"),
    ("optimizer.epsilon", "0.01", "allowed loss as a fraction of profit"),
    ("optimizer.m_min", "30", "smallest price distance"),
    ("optimizer.m_max", "200", "largest price distance"),
    ("optimizer.big_m", "3000", "big-M constant for the MILP witness check"),
    ("optimizer.theta", "100", "node-label threshold on the unit-quantity objective"),
    ("label.milp_dump", "false", "write an LP file with the witness for every labeled side"),
    ("backtest.tau_dlmp", "0.8", "day-ahead accuracy needed for strategy 1"),
    ("backtest.tau_rtlmp", "0.8", "real-time accuracy needed for strategy 1"),
    ("backtest.tau_sign", "0.8", "gap-sign accuracy needed for strategy 2"),
    ("backtest.strategy1_margin", "2", "strategy 1 distance from the forecast price"),
    ("backtest.strategy2_offset", "500", "strategy 2 distance from the hourly average"),
    ("backtest.quantity", "50", "MWh per generated bid"),
    ("backtest.history_window", "365", "training days before each traded day"),
    ("backtest.accuracy_window", "30", "days used to score the forecaster"),
    ("backtest.forecast_dlmp_sd", "3", "synthetic forecaster day-ahead noise"),
    ("backtest.forecast_rtlmp_sd", "6", "synthetic forecaster real-time noise"),
    ("backtest.forecast_sign_error", "0.2", "chance the forecast gap has the wrong sign"),
    ("backtest.trade_log", "all", "trades kept in trades.csv: all, cleared or off"),
    (
        "backtest.cases",
        "0.01:100, 0.001:1000, 0.0001:2000",
        "epsilon:theta pairs for the case table; empty for none",
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub prices: Option<PathBuf>,
    pub bids: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub paths: Paths,
    pub generator: GeneratorConfig,
    pub bid_hours: Vec<u8>,
    pub cluster: ClusteringConfig,
    pub top_k: usize,
    pub optimizer: OptimizerConfig,
    pub milp_dump: bool,
    pub backtest: BacktestConfig,
    pub cases: Vec<(f64, f64)>,
    /// Canonical `key = value` text of every setting, in key order.
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            seed: 0,
            out: PathBuf::new(),
            paths: Paths {
                prices: None,
                bids: None,
                registry: None,
                ground_truth: None,
            },
            generator: GeneratorConfig::default(),
            bid_hours: Vec::new(),
            cluster: ClusteringConfig::default(),
            top_k: 0,
            optimizer: OptimizerConfig::default(),
            milp_dump: false,
            backtest: BacktestConfig::default(),
            cases: Vec::new(),
            values: BTreeMap::new(),
        };
        for &(key, default, _) in KEYS {
            cfg.set(key, default, None).expect("built-in default parses");
        }
        cfg.finish_participants();
        cfg
    }
}

fn mismatch(key: &str, what: &str, value: &str) -> CliError {
    CliError::Config(format!("{key}: expected {what}, got `{value}`"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str, what: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| mismatch(key, what, v))
}

fn real(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = num(key, v, "a number")?;
    if !x.is_finite() {
        return Err(mismatch(key, "a finite number", v));
    }
    Ok(x)
}

fn path(v: &str, base: Option<&Path>) -> Option<PathBuf> {
    if v.is_empty() {
        return None;
    }
    let p = PathBuf::from(v);
    Some(match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    })
}

fn parse_mix(key: &str, v: &str) -> Result<ArchetypeMix, CliError> {
    if let Some(a) = Archetype::parse(v) {
        return Ok(ArchetypeMix::pure(a));
    }
    let mut mix = ArchetypeMix {
        price_forecasting: 0.0,
        self_scheduling: 0.0,
        opportunistic: 0.0,
    };
    for part in v.split('+') {
        let (name, w) = part
            .split_once('=')
            .ok_or_else(|| mismatch(key, "archetype or archetype=weight terms", v))?;
        let w = real(key, w.trim())?;
        match Archetype::parse(name.trim()) {
            Some(Archetype::PriceForecasting) => mix.price_forecasting = w,
            Some(Archetype::SelfScheduling) => mix.self_scheduling = w,
            Some(Archetype::Opportunistic) => mix.opportunistic = w,
            None => return Err(mismatch(key, "an archetype name", name)),
        }
    }
    Ok(mix)
}

fn parse_participants(key: &str, v: &str) -> Result<Vec<ParticipantSpec>, CliError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let parts: Vec<&str> = entry.split(':').map(str::trim).collect();
            let [id, mix, n] = parts[..] else {
                return Err(mismatch(key, "id:mix:n_nodes", entry));
            };
            Ok(ParticipantSpec {
                id: id.to_string(),
                mix: parse_mix(key, mix)?,
                n_nodes: num(key, n, "a node count")?,
                hours: Vec::new(),
            })
        })
        .collect()
}

fn parse_list<T, F: Fn(&str) -> Result<T, CliError>>(v: &str, f: F) -> Result<Vec<T>, CliError> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

impl RunConfig {
    /// Applies one setting. `base` resolves relative paths.
    fn set(&mut self, key: &str, v: &str, base: Option<&Path>) -> Result<(), CliError> {
        let g = &mut self.generator;
        let o = &mut self.optimizer;
        let b = &mut self.backtest;
        match key {
            "run.seed" => self.seed = num(key, v, "a non-negative integer")?,
            "run.out" => self.out = path(v, base).unwrap_or_else(|| PathBuf::from("out")),
            "paths.prices" => self.paths.prices = path(v, base),
            "paths.bids" => self.paths.bids = path(v, base),
            "paths.registry" => self.paths.registry = path(v, base),
            "paths.ground_truth" => self.paths.ground_truth = path(v, base),
            "generator.n_nodes" => g.n_nodes = num(key, v, "an integer")?,
            "generator.n_major" => g.n_major = num(key, v, "an integer")?,
            "generator.n_days" => g.n_days = num(key, v, "an integer")?,
            "generator.start_date" => {
                g.start_date = NaiveDate::parse_from_str(v, "%Y-%m-%d").map_err(|_| mismatch(key, "a YYYY-MM-DD date", v))?
            }
            "generator.base_price" => g.base_price = real(key, v)?,
            "generator.daily_amplitude" => g.daily_amplitude = real(key, v)?,
            "generator.noise_scale" => g.noise_scale = real(key, v)?,
            "generator.rt_noise_scale" => g.rt_noise_scale = real(key, v)?,
            "generator.spike_frequency" => g.spike_frequency = real(key, v)?,
            "generator.spike_threshold" => g.spike_threshold = real(key, v)?,
            "generator.spike_scale" => g.spike_scale = real(key, v)?,
            "generator.spike_tail" => g.spike_tail = real(key, v)?,
            "generator.spike_cap" => g.spike_cap = real(key, v)?,
            "generator.positive_spike_share" => g.positive_spike_share = real(key, v)?,
            "generator.rt_follow_max" => g.rt_follow_max = real(key, v)?,
            "generator.participants" => g.participants = parse_participants(key, v)?,
            "generator.bid_hours" => self.bid_hours = parse_list(v, |h| num(key, h, "a list of hours"))?,
            "cluster.min_cluster_size" => self.cluster.min_cluster_size = num(key, v, "an integer")?,
            "cluster.min_samples" => self.cluster.min_samples = num(key, v, "an integer")?,
            "cluster.small_delta" => self.cluster.small_delta = real(key, v)?,
            "cluster.large_delta" => self.cluster.large_delta = real(key, v)?,
            "metrics.top_k" => self.top_k = num(key, v, "an integer")?,
            "optimizer.epsilon" => o.epsilon = real(key, v)?,
            "optimizer.m_min" => o.m_min = real(key, v)?,
            "optimizer.m_max" => o.m_max = real(key, v)?,
            "optimizer.big_m" => o.big_m = real(key, v)?,
            "optimizer.theta" => o.theta = real(key, v)?,
            "label.milp_dump" => self.milp_dump = num(key, v, "true or false")?,
            "backtest.tau_dlmp" => b.thresholds.dlmp = real(key, v)?,
            "backtest.tau_rtlmp" => b.thresholds.rtlmp = real(key, v)?,
            "backtest.tau_sign" => b.thresholds.sign = real(key, v)?,
            "backtest.strategy1_margin" => b.rules.strategy1_margin = real(key, v)?,
            "backtest.strategy2_offset" => b.rules.strategy2_offset = real(key, v)?,
            "backtest.quantity" => b.rules.quantity = real(key, v)?,
            "backtest.history_window" => b.history_window = num(key, v, "an integer")?,
            "backtest.accuracy_window" => b.accuracy_window = num(key, v, "an integer")?,
            "backtest.forecast_dlmp_sd" => b.forecast.dlmp_sd = real(key, v)?,
            "backtest.forecast_rtlmp_sd" => b.forecast.rtlmp_sd = real(key, v)?,
            "backtest.forecast_sign_error" => b.forecast.sign_error = real(key, v)?,
            "backtest.trade_log" => {
                b.trade_log = match v {
                    "all" => TradeLog::All,
                    "cleared" => TradeLog::Cleared,
                    "off" => TradeLog::Off,
                    _ => return Err(mismatch(key, "all, cleared or off", v)),
                }
            }
            "backtest.cases" => {
                self.cases = parse_list(v, |c| {
                    let (e, t) = c.split_once(':').ok_or_else(|| mismatch(key, "epsilon:theta pairs", c))?;
                    Ok((real(key, e.trim())?, real(key, t.trim())?))
                })?
            }
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        let canonical = KEYS.iter().find(|k| k.0 == key).expect("key listed").0;
        self.values.insert(canonical, v.to_string());
        Ok(())
    }

    fn finish_participants(&mut self) {
        for p in &mut self.generator.participants {
            p.hours = self.bid_hours.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: convbid_core::Error| CliError::Config(e.to_string());
        self.generator.validate().map_err(cfg)?;
        self.cluster.validate().map_err(cfg)?;
        self.optimizer.validate().map_err(cfg)?;
        self.backtest.validate().map_err(cfg)?;
        if self.top_k == 0 {
            return Err(CliError::Config("metrics.top_k must be at least 1".into()));
        }
        for &(e, t) in &self.cases {
            let mut o = self.optimizer;
            o.epsilon = e;
            o.theta = t;
            o.validate().map_err(|e| CliError::Config(format!("backtest.cases: {e}")))?;
        }
        Ok(())
    }

    /// Settings that affect results, as canonical text. Paths and the output
    /// directory are left out so identical runs in different places hash alike.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            if !(k.starts_with("paths.") || *k == "run.out") {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    /// Command-line `--seed` and `--out`. The seed is part of the config hash; `--out` is not.
    pub fn apply_overrides(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if let Some(s) = seed {
            self.set("run.seed", &s.to_string(), None).expect("integer seed");
        }
        if let Some(o) = out {
            self.out = o;
        }
    }

    fn resolved(&self, p: &Option<PathBuf>, default: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out.join(default))
    }

    pub fn prices_path(&self) -> PathBuf {
        self.resolved(&self.paths.prices, "prices.csv")
    }

    pub fn bids_path(&self) -> PathBuf {
        self.resolved(&self.paths.bids, "bids.csv")
    }

    pub fn registry_path(&self) -> PathBuf {
        self.resolved(&self.paths.registry, "node_registry.csv")
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.resolved(&self.paths.ground_truth, "ground_truth.csv")
    }
}

/// Parses config text. Relative paths resolve against `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |m: String| CliError::Config(format!("line {}: {m}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected `section.key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(prev) = seen.insert(key.to_string(), i + 1) {
            return Err(at(format!("`{key}` already set on line {prev}")));
        }
        cfg.set(key, value, base).map_err(|e| at(e.message().to_string()))?;
    }
    if !seen.contains_key("run.out") {
        if let Some(b) = base {
            cfg.out = b.join("out");
        }
    }
    cfg.finish_participants();
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path.parent())
}

/// Key reference for `--help`.
pub fn help_text() -> String {
    let mut s = String::from("Configuration keys (`section.key = value`, `#` starts a comment):\n");
    let width = KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    for (k, d, desc) in KEYS {
        let d = if d.is_empty() { "\"\"" } else { d };
        let _ = writeln!(s, "  {k:width$}  {desc} [default: {d}]");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_library_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.optimizer, OptimizerConfig::default());
        assert_eq!(c.cluster, ClusteringConfig::default());
        assert_eq!(c.backtest, BacktestConfig::default());
        assert_eq!(c.generator, GeneratorConfig::default());
        assert_eq!(c.cases, [(0.01, 100.0), (0.001, 1000.0), (0.0001, 2000.0)]);
    }

    #[test]
    fn values_and_errors_name_keys() {
        let c = parse_config("optimizer.big_m = 3000\n# note\noptimizer.m_min = 30\noptimizer.m_max = 200\n", None).unwrap();
        assert_eq!((c.optimizer.big_m, c.optimizer.m_min, c.optimizer.m_max), (3000.0, 30.0, 200.0));
        let e = parse_config("optimizer.m_min = 500\noptimizer.m_max = 200\n", None).unwrap_err();
        assert!(e.message().contains("optimizer.m_min"), "{e:?}");
        let e = parse_config("optimizer.bogus = 1\n", None).unwrap_err();
        assert!(e.message().contains("optimizer.bogus"));
        let e = parse_config("optimizer.big_m = lots\n", None).unwrap_err();
        assert!(e.message().contains("optimizer.big_m"));
        let e = parse_config("cluster.min_samples = 100\n", None).unwrap_err();
        assert!(e.message().contains("cluster.min_samples"));
        assert!(parse_config("run.seed = 1\nrun.seed = 2\n", None).is_err());
    }

    #[test]
    fn participants_and_paths() {
        let c = parse_config(
            "generator.participants = A:opportunistic:2, B:price_forecasting=0.5+opportunistic=0.5:4\n\
             generator.bid_hours = 1, 2\npaths.prices = data/p.csv\n",
            Some(Path::new("/cfg")),
        )
        .unwrap();
        assert_eq!(c.generator.participants.len(), 2);
        assert_eq!(c.generator.participants[1].mix.opportunistic, 0.5);
        assert_eq!(c.generator.participants[0].hours, [1, 2]);
        assert_eq!(c.prices_path(), PathBuf::from("/cfg/data/p.csv"));
        assert_eq!(c.bids_path(), PathBuf::from("/cfg/out/bids.csv"));
    }

    #[test]
    fn canonical_text_ignores_locations() {
        let a = parse_config("run.out = a\nrun.seed = 4\n", None).unwrap();
        let b = parse_config("run.out = b\nrun.seed = 4\n", None).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert!(a.canonical().contains("run.seed = 4"));
        assert!(help_text().contains("optimizer.big_m"));
    }
}
