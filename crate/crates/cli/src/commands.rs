//! One function per pipeline stage. Each reads its inputs, writes its declared
//! outputs into the output directory and finishes with `manifest_<stage>.json`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use convbid_core::bidding::{
    label_window, run_backtest, run_cases, write_cases_csv, write_trades_csv, BacktestConfig, PriceGrid,
    TradeLog,
};
use convbid_core::clustering::{cluster_bids, write_clusters_csv, write_shares_csv, ClusterSignature, StrategyLabel};
use convbid_core::features::{extract_features, normalize_features, read_features, write_features_csv, HISTORY_DAYS};
use convbid_core::market::{
    compute_hourly_stats, generate_synthetic_market, load_bid_csv, load_ground_truth_csv, load_price_csv,
    load_registry_csv, settle_all, summarize_dataset, write_bid_csv, write_ground_truth_csv, write_price_csv,
    write_registry_csv, DateRange, MarketDataset, Side, StatsIndex,
};
use convbid_core::metrics::{
    bid_characteristics, compute_shares, performance_by_participant, select_most_present, write_characteristics_csv,
    write_participant_shares_csv, write_performance_csv, write_selection_csv, write_yearly_csr_csv, yearly_csr,
};
use convbid_core::spike::{
    encode_milp_witness, needed_big_m, solve_breakpoints, verify_milp_constraints, write_milp_lp,
    write_solutions_csv, MilpConstraint, SpikeInstance,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::{digest_file, sha256_hex, FileDigest, RunManifest, TOOL_VERSION};
use crate::report;

type Result<T> = std::result::Result<T, CliError>;

/// Panels drawn in the hourly-profit figure.
const MAX_PROFIT_PANELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Synth,
    Ingest,
    Features,
    Cluster,
    Metrics,
    Label,
    Backtest,
    Report,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Synth => "synth",
            StageKind::Ingest => "ingest",
            StageKind::Features => "features",
            StageKind::Cluster => "cluster",
            StageKind::Metrics => "metrics",
            StageKind::Label => "label",
            StageKind::Backtest => "backtest",
            StageKind::Report => "report",
        }
    }
}

/// Verbosity: 0 quiet, 1 normal, 2 verbose. Errors are printed by the caller.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    pub level: u8,
}

impl Log {
    pub fn info(&self, msg: &str) {
        if self.level >= 1 {
            eprintln!("{msg}");
        }
    }

    pub fn debug(&self, msg: &str) {
        if self.level >= 2 {
            eprintln!("{msg}");
        }
    }

    pub fn warn(&self, msg: &str) {
        if self.level >= 1 {
            eprintln!("warning: {msg}");
        }
    }
}

pub fn run(kind: StageKind, cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    match kind {
        StageKind::Synth => synth(cfg, log),
        StageKind::Ingest => ingest(cfg, log),
        StageKind::Features => features(cfg, log),
        StageKind::Cluster => cluster(cfg, log),
        StageKind::Metrics => metrics(cfg, log),
        StageKind::Label => label(cfg, log),
        StageKind::Backtest => backtest(cfg, log),
        StageKind::Report => report_stage(cfg, log),
    }
}

struct Stage<'a> {
    name: &'static str,
    cfg: &'a RunConfig,
    log: &'a Log,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
}

impl<'a> Stage<'a> {
    fn new(name: &'static str, cfg: &'a RunConfig, log: &'a Log) -> Result<Self> {
        fs::create_dir_all(&cfg.out)
            .map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", cfg.out.display())))?;
        log.debug(&format!("{name}: writing to {}", cfg.out.display()));
        Ok(Stage {
            name,
            cfg,
            log,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    fn out(&self, file: &str) -> PathBuf {
        self.cfg.out.join(file)
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        if !path.is_file() {
            return Err(CliError::Data(format!("{}: missing input {}", self.name, path.display())));
        }
        self.inputs.push(digest_file(path)?);
        Ok(())
    }

    fn write(&mut self, file: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out(file);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        self.log.debug(&format!("{}: wrote {}", self.name, path.display()));
        self.outputs.push(path);
        Ok(())
    }

    fn write_with<F>(&mut self, file: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> convbid_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(file, &buf)
    }

    fn write_json<T: serde::Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(file, &bytes)
    }

    fn figure(&mut self, fig: Option<(&str, String)>) -> Result<()> {
        if let Some((file, svg)) = fig {
            self.write(file, svg.as_bytes())?;
        }
        Ok(())
    }

    fn time<T>(&mut self, step: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let r = f();
        self.timings.insert(step.to_string(), t0.elapsed().as_secs_f64() * 1e3);
        r
    }

    fn finish(self) -> Result<RunManifest> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                let mut d = digest_file(p)?;
                // keep the sub-directory so milp/ files stay distinct
                if let Ok(rel) = p.strip_prefix(&self.cfg.out) {
                    d.file = rel.to_string_lossy().replace('\\', "/");
                }
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            stage: self.name.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed: self.cfg.seed,
            config_sha256: sha256_hex(self.cfg.canonical().as_bytes()),
            inputs: self.inputs,
            outputs,
            timings_ms: self.timings,
        };
        let path = self.cfg.out.join(format!("manifest_{}.json", self.name));
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        self.log.info(&format!("{}: {} outputs in {}", self.name, manifest.outputs.len(), self.cfg.out.display()));
        Ok(manifest)
    }
}

/// Loads prices, bids, registry and (when present) ground truth, then drops
/// bids without a matching price record. Returns the dataset and the drop count.
fn load_dataset(st: &mut Stage) -> Result<(MarketDataset, usize)> {
    let cfg = st.cfg;
    let (pp, bp, rp, gp) = (cfg.prices_path(), cfg.bids_path(), cfg.registry_path(), cfg.ground_truth_path());
    st.input(&pp)?;
    st.input(&bp)?;
    st.input(&rp)?;
    let prices = load_price_csv(&pp)?;
    let bids = load_bid_csv(&bp)?;
    let registry = load_registry_csv(&rp)?;
    let truth = if gp.is_file() {
        st.input(&gp)?;
        Some(load_ground_truth_csv(&gp)?)
    } else if cfg.paths.ground_truth.is_some() {
        return Err(CliError::Data(format!("missing ground truth file {}", gp.display())));
    } else {
        None
    };
    let mut ds = MarketDataset::new(prices, bids, registry, truth)?;
    let bad: HashSet<_> = ds.unsettleable_bids().iter().map(|b| b.bid_id.clone()).collect();
    if !bad.is_empty() {
        st.log
            .warn(&format!("dropping {} bids with no matching price record", bad.len()));
        ds.bids.retain(|b| !bad.contains(&b.bid_id));
    }
    st.log.debug(&format!(
        "loaded {} price records, {} bids, {} nodes",
        ds.prices.len(),
        ds.bids.len(),
        ds.registry.len()
    ));
    Ok((ds, bad.len()))
}

fn synth(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("synth", cfg, log)?;
    let ds = st.time("generate", || generate_synthetic_market(&cfg.generator, cfg.seed))?;
    st.write_with("prices.csv", |w| write_price_csv(w, &ds.prices))?;
    st.write_with("bids.csv", |w| write_bid_csv(w, &ds.bids))?;
    st.write_with("node_registry.csv", |w| write_registry_csv(w, &ds.registry))?;
    if let Some(truth) = &ds.ground_truth {
        st.write_with("ground_truth.csv", |w| write_ground_truth_csv(w, &ds.bids, truth))?;
    }
    log.info(&format!("synth: {} price records, {} bids", ds.prices.len(), ds.bids.len()));
    st.finish()
}

fn ingest(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("ingest", cfg, log)?;
    let (ds, dropped) = load_dataset(&mut st)?;
    let settlements = st.time("settle", || settle_all(&ds))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bid_id", "participant_id", "node_id", "date", "hour", "side", "cleared_quantity", "net_profit"])?;
    for (b, s) in ds.bids.iter().zip(&settlements) {
        w.write_record([
            b.bid_id.to_string(),
            b.participant_id.to_string(),
            b.node_id.to_string(),
            b.date.to_string(),
            b.hour.to_string(),
            b.side.tag().to_string(),
            format!("{:.4}", s.cleared_quantity),
            format!("{:.4}", s.net_profit),
        ])?;
    }
    st.write("settlements.csv", &into_bytes(w)?)?;

    let summary = st.time("summarize", || summarize_dataset(&ds))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["month", "submitted_bids", "cleared_bids", "cleared_mwh", "net_profit"])?;
    for m in &summary.months {
        w.write_record([
            m.month.clone(),
            m.submitted_bids.to_string(),
            m.cleared_bids.to_string(),
            format!("{:.4}", m.cleared_mwh),
            format!("{:.4}", m.net_profit),
        ])?;
    }
    st.write("monthly.csv", &into_bytes(w)?)?;
    st.write_json(
        "market_summary.json",
        &json!({
            "price_records": ds.prices.len(),
            "bids": ds.bids.len(),
            "cleared_bids": settlements.iter().filter(|s| s.is_cleared()).count(),
            "dropped_unsettleable_bids": dropped,
            "participant_count": summary.participant_count,
            "active_node_count": summary.active_node_count,
            "registered_nodes": ds.registry.len(),
            "months": summary.months.len(),
        }),
    )?;
    for fig in report::monthly_figures(&cfg.out)? {
        st.figure(Some(fig))?;
    }
    st.finish()
}

fn features(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("features", cfg, log)?;
    let (ds, _) = load_dataset(&mut st)?;
    let span = ds
        .price_span()
        .ok_or_else(|| CliError::Data("no price records".into()))?;
    let stats: StatsIndex = compute_hourly_stats(&ds.prices, span).into_iter().collect();
    let f = st.time("extract", || extract_features(&ds, &stats))?;
    st.write_with("features.csv", |w| write_features_csv(w, &f))?;
    let scaling = if f.len() >= 2 { Some(normalize_features(&f)?.scaling) } else { None };
    st.write_json(
        "feature_scaling.json",
        &json!({
            "n_bids": f.len(),
            "hourly_average_window": span,
            "type_consistency_history_days": HISTORY_DAYS,
            "scaling": scaling,
        }),
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["participant_id", "hour", "bid_id", "delta"])?;
    for (b, v) in ds.bids.iter().zip(&f) {
        w.write_record([
            b.participant_id.to_string(),
            b.hour.to_string(),
            b.bid_id.to_string(),
            format!("{:.4}", v.delta),
        ])?;
    }
    st.write("delta_by_hour.csv", &into_bytes(w)?)?;
    st.figure(report::delta_figure(&cfg.out)?)?;
    st.finish()
}

const SIGNATURE_HEADER: [&str; 7] = ["cluster_id", "size", "delta", "type_consistency", "n_steps", "is_major_node", "strategy"];

fn write_signatures(sigs: &[(ClusterSignature, StrategyLabel)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SIGNATURE_HEADER)?;
    for (s, l) in sigs {
        w.write_record([
            s.cluster_id.to_string(),
            s.size.to_string(),
            format!("{:.4}", s.delta),
            format!("{:.4}", s.type_consistency),
            format!("{:.4}", s.n_steps),
            format!("{:.4}", s.is_major_node),
            l.as_str().to_string(),
        ])?;
    }
    into_bytes(w)
}

fn cluster(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("cluster", cfg, log)?;
    let fpath = st.out("features.csv");
    st.input(&fpath)?;
    let features = read_features(fs::File::open(&fpath)?, "features.csv")?;
    let bpath = cfg.bids_path();
    st.input(&bpath)?;
    let owner: HashMap<_, _> = load_bid_csv(&bpath)?
        .into_iter()
        .map(|b| (b.bid_id, b.participant_id))
        .collect();
    let owners = features
        .iter()
        .map(|f| {
            owner
                .get(&f.bid_id)
                .cloned()
                .ok_or_else(|| CliError::Data(format!("features.csv: bid {} is not in the bid file", f.bid_id)))
        })
        .collect::<Result<Vec<_>>>()?;

    let needed = cfg.cluster.min_cluster_size.max(2);
    if features.len() < needed {
        log.warn(&format!(
            "{} bids is below cluster.min_cluster_size = {}; writing empty cluster tables",
            features.len(),
            cfg.cluster.min_cluster_size
        ));
        st.write("clusters.csv", b"bid_id,cluster_id,strategy_label\n")?;
        st.write_with("shares.csv", |w| write_shares_csv(w, &[]))?;
        st.write("cluster_signatures.csv", &write_signatures(&[])?)?;
        st.write_json(
            "cluster_summary.json",
            &json!({ "n_bids": features.len(), "status": "insufficient_bids", "n_clusters": 0 }),
        )?;
        return st.finish();
    }

    let r = st.time("cluster", || cluster_bids(&features, &owners, &cfg.cluster))?;
    st.write_with("clusters.csv", |w| write_clusters_csv(w, &features, &r))?;
    st.write_with("shares.csv", |w| write_shares_csv(w, &r.shares))?;
    let sigs: Vec<_> = r
        .model
        .cluster_signatures
        .iter()
        .cloned()
        .zip(r.cluster_strategies.iter().copied())
        .collect();
    st.write("cluster_signatures.csv", &write_signatures(&sigs)?)?;

    let mut by_strategy = BTreeMap::new();
    for l in StrategyLabel::ALL {
        by_strategy.insert(l.as_str(), r.bid_strategies.iter().filter(|s| **s == l).count());
    }
    let gpath = cfg.ground_truth_path();
    let agreement = if gpath.is_file() {
        st.input(&gpath)?;
        let truth = load_ground_truth_csv(&gpath)?;
        let (mut ok, mut n) = (0usize, 0usize);
        for ((f, l), s) in features.iter().zip(&r.model.labels).zip(&r.bid_strategies) {
            if let (true, Some(a)) = (*l >= 0, truth.bids.get(&f.bid_id)) {
                n += 1;
                ok += usize::from(a.as_str() == s.as_str());
            }
        }
        (n > 0).then(|| ok as f64 / n as f64)
    } else {
        None
    };
    st.write_json(
        "cluster_summary.json",
        &json!({
            "n_bids": features.len(),
            "status": "ok",
            "n_clusters": r.model.n_clusters(),
            "noise": r.model.noise_count(),
            "bids_by_strategy": by_strategy,
            "planted_agreement": agreement,
        }),
    )?;
    st.figure(report::shares_figure(&cfg.out)?)?;
    st.finish()
}

fn metrics(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("metrics", cfg, log)?;
    let (ds, _) = load_dataset(&mut st)?;
    if ds.bids.is_empty() {
        return Err(CliError::Data("no settleable bids to measure".into()));
    }
    let s = st.time("settle", || settle_all(&ds))?;
    let shares = compute_shares(&ds, &s)?;
    let selected = select_most_present(&shares, cfg.top_k)?;
    st.write_with("participant_shares.csv", |w| write_participant_shares_csv(w, &shares))?;
    st.write_with("most_present.csv", |w| write_selection_csv(w, &selected))?;
    let chars = bid_characteristics(&ds, &s)?;
    st.write_with("characteristics.csv", |w| write_characteristics_csv(w, &chars))?;
    let yearly = yearly_csr(&ds, &s)?;
    st.write_with("yearly_csr.csv", |w| write_yearly_csr_csv(w, &yearly))?;
    let perf = performance_by_participant(&ds, &s)?;
    st.write_with("performance.csv", |w| write_performance_csv(w, &perf))?;
    st.finish()
}

/// Every priced hour of the window, not only those that can clear.
fn full_instance(grid: &PriceGrid, node: usize, from: usize, to: usize, avg: &[f64; 24], side: Side) -> Option<SpikeInstance> {
    let (mut d, mut r, mut a) = (Vec::new(), Vec::new(), Vec::new());
    for k in from * 24..to * 24 {
        let (lam, pi, star) = (grid.dlmp[node][k], grid.rtlmp[node][k], avg[k % 24]);
        if !(lam.is_nan() || pi.is_nan() || star.is_nan()) {
            d.push(lam);
            r.push(pi);
            a.push(star);
        }
    }
    SpikeInstance::new(side, d, r, a).ok()
}

fn label(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("label", cfg, log)?;
    let pp = cfg.prices_path();
    st.input(&pp)?;
    let prices = load_price_csv(&pp)?;
    let grid = PriceGrid::from_prices(&prices)?;
    let opt = cfg.optimizer;
    let to = grid.n_days;
    let from = to - cfg.backtest.history_window.min(to);
    let window = DateRange::new(grid.date(from), grid.date(to - 1))?;
    log.debug(&format!("label: window {} to {}", window.start, window.end));

    let mut labels = Vec::new();
    let mut solutions = Vec::new();
    let mut dumps = Vec::new();
    let t0 = Instant::now();
    for i in (0..grid.nodes.len()).filter(|&i| grid.covers(i, from)) {
        let lab = label_window(&grid, i, from, to, &opt)?;
        let avg = lab.avg_dlmp;
        for side in [Side::Demand, Side::Supply] {
            let Some(inst) = full_instance(&grid, i, from, to, &avg, side) else {
                continue;
            };
            let sol = solve_breakpoints(&inst, &opt)?;
            let o = lab.optimum(side);
            if sol.feasible != o.feasible || sol.objective != o.objective {
                return Err(CliError::Invariant(format!(
                    "{} {}: full-window optimum {} differs from the label optimum {}",
                    grid.nodes[i],
                    side.tag(),
                    sol.objective,
                    o.objective
                )));
            }
            let witness = encode_milp_witness(&inst, &sol)?;
            let check = verify_milp_constraints(&inst, &witness, &opt)?;
            if check.violated(MilpConstraint::BigMTooSmall) {
                return Err(CliError::Config(format!(
                    "optimizer.big_m = {} is below the {:.4} needed by node {}",
                    opt.big_m,
                    needed_big_m(&inst, &opt),
                    grid.nodes[i]
                )));
            }
            // an infeasible optimum may break only the loss bound
            let broken: Vec<_> = check
                .constraints()
                .into_iter()
                .filter(|c| sol.feasible || *c != MilpConstraint::LossBound)
                .map(MilpConstraint::name)
                .collect();
            if !broken.is_empty() {
                return Err(CliError::Invariant(format!(
                    "{} {}: optimum violates {}",
                    grid.nodes[i],
                    side.tag(),
                    broken.join(", ")
                )));
            }
            if cfg.milp_dump && lab.flag(side) {
                dumps.push((
                    format!("milp/{}_{}.lp", grid.nodes[i], side.tag()),
                    write_milp_lp(&inst, &opt, Some(&witness)),
                ));
            }
            solutions.push((grid.nodes[i].clone(), sol));
        }
        labels.push(lab);
    }
    st.timings.insert("solve".into(), t0.elapsed().as_secs_f64() * 1e3);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "node_id",
        "demand_cb",
        "supply_cb",
        "demand_objective",
        "demand_m_star",
        "supply_objective",
        "supply_m_star",
    ])?;
    for l in &labels {
        w.write_record([
            l.node_id.to_string(),
            l.demand_cb.to_string(),
            l.supply_cb.to_string(),
            format!("{:.4}", l.demand.objective),
            format!("{:.4}", l.demand.m_star),
            format!("{:.4}", l.supply.objective),
            format!("{:.4}", l.supply.m_star),
        ])?;
    }
    st.write("labels.csv", &into_bytes(w)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node_id", "side", "hour", "bid_price"])?;
    for l in &labels {
        for side in [Side::Demand, Side::Supply] {
            if let Some(s) = l.schedule(side) {
                for (h, p) in s.iter().enumerate().filter(|(_, p)| !p.is_nan()) {
                    w.write_record([l.node_id.to_string(), side.tag().to_string(), h.to_string(), format!("{p:.4}")])?;
                }
            }
        }
    }
    st.write("schedules.csv", &into_bytes(w)?)?;
    st.write_with("solutions.csv", |w| write_solutions_csv(w, &solutions))?;
    for (file, text) in dumps {
        st.write(&file, text.as_bytes())?;
    }
    log.info(&format!(
        "label: {} of {} nodes labeled over {} to {}",
        labels.iter().filter(|l| l.is_labeled()).count(),
        labels.len(),
        window.start,
        window.end
    ));
    st.finish()
}

fn backtest(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("backtest", cfg, log)?;
    let (ds, dropped) = load_dataset(&mut st)?;
    let bt = BacktestConfig {
        optimizer: cfg.optimizer,
        ..cfg.backtest
    };
    let res = st.time("backtest", || run_backtest(&ds, &bt, cfg.seed))?;
    let quiet = BacktestConfig {
        trade_log: TradeLog::Off,
        ..bt
    };
    let cases: Vec<_> = st
        .time("cases", || run_cases(&ds, &quiet, cfg.seed, &cfg.cases))?
        .into_iter()
        .map(|r| r.summary)
        .collect();
    st.write_with("trades.csv", |w| write_trades_csv(w, &res.trades))?;
    st.write_with("cases.csv", |w| write_cases_csv(w, &cases))?;
    st.write_json(
        "backtest_report.json",
        &json!({
            "seed": cfg.seed,
            "dropped_unsettleable_bids": dropped,
            "summary": res.summary,
            "cases": cases,
        }),
    )?;

    // hourly profit of cleared trades at the busiest nodes
    let mut count: BTreeMap<_, usize> = BTreeMap::new();
    for t in res.trades.iter().filter(|t| t.cleared_quantity > 0.0) {
        *count.entry(&t.node_id).or_default() += 1;
    }
    let mut busiest: Vec<_> = count.into_iter().collect();
    busiest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let shown: HashSet<_> = busiest.iter().take(MAX_PROFIT_PANELS).map(|(n, _)| *n).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["node_id", "date", "hour", "strategy", "net_profit"])?;
    for t in res.trades.iter().filter(|t| t.cleared_quantity > 0.0 && shown.contains(&t.node_id)) {
        w.write_record([
            t.node_id.to_string(),
            t.date.to_string(),
            t.hour.to_string(),
            t.strategy.as_str().to_string(),
            format!("{:.4}", t.net_profit),
        ])?;
    }
    st.write("hourly_profit.csv", &into_bytes(w)?)?;
    st.figure(report::hourly_profit_figure(&cfg.out)?)?;
    let s = &res.summary;
    log.info(&format!(
        "backtest: {} bids, {} cleared, net profit {:.2}, LPR {}",
        s.n_bids,
        s.n_cleared,
        s.net_profit,
        convbid_core::metrics::format_lpr(s.lpr)
    ));
    st.finish()
}

fn report_stage(cfg: &RunConfig, log: &Log) -> Result<RunManifest> {
    let mut st = Stage::new("report", cfg, log)?;
    for file in report::SOURCES {
        let p = st.out(file);
        if p.is_file() {
            st.input(&p)?;
        }
    }
    if st.inputs.is_empty() {
        return Err(CliError::Data(format!(
            "no stage outputs found in {}; run the other stages first",
            cfg.out.display()
        )));
    }
    for fig in report::monthly_figures(&cfg.out)? {
        st.figure(Some(fig))?;
    }
    st.figure(report::delta_figure(&cfg.out)?)?;
    st.figure(report::shares_figure(&cfg.out)?)?;
    st.figure(report::hourly_profit_figure(&cfg.out)?)?;
    let md = report::render_markdown(&cfg.out, cfg.seed)?;
    st.write("report.md", md.as_bytes())?;
    st.finish()
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}
