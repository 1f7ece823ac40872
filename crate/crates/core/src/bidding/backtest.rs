use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::forecast::{assess_forecast_accuracy, ForecastAccuracy, ForecastNoise};
use super::grid::PriceGrid;
use super::labeling::{label_window, NodeLabel};
use super::strategy::{generate_bids, select_strategy, AccuracyThresholds, BidRules, DayInputs, StrategyKind};
use crate::error::{Error, Result};
use crate::market::{settle_step, DateRange, MarketDataset, NodeId, Side};
use crate::metrics::{format_lpr, lpr_from_totals};
use crate::spike::OptimizerConfig;

/// Participant id stamped on generated bids.
pub const BACKTEST_PARTICIPANT: &str = "BT";

/// Which generated bids are kept in [`BacktestResult::trades`]. Totals always cover every bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradeLog {
    All,
    Cleared,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub thresholds: AccuracyThresholds,
    pub rules: BidRules,
    pub optimizer: OptimizerConfig,
    pub forecast: ForecastNoise,
    /// Training days before each evaluated day.
    pub history_window: usize,
    /// Trailing days used to score the forecaster.
    pub accuracy_window: usize,
    pub trade_log: TradeLog,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            thresholds: AccuracyThresholds::default(),
            rules: BidRules::default(),
            optimizer: OptimizerConfig::default(),
            forecast: ForecastNoise::default(),
            history_window: 365,
            accuracy_window: 30,
            trade_log: TradeLog::All,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.rules.validate()?;
        self.optimizer.validate()?;
        self.forecast.validate()?;
        if self.history_window == 0 {
            return Err(Error::InvalidConfig("backtest.history_window must be at least 1".into()));
        }
        if self.accuracy_window < 7 || self.accuracy_window > self.history_window {
            return Err(Error::InvalidConfig(format!(
                "backtest.accuracy_window {} must be between 7 and backtest.history_window {}",
                self.accuracy_window, self.history_window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trade {
    pub date: NaiveDate,
    pub hour: u8,
    pub node_id: NodeId,
    pub strategy: StrategyKind,
    pub side: Side,
    pub price: f64,
    pub quantity: f64,
    pub cleared_quantity: f64,
    pub net_profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyTotals {
    pub strategy: StrategyKind,
    /// Node-days assigned to the strategy.
    pub node_days: usize,
    pub n_bids: usize,
    pub n_cleared: usize,
    pub total_profit: f64,
    /// Magnitude of losses (≥ 0).
    pub total_loss: f64,
    pub net_profit: f64,
}

impl StrategyTotals {
    fn new(strategy: StrategyKind) -> Self {
        StrategyTotals {
            strategy,
            node_days: 0,
            n_bids: 0,
            n_cleared: 0,
            total_profit: 0.0,
            total_loss: 0.0,
            net_profit: 0.0,
        }
    }
}

/// Aggregates of one backtest run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSummary {
    pub epsilon: f64,
    pub theta: f64,
    pub evaluation: DateRange,
    pub evaluation_days: usize,
    /// Nodes labeled on at least one evaluated day.
    pub labeled_nodes: usize,
    pub labeled_node_days: usize,
    /// Nodes and days with at least one cleared bid.
    pub cleared_nodes: usize,
    pub cleared_days: usize,
    pub n_bids: usize,
    pub n_cleared: usize,
    pub total_profit: f64,
    pub total_loss: f64,
    pub net_profit: f64,
    pub csr: f64,
    pub lpr: f64,
    pub by_strategy: Vec<StrategyTotals>,
}

/// A labeled node on one evaluated day, with the window it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyLabel {
    pub date: NaiveDate,
    pub window: DateRange,
    pub label: NodeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestResult {
    pub summary: BacktestSummary,
    pub trades: Vec<Trade>,
    /// Only node-days with at least one label flag set.
    pub labels: Vec<DailyLabel>,
}

/// Accuracy from the trailing window, or all-zero when it has too few paired hours.
fn trailing_accuracy(
    grid: &PriceGrid,
    fl: &[f64],
    fp: &[f64],
    node: usize,
    from: usize,
    to: usize,
) -> Result<ForecastAccuracy> {
    let r = from * 24..to * 24;
    match assess_forecast_accuracy(&fl[r.clone()], &fp[r.clone()], &grid.dlmp[node][r.clone()], &grid.rtlmp[node][r]) {
        Err(Error::InsufficientData(_)) => Ok(ForecastAccuracy {
            a_dlmp: 0.0,
            a_rtlmp: 0.0,
            a_sign: 0.0,
        }),
        other => other,
    }
}

/// Rolling-horizon backtest: every day after the first `history_window` days
/// is traded with labels and accuracies computed from the days before it.
pub fn run_backtest(dataset: &MarketDataset, config: &BacktestConfig, seed: u64) -> Result<BacktestResult> {
    config.validate()?;
    let grid = PriceGrid::from_prices(&dataset.prices)?;
    let w = config.history_window;
    if grid.n_days <= w {
        return Err(Error::InsufficientData(format!(
            "{} days of prices, need more than the {w}-day history window",
            grid.n_days
        )));
    }
    let (fl, fp) = config.forecast.forecast_grid(&grid, seed);

    let mut totals: BTreeMap<StrategyKind, StrategyTotals> =
        StrategyKind::ALL.iter().map(|&s| (s, StrategyTotals::new(s))).collect();
    let mut trades = Vec::new();
    let mut labels = Vec::new();
    let mut labeled_nodes = BTreeSet::new();
    let mut cleared_nodes = BTreeSet::new();
    let mut cleared_days = BTreeSet::new();

    for day in w..grid.n_days {
        let date = grid.date(day);
        let window = DateRange::new(grid.date(day - w), grid.date(day - 1))?;
        for node in 0..grid.nodes.len() {
            if !grid.covers(node, day - w) {
                continue;
            }
            let label = label_window(&grid, node, day - w, day, &config.optimizer)?;
            let acc = trailing_accuracy(&grid, &fl[node], &fp[node], node, day - config.accuracy_window, day)?;
            let choice = select_strategy(Some(&label), &acc, &config.thresholds);
            let today = day * 24..day * 24 + 24;
            let inputs = DayInputs {
                node_id: &grid.nodes[node],
                date,
                dlmp_hat: &fl[node][today.clone()],
                rtlmp_hat: &fp[node][today],
                avg_dlmp: &label.avg_dlmp,
            };
            let bids = generate_bids(choice, &inputs, Some(&label), &config.rules, BACKTEST_PARTICIPANT)?;
            let t = totals.get_mut(&choice).expect("all strategies present");
            t.node_days += 1;
            for bid in bids {
                let k = day * 24 + bid.hour as usize;
                let (lam, pi) = (grid.dlmp[node][k], grid.rtlmp[node][k]);
                if lam.is_nan() || pi.is_nan() {
                    continue;
                }
                let step = bid.steps()[0];
                let (cq, eta) = settle_step(bid.side, step.price, step.quantity, lam, pi);
                t.n_bids += 1;
                if cq > 0.0 {
                    t.n_cleared += 1;
                    cleared_nodes.insert(node);
                    cleared_days.insert(day);
                }
                if eta >= 0.0 {
                    t.total_profit += eta;
                } else {
                    t.total_loss -= eta;
                }
                t.net_profit += eta;
                let keep = match config.trade_log {
                    TradeLog::All => true,
                    TradeLog::Cleared => cq > 0.0,
                    TradeLog::Off => false,
                };
                if keep {
                    trades.push(Trade {
                        date,
                        hour: bid.hour,
                        node_id: bid.node_id.clone(),
                        strategy: choice,
                        side: bid.side,
                        price: step.price,
                        quantity: step.quantity,
                        cleared_quantity: cq,
                        net_profit: if eta == 0.0 { 0.0 } else { eta },
                    });
                }
            }
            if label.is_labeled() {
                labeled_nodes.insert(node);
                labels.push(DailyLabel { date, window, label });
            }
        }
    }

    let by_strategy: Vec<StrategyTotals> = totals.into_values().collect();
    let sum = |f: fn(&StrategyTotals) -> f64| by_strategy.iter().map(f).sum::<f64>();
    let n_bids = by_strategy.iter().map(|t| t.n_bids).sum::<usize>();
    let n_cleared = by_strategy.iter().map(|t| t.n_cleared).sum::<usize>();
    let (total_profit, total_loss) = (sum(|t| t.total_profit), sum(|t| t.total_loss));
    let summary = BacktestSummary {
        epsilon: config.optimizer.epsilon,
        theta: config.optimizer.theta,
        evaluation: DateRange::new(grid.date(w), grid.date(grid.n_days - 1))?,
        evaluation_days: grid.n_days - w,
        labeled_nodes: labeled_nodes.len(),
        labeled_node_days: labels.len(),
        cleared_nodes: cleared_nodes.len(),
        cleared_days: cleared_days.len(),
        n_bids,
        n_cleared,
        total_profit,
        total_loss,
        net_profit: sum(|t| t.net_profit),
        csr: if n_bids > 0 { 100.0 * n_cleared as f64 / n_bids as f64 } else { 0.0 },
        lpr: lpr_from_totals(total_profit, total_loss),
        by_strategy,
    };
    Ok(BacktestResult { summary, trades, labels })
}

/// One backtest per `(epsilon, theta)` pair, all else equal.
pub fn run_cases(
    dataset: &MarketDataset,
    config: &BacktestConfig,
    seed: u64,
    cases: &[(f64, f64)],
) -> Result<Vec<BacktestResult>> {
    cases
        .iter()
        .map(|&(epsilon, theta)| {
            let mut c = *config;
            c.optimizer.epsilon = epsilon;
            c.optimizer.theta = theta;
            run_backtest(dataset, &c, seed)
        })
        .collect()
}

/// `date,hour,node_id,strategy,side,price,quantity,cleared_quantity,net_profit`
pub fn write_trades_csv<W: Write>(w: W, trades: &[Trade]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "date",
        "hour",
        "node_id",
        "strategy",
        "side",
        "price",
        "quantity",
        "cleared_quantity",
        "net_profit",
    ])?;
    for t in trades {
        wtr.write_record([
            t.date.to_string(),
            t.hour.to_string(),
            t.node_id.to_string(),
            t.strategy.as_str().to_string(),
            t.side.tag().to_string(),
            format!("{:.4}", t.price),
            format!("{:.4}", t.quantity),
            format!("{:.4}", t.cleared_quantity),
            format!("{:.4}", t.net_profit),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `epsilon,theta,node,day,net_profit,lpr,csr,n_bids,n_cleared`, one row per case.
pub fn write_cases_csv<W: Write>(w: W, cases: &[BacktestSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["epsilon", "theta", "node", "day", "net_profit", "lpr", "csr", "n_bids", "n_cleared"])?;
    for s in cases {
        wtr.write_record([
            s.epsilon.to_string(),
            s.theta.to_string(),
            s.labeled_nodes.to_string(),
            s.cleared_days.to_string(),
            format!("{:.4}", s.net_profit),
            format_lpr(s.lpr),
            format!("{:.4}", s.csr),
            s.n_bids.to_string(),
            s.n_cleared.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
