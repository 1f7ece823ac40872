//! Node labeling, strategy selection, bid generation and the rolling backtester.

mod backtest;
mod forecast;
mod grid;
mod labeling;
mod strategy;

pub use backtest::{
    run_backtest, run_cases, write_cases_csv, write_trades_csv, BacktestConfig, BacktestResult,
    BacktestSummary, DailyLabel, StrategyTotals, Trade, TradeLog, BACKTEST_PARTICIPANT,
};
pub use forecast::{assess_forecast_accuracy, ForecastAccuracy, ForecastNoise, MIN_ACCURACY_HOURS};
pub use grid::PriceGrid;
pub use labeling::{label_nodes, label_window, side_optimum, window_instance, NodeLabel, SideOptimum};
pub use strategy::{
    bid_id, generate_bids, select_strategy, AccuracyThresholds, BidRules, DayInputs, StrategyChoice,
    StrategyKind,
};
