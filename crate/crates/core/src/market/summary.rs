use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{month_key, settle_all, MarketDataset};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonthlyTotals {
    pub month: String,
    pub submitted_bids: usize,
    pub cleared_bids: usize,
    pub cleared_mwh: f64,
    pub net_profit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketSummary {
    pub months: Vec<MonthlyTotals>,
    pub participant_count: usize,
    /// Nodes hosting at least one bid.
    pub active_node_count: usize,
}

/// Monthly cleared energy and net profit across all participants.
///
/// Months are keyed by every month that appears in either prices or bids.
pub fn summarize_dataset(dataset: &MarketDataset) -> Result<MarketSummary> {
    let settlements = settle_all(dataset)?;
    let mut months: BTreeMap<String, MonthlyTotals> = BTreeMap::new();
    let mut touch = |key: String| {
        months.entry(key.clone()).or_insert(MonthlyTotals {
            month: key,
            submitted_bids: 0,
            cleared_bids: 0,
            cleared_mwh: 0.0,
            net_profit: 0.0,
        });
    };
    let mut last = None;
    for p in &dataset.prices {
        let key = month_key(p.date());
        if last.as_ref() != Some(&key) {
            touch(key.clone());
            last = Some(key);
        }
    }
    for b in &dataset.bids {
        touch(month_key(b.date));
    }
    for (b, s) in dataset.bids.iter().zip(&settlements) {
        let m = months.get_mut(&month_key(b.date)).expect("month registered");
        m.submitted_bids += 1;
        if s.is_cleared() {
            m.cleared_bids += 1;
        }
        m.cleared_mwh += s.cleared_quantity;
        m.net_profit += s.net_profit;
    }
    let active: BTreeSet<_> = dataset.bids.iter().map(|b| &b.node_id).collect();
    Ok(MarketSummary {
        months: months.into_values().collect(),
        participant_count: dataset.participants().len(),
        active_node_count: active.len(),
    })
}
