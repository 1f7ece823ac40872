use std::collections::{BTreeMap, HashMap};

use super::{DateRange, NodeId, PriceRecord};

/// Historical mean day-ahead price for one node and hour of day.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyPriceStats {
    pub node_id: NodeId,
    pub hour: u8,
    pub avg_dlmp: f64,
    pub sample_count: usize,
    pub window: DateRange,
}

/// Mean day-ahead price per (node, hour) over the records dated within `window`.
///
/// Node-hours without samples are absent. Output is sorted by (node, hour).
pub fn compute_hourly_stats(prices: &[PriceRecord], window: DateRange) -> Vec<HourlyPriceStats> {
    let mut acc: BTreeMap<(&NodeId, u8), (f64, usize)> = BTreeMap::new();
    for p in prices.iter().filter(|p| window.contains(p.date())) {
        let e = acc.entry((&p.node_id, p.hour())).or_insert((0.0, 0));
        e.0 += p.dlmp;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((node, hour), (sum, n))| HourlyPriceStats {
            node_id: node.clone(),
            hour,
            avg_dlmp: sum / n as f64,
            sample_count: n,
            window,
        })
        .collect()
}

/// Lookup of hourly stats by (node, hour).
#[derive(Debug, Clone, Default)]
pub struct StatsIndex {
    map: HashMap<(NodeId, u8), HourlyPriceStats>,
}

impl StatsIndex {
    pub fn get(&self, node: &NodeId, hour: u8) -> Option<&HourlyPriceStats> {
        self.map.get(&(node.clone(), hour))
    }
}

impl FromIterator<HourlyPriceStats> for StatsIndex {
    fn from_iter<I: IntoIterator<Item = HourlyPriceStats>>(iter: I) -> Self {
        StatsIndex {
            map: iter
                .into_iter()
                .map(|s| ((s.node_id.clone(), s.hour), s))
                .collect(),
        }
    }
}
