use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use crate::error::{Error, Result};
use crate::market::{NodeId, PriceRecord};

/// Dense per-node hourly prices over a contiguous run of days; missing hours are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceGrid {
    pub start: NaiveDate,
    pub n_days: usize,
    pub nodes: Vec<NodeId>,
    /// `dlmp[node][day * 24 + hour]`
    pub dlmp: Vec<Vec<f64>>,
    pub rtlmp: Vec<Vec<f64>>,
    /// First day index with any price, per node.
    pub first_day: Vec<Option<usize>>,
}

impl PriceGrid {
    pub fn from_prices(prices: &[PriceRecord]) -> Result<Self> {
        let start = prices
            .iter()
            .map(|p| p.date())
            .min()
            .ok_or_else(|| Error::InsufficientData("no price records".into()))?;
        let end = prices.iter().map(|p| p.date()).max().unwrap();
        let n_days = ((end - start).num_days() + 1) as usize;
        let index: BTreeMap<&NodeId, usize> = prices
            .iter()
            .map(|p| &p.node_id)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        let nodes: Vec<NodeId> = index.keys().map(|n| (*n).clone()).collect();
        let mut dlmp = vec![vec![f64::NAN; n_days * 24]; nodes.len()];
        let mut rtlmp = dlmp.clone();
        let mut first_day = vec![None; nodes.len()];
        for p in prices {
            let i = index[&p.node_id];
            let day = (p.date() - start).num_days() as usize;
            let k = day * 24 + p.hour() as usize;
            dlmp[i][k] = p.dlmp;
            rtlmp[i][k] = p.rtlmp;
            first_day[i] = Some(first_day[i].map_or(day, |d: usize| d.min(day)));
        }
        Ok(PriceGrid {
            start,
            n_days,
            nodes,
            dlmp,
            rtlmp,
            first_day,
        })
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + Duration::days(day as i64)
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let d = (date - self.start).num_days();
        (d >= 0 && (d as usize) < self.n_days).then_some(d as usize)
    }

    pub fn node_index(&self, node: &NodeId) -> Option<usize> {
        self.nodes.binary_search(node).ok()
    }

    /// Whether `node` has prices on or before `day`.
    pub fn covers(&self, node: usize, day: usize) -> bool {
        self.first_day[node].is_some_and(|f| f <= day)
    }

    /// Mean day-ahead price per hour over days `[from, to)`; NaN where no sample exists.
    pub fn hourly_average(&self, node: usize, from: usize, to: usize) -> [f64; 24] {
        let mut sum = [0.0; 24];
        let mut n = [0usize; 24];
        for day in from..to {
            let row = &self.dlmp[node][day * 24..day * 24 + 24];
            for (h, v) in row.iter().enumerate() {
                if !v.is_nan() {
                    sum[h] += v;
                    n[h] += 1;
                }
            }
        }
        let mut avg = [f64::NAN; 24];
        for h in 0..24 {
            if n[h] > 0 {
                avg[h] = sum[h] / n[h] as f64;
            }
        }
        avg
    }
}
