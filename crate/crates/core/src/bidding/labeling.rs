use serde::Serialize;

use super::grid::PriceGrid;
use crate::error::Result;
use crate::market::{DateRange, MarketDataset, NodeId, Side};
use crate::spike::{bid_price, solve_breakpoints, OptimizerConfig, SpikeInstance};

/// Spike-capture optimum for one side of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideOptimum {
    pub feasible: bool,
    pub m_star: f64,
    /// Unit-quantity objective over the training window.
    pub objective: f64,
    pub n_cleared: usize,
}

impl SideOptimum {
    pub fn qualifies(&self, theta: f64) -> bool {
        self.feasible && self.objective > theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeLabel {
    pub node_id: NodeId,
    pub demand_cb: bool,
    pub supply_cb: bool,
    /// Hourly average day-ahead price over the training window.
    pub avg_dlmp: [f64; 24],
    pub demand: SideOptimum,
    pub supply: SideOptimum,
}

impl NodeLabel {
    pub fn from_optima(node_id: NodeId, avg_dlmp: [f64; 24], demand: SideOptimum, supply: SideOptimum, theta: f64) -> Self {
        NodeLabel {
            node_id,
            demand_cb: demand.qualifies(theta),
            supply_cb: supply.qualifies(theta),
            avg_dlmp,
            demand,
            supply,
        }
    }

    pub fn flag(&self, side: Side) -> bool {
        match side {
            Side::Demand => self.demand_cb,
            Side::Supply => self.supply_cb,
        }
    }

    pub fn optimum(&self, side: Side) -> &SideOptimum {
        match side {
            Side::Demand => &self.demand,
            Side::Supply => &self.supply,
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.demand_cb || self.supply_cb
    }

    /// Hourly bid prices for a labeled side: `avg - m*` for demand, `avg + m*` for supply.
    pub fn schedule(&self, side: Side) -> Option<[f64; 24]> {
        if !self.flag(side) {
            return None;
        }
        let m = self.optimum(side).m_star;
        Some(self.avg_dlmp.map(|a| bid_price(side, a, m)))
    }
}

pub fn side_optimum(instance: &SpikeInstance, config: &OptimizerConfig) -> Result<SideOptimum> {
    let s = solve_breakpoints(instance, config)?;
    Ok(SideOptimum {
        feasible: s.feasible,
        m_star: s.m_star,
        objective: s.objective,
        n_cleared: s.n_cleared(),
    })
}

/// Intervals of the window that can clear at some `m >= m_min`, in time order.
///
/// Dropping the rest leaves every candidate's objective, profit and loss
/// unchanged, bit for bit, because a non-cleared interval contributes nothing.
pub fn window_instance(
    grid: &PriceGrid,
    node: usize,
    from: usize,
    to: usize,
    avg: &[f64; 24],
    side: Side,
    m_min: f64,
) -> Option<SpikeInstance> {
    let (mut d, mut r, mut a) = (Vec::new(), Vec::new(), Vec::new());
    let (dl, rt) = (&grid.dlmp[node], &grid.rtlmp[node]);
    for k in from * 24..to * 24 {
        let (lam, pi, star) = (dl[k], rt[k], avg[k % 24]);
        if lam.is_nan() || pi.is_nan() || star.is_nan() {
            continue;
        }
        let bp = match side {
            Side::Demand => star - lam,
            Side::Supply => lam - star,
        };
        if bp >= m_min {
            d.push(lam);
            r.push(pi);
            a.push(star);
        }
    }
    if d.is_empty() {
        None
    } else {
        Some(SpikeInstance { side, dlmp: d, rtlmp: r, avg_dlmp: a })
    }
}

/// Labels one node from its prices over days `[from, to)`.
pub fn label_window(grid: &PriceGrid, node: usize, from: usize, to: usize, config: &OptimizerConfig) -> Result<NodeLabel> {
    config.validate()?;
    let avg = grid.hourly_average(node, from, to);
    let solve = |side| -> Result<SideOptimum> {
        match window_instance(grid, node, from, to, &avg, side, config.m_min) {
            Some(inst) => side_optimum(&inst, config),
            // nothing can clear anywhere in range
            None => Ok(SideOptimum {
                feasible: true,
                m_star: config.m_max,
                objective: 0.0,
                n_cleared: 0,
            }),
        }
    };
    let demand = solve(Side::Demand)?;
    let supply = solve(Side::Supply)?;
    Ok(NodeLabel::from_optima(grid.nodes[node].clone(), avg, demand, supply, config.theta))
}

/// Labels every node with prices from the start of `window` onwards, in node order.
pub fn label_nodes(dataset: &MarketDataset, window: DateRange, config: &OptimizerConfig) -> Result<Vec<NodeLabel>> {
    config.validate()?;
    let grid = PriceGrid::from_prices(&dataset.prices)?;
    let (Some(from), Some(last)) = (grid.day_index(window.start), grid.day_index(window.end)) else {
        return Ok(Vec::new());
    };
    (0..grid.nodes.len())
        .filter(|&i| grid.covers(i, from))
        .map(|i| label_window(&grid, i, from, last + 1, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{market_timestamp, NodeRegistry, PriceRecord};
    use crate::spike::evaluate_m;
    use chrono::{Duration, NaiveDate};

    fn example() -> SpikeInstance {
        SpikeInstance::new(
            Side::Demand,
            vec![10.0, 50.0, 30.0],
            vec![35.0, 20.0, 10.0],
            vec![40.0; 3],
        )
        .unwrap()
    }

    fn cfg(theta: f64) -> OptimizerConfig {
        OptimizerConfig {
            m_min: 0.0,
            m_max: 100.0,
            theta,
            ..Default::default()
        }
    }

    #[test]
    fn threshold_on_objective() {
        let opt = side_optimum(&example(), &cfg(10.0)).unwrap();
        assert_eq!((opt.m_star, opt.objective), (30.0, 25.0));
        let none = SideOptimum { feasible: true, m_star: 100.0, objective: 0.0, n_cleared: 0 };
        let mut avg = [f64::NAN; 24];
        avg[14] = 40.0;
        let l = NodeLabel::from_optima("N".into(), avg, opt, none, 10.0);
        assert!(l.demand_cb && !l.supply_cb);
        assert_eq!(l.schedule(Side::Demand).unwrap()[14], 10.0);
        assert!(l.schedule(Side::Supply).is_none());
        let l = NodeLabel::from_optima("N".into(), avg, opt, none, 100.0);
        assert!(!l.is_labeled());
    }

    /// Flat node with one planted spike per sign.
    fn spiky_dataset(days: usize) -> MarketDataset {
        let d0 = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
        let mut prices = Vec::new();
        for day in 0..days {
            let date = d0 + Duration::days(day as i64);
            for h in 0..24u8 {
                let (mut lam, mut pi) = (40.0 + (h % 3) as f64, 40.0);
                if day == 3 && h == 18 {
                    (lam, pi) = (400.0, 50.0);
                }
                if day == 5 && h == 4 {
                    (lam, pi) = (-300.0, 30.0);
                }
                prices.push(PriceRecord::new("N".into(), market_timestamp(date, h), lam, pi));
            }
        }
        let reg: NodeRegistry = [("N".into(), false)].into_iter().collect();
        MarketDataset::new(prices, vec![], reg, None).unwrap()
    }

    #[test]
    fn both_signs_label_both_sides() {
        let ds = spiky_dataset(10);
        let w = DateRange::new(ds.prices[0].date(), ds.prices.last().unwrap().date()).unwrap();
        let labels = label_nodes(&ds, w, &OptimizerConfig::default()).unwrap();
        assert_eq!(labels.len(), 1);
        let l = &labels[0];
        assert!(l.demand_cb && l.supply_cb);
        // the negative spike drags the hour-4 average down, so ordinary
        // hour-4 prices sit above it by more than m_min and clear as supply
        assert_eq!((l.supply.objective, l.supply.n_cleared), (359.0, 10));
        assert_eq!((l.demand.objective, l.demand.m_star), (330.0, 200.0));
        // raising theta past both objectives clears the labels
        let high = OptimizerConfig { theta: 1e4, ..Default::default() };
        assert!(!label_nodes(&ds, w, &high).unwrap()[0].is_labeled());
    }

    #[test]
    fn reduced_instance_matches_full_window() {
        let ds = spiky_dataset(10);
        let grid = PriceGrid::from_prices(&ds.prices).unwrap();
        let cfg = OptimizerConfig::default();
        let l = label_window(&grid, 0, 0, 10, &cfg).unwrap();
        for side in [Side::Demand, Side::Supply] {
            let avg: Vec<f64> = (0..240).map(|k| l.avg_dlmp[k % 24]).collect();
            let full = SpikeInstance::new(side, grid.dlmp[0].clone(), grid.rtlmp[0].clone(), avg).unwrap();
            let s = solve_breakpoints(&full, &cfg).unwrap();
            assert_eq!(l.optimum(side).m_star, s.m_star);
            assert_eq!(l.optimum(side).objective, s.objective);
            assert_eq!(l.optimum(side).objective, evaluate_m(&full, s.m_star).objective);
        }
    }

    #[test]
    fn nodes_without_history_are_skipped() {
        let ds = spiky_dataset(4);
        let early = ds.prices[0].date() - Duration::days(1);
        let w = DateRange::new(early, early + Duration::days(3)).unwrap();
        assert!(label_nodes(&ds, w, &OptimizerConfig::default()).unwrap().is_empty());
    }
}
