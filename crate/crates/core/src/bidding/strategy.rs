use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::forecast::ForecastAccuracy;
use super::labeling::NodeLabel;
use crate::error::{Error, Result};
use crate::market::{ConvergenceBid, NodeId, PriceBidStep, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum StrategyKind {
    /// Bid close to the forecast day-ahead price.
    PriceForecasting,
    /// Bid far from the average so the bid always clears; only the side matters.
    SelfScheduling,
    /// Spike capture from the node-label schedules.
    Opportunistic,
    NoBid,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::PriceForecasting,
        StrategyKind::SelfScheduling,
        StrategyKind::Opportunistic,
        StrategyKind::NoBid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::PriceForecasting => "strategy1_price_forecasting",
            StrategyKind::SelfScheduling => "strategy2_self_scheduling",
            StrategyKind::Opportunistic => "strategy3_opportunistic",
            StrategyKind::NoBid => "no_bid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyThresholds {
    pub dlmp: f64,
    pub rtlmp: f64,
    pub sign: f64,
}

impl Default for AccuracyThresholds {
    fn default() -> Self {
        AccuracyThresholds {
            dlmp: 0.8,
            rtlmp: 0.8,
            sign: 0.8,
        }
    }
}

impl AccuracyThresholds {
    pub fn uniform(t: f64) -> Self {
        AccuracyThresholds { dlmp: t, rtlmp: t, sign: t }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("dlmp", self.dlmp), ("rtlmp", self.rtlmp), ("sign", self.sign)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("backtest.tau_{k} {v} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Strategy for one node and day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyChoice {
    pub node_id: NodeId,
    pub date: NaiveDate,
    pub choice: StrategyKind,
}

/// Both magnitudes accurate, else the sign accurate, else a labeled node, else nothing.
pub fn select_strategy(label: Option<&NodeLabel>, acc: &ForecastAccuracy, tau: &AccuracyThresholds) -> StrategyKind {
    if acc.a_dlmp >= tau.dlmp && acc.a_rtlmp >= tau.rtlmp {
        StrategyKind::PriceForecasting
    } else if acc.a_sign >= tau.sign {
        StrategyKind::SelfScheduling
    } else if label.is_some_and(NodeLabel::is_labeled) {
        StrategyKind::Opportunistic
    } else {
        StrategyKind::NoBid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidRules {
    pub strategy1_margin: f64,
    pub strategy2_offset: f64,
    pub quantity: f64,
}

impl Default for BidRules {
    fn default() -> Self {
        BidRules {
            strategy1_margin: 2.0,
            strategy2_offset: 500.0,
            quantity: 50.0,
        }
    }
}

impl BidRules {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("strategy1_margin", self.strategy1_margin),
            ("strategy2_offset", self.strategy2_offset),
            ("quantity", self.quantity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("backtest.{k} {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// Next-day inputs for one node. Missing hours are NaN and produce no bid.
#[derive(Debug, Clone, Copy)]
pub struct DayInputs<'a> {
    pub node_id: &'a NodeId,
    pub date: NaiveDate,
    pub dlmp_hat: &'a [f64],
    pub rtlmp_hat: &'a [f64],
    /// Hourly average day-ahead price of the training window.
    pub avg_dlmp: &'a [f64; 24],
}

/// Bid id layout: `<participant>-<node>-<yyyymmdd>-<hh>-<S|D>`.
pub fn bid_id(participant: &str, node: &NodeId, date: NaiveDate, hour: u8, side: Side) -> String {
    format!("{participant}-{node}-{}-{hour:02}-{}", date.format("%Y%m%d"), side.tag())
}

/// Single-step bids for the day under `choice`, in hour order (demand before supply within an hour).
pub fn generate_bids(
    choice: StrategyKind,
    inputs: &DayInputs<'_>,
    label: Option<&NodeLabel>,
    rules: &BidRules,
    participant: &str,
) -> Result<Vec<ConvergenceBid>> {
    let mut planned: Vec<(u8, Side, f64)> = Vec::new();
    match choice {
        StrategyKind::NoBid => {}
        StrategyKind::PriceForecasting | StrategyKind::SelfScheduling => {
            for h in 0..24 {
                let (l, p) = (inputs.dlmp_hat[h], inputs.rtlmp_hat[h]);
                if !(l.is_finite() && p.is_finite()) || l == p {
                    continue;
                }
                let side = if l > p { Side::Supply } else { Side::Demand };
                let price = if choice == StrategyKind::PriceForecasting {
                    match side {
                        Side::Supply => l - rules.strategy1_margin,
                        Side::Demand => l + rules.strategy1_margin,
                    }
                } else {
                    let avg = inputs.avg_dlmp[h];
                    match side {
                        Side::Supply => avg - rules.strategy2_offset,
                        Side::Demand => avg + rules.strategy2_offset,
                    }
                };
                if price.is_finite() {
                    planned.push((h as u8, side, price));
                }
            }
        }
        StrategyKind::Opportunistic => {
            let label = label.filter(|l| l.is_labeled()).ok_or_else(|| {
                Error::MissingData(format!("no labeled schedule for node {}", inputs.node_id))
            })?;
            let demand = label.schedule(Side::Demand);
            let supply = label.schedule(Side::Supply);
            for h in 0..24 {
                for (side, sched) in [(Side::Demand, &demand), (Side::Supply, &supply)] {
                    if let Some(s) = sched {
                        if s[h].is_finite() {
                            planned.push((h as u8, side, s[h]));
                        }
                    }
                }
            }
        }
    }
    planned
        .into_iter()
        .map(|(h, side, price)| {
            ConvergenceBid::new(
                bid_id(participant, inputs.node_id, inputs.date, h, side).into(),
                participant.into(),
                inputs.node_id.clone(),
                inputs.date,
                h,
                side,
                vec![PriceBidStep {
                    quantity: rules.quantity,
                    price,
                }],
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bidding::labeling::SideOptimum;

    fn acc(l: f64, p: f64, s: f64) -> ForecastAccuracy {
        ForecastAccuracy { a_dlmp: l, a_rtlmp: p, a_sign: s }
    }

    fn label(demand: bool, supply: bool) -> NodeLabel {
        let opt = |on: bool| SideOptimum {
            feasible: true,
            m_star: 30.0,
            objective: if on { 500.0 } else { 0.0 },
            n_cleared: 1,
        };
        NodeLabel::from_optima("N".into(), [40.0; 24], opt(demand), opt(supply), 100.0)
    }

    #[test]
    fn decision_table() {
        let tau = AccuracyThresholds::default();
        let sup = label(false, true);
        assert_eq!(select_strategy(None, &acc(0.9, 0.9, 0.9), &tau), StrategyKind::PriceForecasting);
        assert_eq!(select_strategy(None, &acc(0.3, 0.3, 0.9), &tau), StrategyKind::SelfScheduling);
        assert_eq!(select_strategy(Some(&sup), &acc(0.3, 0.3, 0.4), &tau), StrategyKind::Opportunistic);
        assert_eq!(select_strategy(Some(&label(false, false)), &acc(0.3, 0.3, 0.4), &tau), StrategyKind::NoBid);
        assert_eq!(select_strategy(None, &acc(0.9, 0.3, 0.4), &tau), StrategyKind::NoBid);
    }

    #[test]
    fn raising_accuracy_never_moves_to_a_later_strategy() {
        let tau = AccuracyThresholds::default();
        let grid = [0.0, 0.5, 0.8, 1.0];
        for l in [None, Some(label(true, false))] {
            for &a in &grid {
                for &b in &grid {
                    for &c in &grid {
                        let base = select_strategy(l.as_ref(), &acc(a, b, c), &tau);
                        for up in [acc(1.0, b, c), acc(a, 1.0, c), acc(a, b, 1.0)] {
                            assert!(select_strategy(l.as_ref(), &up, &tau) <= base);
                        }
                    }
                }
            }
        }
    }

    fn inputs<'a>(node: &'a NodeId, l: &'a [f64], p: &'a [f64], avg: &'a [f64; 24]) -> DayInputs<'a> {
        DayInputs {
            node_id: node,
            date: NaiveDate::from_ymd_opt(2020, 7, 1).unwrap(),
            dlmp_hat: l,
            rtlmp_hat: p,
            avg_dlmp: avg,
        }
    }

    #[test]
    fn bid_rules() {
        let node = NodeId::from("N");
        let rules = BidRules::default();
        let avg = [40.0; 24];
        let mut l = [45.0; 24];
        let mut p = [45.0; 24];
        l[3] = 50.0;
        p[3] = 40.0;
        l[9] = 30.0;
        p[9] = 60.0;
        let i = inputs(&node, &l, &p, &avg);
        let b = generate_bids(StrategyKind::PriceForecasting, &i, None, &rules, "BT").unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!((b[0].hour, b[0].side, b[0].steps()[0].price), (3, Side::Supply, 48.0));
        assert_eq!((b[1].side, b[1].steps()[0].price), (Side::Demand, 32.0));
        assert_eq!(b[0].quantity(), 50.0);
        assert_eq!(b[0].bid_id.as_str(), "BT-N-20200701-03-S");
        let b = generate_bids(StrategyKind::SelfScheduling, &i, None, &rules, "BT").unwrap();
        assert_eq!((b[1].side, b[1].steps()[0].price), (Side::Demand, 540.0));
        assert_eq!(b[0].steps()[0].price, -460.0);
        assert!(generate_bids(StrategyKind::NoBid, &i, None, &rules, "BT").unwrap().is_empty());
    }

    #[test]
    fn spike_schedule_bids() {
        let node = NodeId::from("N");
        let rules = BidRules::default();
        let avg = [40.0; 24];
        let nan = [f64::NAN; 24];
        let i = inputs(&node, &nan, &nan, &avg);
        let both = label(true, true);
        let b = generate_bids(StrategyKind::Opportunistic, &i, Some(&both), &rules, "BT").unwrap();
        assert_eq!(b.len(), 48);
        let h14: Vec<_> = b.iter().filter(|x| x.hour == 14).collect();
        assert_eq!(h14[0].steps()[0].price, 10.0);
        assert_eq!(h14[1].steps()[0].price, 70.0);
        assert!(generate_bids(StrategyKind::Opportunistic, &i, None, &rules, "BT").is_err());
        assert!(generate_bids(StrategyKind::Opportunistic, &i, Some(&label(false, false)), &rules, "BT").is_err());
    }
}
