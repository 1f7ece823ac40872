//! Two-settlement market data: prices, convergence bids, settlement and datasets.

mod io;
mod settle;
mod stats;
mod summary;
mod synth;

pub use io::{
    load_bid_csv, load_ground_truth_csv, load_price_csv, load_registry_csv, read_bids, read_prices,
    read_registry, write_bid_csv, write_ground_truth_csv, write_price_csv, write_registry_csv,
    TIMESTAMP_FORMAT,
};
pub use settle::{settle_all, settle_bid, settle_step, SettlementResult};
pub use stats::{compute_hourly_stats, HourlyPriceStats, StatsIndex};
pub use summary::{summarize_dataset, MarketSummary, MonthlyTotals};
pub use synth::{
    archetype_counts, generate_synthetic_market, ArchetypeMix, GeneratorConfig, ParticipantSpec,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of price/quantity steps in one convergence bid.
pub const MAX_STEPS: usize = 10;

/// Cheap-to-clone opaque identifier (node, participant or bid).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Id(Arc<str>);

impl Id {
    pub fn new(s: &str) -> Self {
        Id(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<String> for Id {
    fn from(s: String) -> Self {
        Id(Arc::from(s))
    }
}

impl From<&str> for Id {
    fn from(s: &str) -> Self {
        Id::new(s)
    }
}

impl From<Id> for String {
    fn from(id: Id) -> Self {
        id.0.to_string()
    }
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

pub type NodeId = Id;
pub type ParticipantId = Id;
pub type BidId = Id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Supply,
    Demand,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Supply => Side::Demand,
            Side::Demand => Side::Supply,
        }
    }

    /// CSV tag, `S` or `D`.
    pub fn tag(self) -> &'static str {
        match self {
            Side::Supply => "S",
            Side::Demand => "D",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Side> {
        match tag {
            "S" => Some(Side::Supply),
            "D" => Some(Side::Demand),
            _ => None,
        }
    }

    /// Whether a step priced at `price` clears against day-ahead price `dlmp`.
    /// Equality clears on both sides.
    #[inline]
    pub fn clears(self, dlmp: f64, price: f64) -> bool {
        match self {
            Side::Supply => dlmp >= price,
            Side::Demand => dlmp <= price,
        }
    }

    /// Per-MWh payoff of a cleared position.
    #[inline]
    pub fn unit_gain(self, dlmp: f64, rtlmp: f64) -> f64 {
        match self {
            Side::Supply => dlmp - rtlmp,
            Side::Demand => rtlmp - dlmp,
        }
    }
}

/// One node-hour of day-ahead and real-time prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRecord {
    pub node_id: NodeId,
    pub timestamp: DateTime<Utc>,
    pub dlmp: f64,
    pub rtlmp: f64,
    pub gap: f64,
}

impl PriceRecord {
    pub fn new(node_id: NodeId, timestamp: DateTime<Utc>, dlmp: f64, rtlmp: f64) -> Self {
        PriceRecord {
            node_id,
            timestamp,
            dlmp,
            rtlmp,
            gap: dlmp - rtlmp,
        }
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }

    pub fn hour(&self) -> u8 {
        self.timestamp.hour() as u8
    }
}

/// Hour-resolution UTC instant for a market date and hour.
pub fn market_timestamp(date: NaiveDate, hour: u8) -> DateTime<Utc> {
    date.and_hms_opt(hour as u32, 0, 0)
        .expect("hour in 0..24")
        .and_utc()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBidStep {
    /// Cumulative quantity in MWh.
    pub quantity: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBid {
    pub bid_id: BidId,
    pub participant_id: ParticipantId,
    pub node_id: NodeId,
    pub date: NaiveDate,
    pub hour: u8,
    pub side: Side,
    steps: Vec<PriceBidStep>,
}

impl ConvergenceBid {
    /// Builds a bid, enforcing step count, quantity and price-ordering invariants.
    pub fn new(
        bid_id: BidId,
        participant_id: ParticipantId,
        node_id: NodeId,
        date: NaiveDate,
        hour: u8,
        side: Side,
        steps: Vec<PriceBidStep>,
    ) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidBid {
            bid_id: bid_id.to_string(),
            reason,
        };
        if hour > 23 {
            return Err(invalid(format!("hour {hour} out of range 0-23")));
        }
        if steps.is_empty() {
            return Err(invalid("no steps".into()));
        }
        if steps.len() > MAX_STEPS {
            return Err(invalid(format!(
                "{} steps, at most {MAX_STEPS} allowed",
                steps.len()
            )));
        }
        for (i, s) in steps.iter().enumerate() {
            if !s.quantity.is_finite() || !s.price.is_finite() {
                return Err(invalid(format!("step {} is not finite", i + 1)));
            }
            if s.quantity <= 0.0 {
                return Err(invalid(format!("step {} quantity must be positive", i + 1)));
            }
        }
        for (i, w) in steps.windows(2).enumerate() {
            if w[1].quantity <= w[0].quantity {
                return Err(invalid(format!(
                    "step quantities must strictly increase (step {} -> {})",
                    i + 1,
                    i + 2
                )));
            }
            let ordered = match side {
                Side::Supply => w[1].price >= w[0].price,
                Side::Demand => w[1].price <= w[0].price,
            };
            if !ordered {
                return Err(invalid(format!(
                    "{} step prices out of order at step {}",
                    match side {
                        Side::Supply => "supply",
                        Side::Demand => "demand",
                    },
                    i + 2
                )));
            }
        }
        Ok(ConvergenceBid {
            bid_id,
            participant_id,
            node_id,
            date,
            hour,
            side,
            steps,
        })
    }

    pub fn steps(&self) -> &[PriceBidStep] {
        &self.steps
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Headline bid quantity: the largest step quantity.
    pub fn quantity(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.quantity)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_price(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.price)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_price(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.price)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        market_timestamp(self.date, self.hour)
    }
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!(
                "empty date range {start}..={end}"
            )));
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end
    }

    /// Number of days in the range.
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    /// The `days` calendar days strictly before `date`.
    pub fn trailing(date: NaiveDate, days: i64) -> Self {
        DateRange {
            start: date - Duration::days(days),
            end: date - Duration::days(1),
        }
    }
}

/// Node flags: `true` for a major aggregated node (trading hub or default load aggregation point).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeRegistry {
    nodes: BTreeMap<NodeId, bool>,
}

impl NodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, is_major: bool) {
        self.nodes.insert(node, is_major);
    }

    pub fn is_major(&self, node: &NodeId) -> Option<bool> {
        self.nodes.get(node).copied()
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.nodes.contains_key(node)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, bool)> {
        self.nodes.iter().map(|(k, v)| (k, *v))
    }
}

impl FromIterator<(NodeId, bool)> for NodeRegistry {
    fn from_iter<I: IntoIterator<Item = (NodeId, bool)>>(iter: I) -> Self {
        NodeRegistry {
            nodes: iter.into_iter().collect(),
        }
    }
}

/// The three strategy archetypes planted by the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Archetype {
    PriceForecasting,
    SelfScheduling,
    Opportunistic,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [
        Archetype::PriceForecasting,
        Archetype::SelfScheduling,
        Archetype::Opportunistic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::PriceForecasting => "price_forecasting",
            Archetype::SelfScheduling => "self_scheduling",
            Archetype::Opportunistic => "opportunistic",
        }
    }

    pub fn parse(s: &str) -> Option<Archetype> {
        Archetype::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

/// Planted strategy per bid and per participant for synthetic datasets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub participants: BTreeMap<ParticipantId, ArchetypeMix>,
    pub bids: BTreeMap<BidId, Archetype>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    pub prices: Vec<PriceRecord>,
    pub bids: Vec<ConvergenceBid>,
    pub registry: NodeRegistry,
    pub ground_truth: Option<GroundTruth>,
}

impl MarketDataset {
    /// Assembles a dataset; every bid must sit on a registered node.
    pub fn new(
        prices: Vec<PriceRecord>,
        bids: Vec<ConvergenceBid>,
        registry: NodeRegistry,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Self> {
        if let Some(bid) = bids.iter().find(|b| !registry.contains(&b.node_id)) {
            return Err(Error::MissingData(format!(
                "bid {} references unregistered node {}",
                bid.bid_id, bid.node_id
            )));
        }
        Ok(MarketDataset {
            prices,
            bids,
            registry,
            ground_truth,
        })
    }

    pub fn price_index(&self) -> PriceIndex<'_> {
        PriceIndex::new(&self.prices)
    }

    /// Bids without a matching price record.
    pub fn unsettleable_bids(&self) -> Vec<&ConvergenceBid> {
        let index = self.price_index();
        self.bids
            .iter()
            .filter(|b| index.get(&b.node_id, b.date, b.hour).is_none())
            .collect()
    }

    pub fn participants(&self) -> BTreeSet<ParticipantId> {
        self.bids.iter().map(|b| b.participant_id.clone()).collect()
    }

    /// First and last day covered by price records.
    pub fn price_span(&self) -> Option<DateRange> {
        let first = self.prices.iter().map(|p| p.date()).min()?;
        let last = self.prices.iter().map(|p| p.date()).max()?;
        Some(DateRange {
            start: first,
            end: last,
        })
    }
}

/// Lookup of price records by (node, date, hour).
pub struct PriceIndex<'a> {
    map: HashMap<(&'a NodeId, NaiveDate, u8), &'a PriceRecord>,
}

impl<'a> PriceIndex<'a> {
    pub fn new(prices: &'a [PriceRecord]) -> Self {
        let map = prices
            .iter()
            .map(|p| ((&p.node_id, p.date(), p.hour()), p))
            .collect();
        PriceIndex { map }
    }

    pub fn get(&self, node: &NodeId, date: NaiveDate, hour: u8) -> Option<&'a PriceRecord> {
        self.map.get(&(node, date, hour)).copied()
    }
}

/// `YYYY-MM` key for monthly aggregation.
pub fn month_key(date: NaiveDate) -> String {
    format!("{:04}-{:02}", date.year(), date.month())
}

/// Rounds to the fixed 4-decimal CSV precision.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}
