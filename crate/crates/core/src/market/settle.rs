use serde::Serialize;

use super::{BidId, ConvergenceBid, MarketDataset, PriceRecord, Side};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettlementResult {
    pub bid_id: BidId,
    pub cleared_quantity: f64,
    pub net_profit: f64,
    pub profit_part: f64,
    pub loss_part: f64,
}

impl SettlementResult {
    pub fn is_cleared(&self) -> bool {
        self.cleared_quantity > 0.0
    }
}

/// Settles a single-price position: returns (cleared quantity, net profit).
#[inline]
pub fn settle_step(side: Side, price: f64, quantity: f64, dlmp: f64, rtlmp: f64) -> (f64, f64) {
    if side.clears(dlmp, price) {
        (quantity, quantity * side.unit_gain(dlmp, rtlmp))
    } else {
        (0.0, 0.0)
    }
}

/// Settles a bid against the price record of its node-hour.
///
/// Steps form a cumulative quantity curve, so the cleared quantity is the
/// quantity of the deepest step that is in the money.
pub fn settle_bid(bid: &ConvergenceBid, record: &PriceRecord) -> Result<SettlementResult> {
    if record.node_id != bid.node_id || record.date() != bid.date || record.hour() != bid.hour {
        return Err(Error::KeyMismatch(format!(
            "bid {} is for {} {} h{} but record is {} {}",
            bid.bid_id, bid.node_id, bid.date, bid.hour, record.node_id, record.timestamp
        )));
    }
    let cleared_quantity = bid
        .steps()
        .iter()
        .filter(|s| bid.side.clears(record.dlmp, s.price))
        .map(|s| s.quantity)
        .fold(0.0, f64::max);
    let net_profit = cleared_quantity * bid.side.unit_gain(record.dlmp, record.rtlmp);
    // -0.0 would leak into reports as "-0.0000"
    let net_profit = if net_profit == 0.0 { 0.0 } else { net_profit };
    Ok(SettlementResult {
        bid_id: bid.bid_id.clone(),
        cleared_quantity,
        net_profit,
        profit_part: net_profit.max(0.0),
        loss_part: net_profit.min(0.0),
    })
}

/// Settles every bid in the dataset, in bid order.
pub fn settle_all(dataset: &MarketDataset) -> Result<Vec<SettlementResult>> {
    let index = dataset.price_index();
    dataset
        .bids
        .iter()
        .map(|b| {
            let rec = index.get(&b.node_id, b.date, b.hour).ok_or_else(|| {
                Error::MissingData(format!(
                    "no price record for bid {} at {} {} h{}",
                    b.bid_id, b.node_id, b.date, b.hour
                ))
            })?;
            settle_bid(b, rec)
        })
        .collect()
}
