//! Market shares, most-present participants, and clearing/loss performance.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::Datelike;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{ConvergenceBid, MarketDataset, ParticipantId, SettlementResult, Side};

/// Percent shares of one participant under the four presence metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantShare {
    pub participant_id: ParticipantId,
    pub share_submitted_count: f64,
    pub share_cleared_count: f64,
    pub share_submitted_mwh: f64,
    pub share_cleared_mwh: f64,
}

impl ParticipantShare {
    pub fn metric(&self, k: usize) -> f64 {
        match k {
            0 => self.share_submitted_count,
            1 => self.share_cleared_count,
            2 => self.share_submitted_mwh,
            3 => self.share_cleared_mwh,
            _ => panic!("metric index {k} out of range"),
        }
    }
}

fn check_aligned(bids: &[ConvergenceBid], settlements: &[SettlementResult]) -> Result<()> {
    if bids.len() != settlements.len() {
        return Err(Error::InvalidInput(format!(
            "{} settlements for {} bids",
            settlements.len(),
            bids.len()
        )));
    }
    if let Some((b, s)) = bids.iter().zip(settlements).find(|(b, s)| b.bid_id != s.bid_id) {
        return Err(Error::KeyMismatch(format!(
            "settlement {} is not for bid {}",
            s.bid_id, b.bid_id
        )));
    }
    Ok(())
}

fn pct(x: f64, total: f64) -> f64 {
    if total > 0.0 {
        100.0 * x / total
    } else {
        0.0
    }
}

/// Per-participant percentage of submitted/cleared bid counts and MWh.
///
/// `settlements` are aligned with `dataset.bids`. A bid counts as cleared when
/// any quantity clears. A metric whose market total is zero reports 0 for everyone.
pub fn compute_shares(dataset: &MarketDataset, settlements: &[SettlementResult]) -> Result<Vec<ParticipantShare>> {
    check_aligned(&dataset.bids, settlements)?;
    let mut acc: BTreeMap<&ParticipantId, [f64; 4]> = BTreeMap::new();
    let mut total = [0.0; 4];
    for (b, s) in dataset.bids.iter().zip(settlements) {
        let v = [
            1.0,
            if s.is_cleared() { 1.0 } else { 0.0 },
            b.quantity(),
            s.cleared_quantity,
        ];
        let e = acc.entry(&b.participant_id).or_default();
        for k in 0..4 {
            e[k] += v[k];
            total[k] += v[k];
        }
    }
    Ok(acc
        .into_iter()
        .map(|(p, v)| ParticipantShare {
            participant_id: p.clone(),
            share_submitted_count: pct(v[0], total[0]),
            share_cleared_count: pct(v[1], total[1]),
            share_submitted_mwh: pct(v[2], total[2]),
            share_cleared_mwh: pct(v[3], total[3]),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedParticipant {
    /// 1-based, in descending order of submitted-count share.
    pub alias: usize,
    pub participant_id: ParticipantId,
    pub share: ParticipantShare,
    /// Metrics (0..4) under which the participant made the top list.
    pub via_metrics: Vec<usize>,
}

fn ranked(shares: &[ParticipantShare], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..shares.len()).collect();
    idx.sort_by(|&a, &b| {
        shares[b]
            .metric(k)
            .total_cmp(&shares[a].metric(k))
            .then(shares[a].participant_id.cmp(&shares[b].participant_id))
    });
    idx
}

/// Union of the `top_k` participants under each of the four metrics.
pub fn select_most_present(shares: &[ParticipantShare], top_k: usize) -> Result<Vec<SelectedParticipant>> {
    if top_k == 0 {
        return Err(Error::InvalidInput("top_k must be at least 1".into()));
    }
    let mut via: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..4 {
        for i in ranked(shares, k).into_iter().take(top_k) {
            via.entry(i).or_default().push(k);
        }
    }
    let order = ranked(shares, 0);
    Ok(order
        .into_iter()
        .filter_map(|i| via.get(&i).map(|v| (i, v.clone())))
        .enumerate()
        .map(|(n, (i, v))| SelectedParticipant {
            alias: n + 1,
            participant_id: shares[i].participant_id.clone(),
            share: shares[i].clone(),
            via_metrics: v,
        })
        .collect())
}

/// Percentage of submitted bids that cleared.
pub fn compute_csr(settlements: &[SettlementResult]) -> Result<f64> {
    if settlements.is_empty() {
        return Err(Error::InsufficientData("no bids to compute a cleared ratio".into()));
    }
    let cleared = settlements.iter().filter(|s| s.is_cleared()).count();
    Ok(100.0 * cleared as f64 / settlements.len() as f64)
}

/// Loss-to-profit ratio from non-negative totals; infinite for loss without profit.
pub fn lpr_from_totals(total_profit: f64, total_loss: f64) -> f64 {
    if total_profit > 0.0 {
        100.0 * total_loss / total_profit
    } else if total_loss > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Total profit and total loss (both ≥ 0).
pub fn profit_and_loss(settlements: &[SettlementResult]) -> (f64, f64) {
    settlements.iter().fold((0.0, 0.0), |(p, l), s| {
        (p + s.profit_part, l - s.loss_part)
    })
}

pub fn compute_lpr(settlements: &[SettlementResult]) -> f64 {
    let (p, l) = profit_and_loss(settlements);
    lpr_from_totals(p, l)
}

/// Renders an LPR value, with `inf` for the degenerate case.
pub fn format_lpr(lpr: f64) -> String {
    if lpr.is_infinite() {
        "inf".to_string()
    } else {
        format!("{lpr:.4}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceReport {
    pub participant_id: ParticipantId,
    pub csr: f64,
    pub lpr: f64,
    pub net_profit: f64,
    pub total_profit: f64,
    pub total_loss: f64,
}

fn group<'a>(
    bids: &'a [ConvergenceBid],
    settlements: &'a [SettlementResult],
) -> BTreeMap<&'a ParticipantId, Vec<(&'a ConvergenceBid, &'a SettlementResult)>> {
    let mut g: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for (b, s) in bids.iter().zip(settlements) {
        g.entry(&b.participant_id).or_default().push((b, s));
    }
    g
}

pub fn performance_by_participant(
    dataset: &MarketDataset,
    settlements: &[SettlementResult],
) -> Result<Vec<PerformanceReport>> {
    check_aligned(&dataset.bids, settlements)?;
    group(&dataset.bids, settlements)
        .into_iter()
        .map(|(p, rows)| {
            let own: Vec<SettlementResult> = rows.iter().map(|(_, s)| (*s).clone()).collect();
            let (total_profit, total_loss) = profit_and_loss(&own);
            Ok(PerformanceReport {
                participant_id: p.clone(),
                csr: compute_csr(&own)?,
                lpr: lpr_from_totals(total_profit, total_loss),
                net_profit: total_profit - total_loss,
                total_profit,
                total_loss,
            })
        })
        .collect()
}

/// Characteristics of a participant's bids; all but the first over cleared bids only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidCharacteristics {
    pub participant_id: ParticipantId,
    /// Percent of bid-hosting locations where the participant bid at least once.
    pub location_share: f64,
    pub supply_share: f64,
    pub mean_steps: f64,
    pub mean_cleared_mwh: f64,
}

pub fn bid_characteristics(
    dataset: &MarketDataset,
    settlements: &[SettlementResult],
) -> Result<Vec<BidCharacteristics>> {
    check_aligned(&dataset.bids, settlements)?;
    let hosting: BTreeSet<_> = dataset.bids.iter().map(|b| &b.node_id).collect();
    Ok(group(&dataset.bids, settlements)
        .into_iter()
        .map(|(p, rows)| {
            let nodes: BTreeSet<_> = rows.iter().map(|(b, _)| &b.node_id).collect();
            let cleared: Vec<_> = rows.iter().filter(|(_, s)| s.is_cleared()).collect();
            let n = cleared.len() as f64;
            let mean = |f: &dyn Fn(&(&ConvergenceBid, &SettlementResult)) -> f64| {
                if cleared.is_empty() {
                    0.0
                } else {
                    cleared.iter().map(|r| f(r)).sum::<f64>() / n
                }
            };
            BidCharacteristics {
                participant_id: p.clone(),
                location_share: pct(nodes.len() as f64, hosting.len() as f64),
                supply_share: 100.0 * mean(&|(b, _)| if b.side == Side::Supply { 1.0 } else { 0.0 }),
                mean_steps: mean(&|(b, _)| b.n_steps() as f64),
                mean_cleared_mwh: mean(&|(_, s)| s.cleared_quantity),
            }
        })
        .collect())
}

/// Cleared ratio per participant and calendar year; `None` where nothing was submitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearlyCsr {
    pub participant_id: ParticipantId,
    pub by_year: BTreeMap<i32, Option<f64>>,
}

pub fn yearly_csr(dataset: &MarketDataset, settlements: &[SettlementResult]) -> Result<Vec<YearlyCsr>> {
    check_aligned(&dataset.bids, settlements)?;
    let years: BTreeSet<i32> = dataset.bids.iter().map(|b| b.date.year()).collect();
    Ok(group(&dataset.bids, settlements)
        .into_iter()
        .map(|(p, rows)| {
            let mut counts: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
            for (b, s) in rows {
                let e = counts.entry(b.date.year()).or_default();
                e.0 += 1;
                e.1 += usize::from(s.is_cleared());
            }
            YearlyCsr {
                participant_id: p.clone(),
                by_year: years
                    .iter()
                    .map(|y| (*y, counts.get(y).map(|(n, c)| 100.0 * *c as f64 / *n as f64)))
                    .collect(),
            }
        })
        .collect())
}

/// `participant_id,share_submitted_count,share_cleared_count,share_submitted_mwh,share_cleared_mwh`
pub fn write_participant_shares_csv<W: Write>(w: W, shares: &[ParticipantShare]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "participant_id",
        "share_submitted_count",
        "share_cleared_count",
        "share_submitted_mwh",
        "share_cleared_mwh",
    ])?;
    for s in shares {
        wtr.write_record([
            s.participant_id.to_string(),
            format!("{:.4}", s.share_submitted_count),
            format!("{:.4}", s.share_cleared_count),
            format!("{:.4}", s.share_submitted_mwh),
            format!("{:.4}", s.share_cleared_mwh),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `alias,participant_id,metrics` with metrics as 1-based indices joined by `;`.
pub fn write_selection_csv<W: Write>(w: W, selected: &[SelectedParticipant]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["alias", "participant_id", "metrics"])?;
    for s in selected {
        let via: Vec<String> = s.via_metrics.iter().map(|k| (k + 1).to_string()).collect();
        wtr.write_record([s.alias.to_string(), s.participant_id.to_string(), via.join(";")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `participant_id,csr,lpr,net_profit,total_profit,total_loss`
pub fn write_performance_csv<W: Write>(w: W, reports: &[PerformanceReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["participant_id", "csr", "lpr", "net_profit", "total_profit", "total_loss"])?;
    for r in reports {
        wtr.write_record([
            r.participant_id.to_string(),
            format!("{:.4}", r.csr),
            format_lpr(r.lpr),
            format!("{:.4}", r.net_profit),
            format!("{:.4}", r.total_profit),
            format!("{:.4}", r.total_loss),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `participant_id,location_share,supply_share,mean_steps,mean_cleared_mwh`
pub fn write_characteristics_csv<W: Write>(w: W, rows: &[BidCharacteristics]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["participant_id", "location_share", "supply_share", "mean_steps", "mean_cleared_mwh"])?;
    for r in rows {
        wtr.write_record([
            r.participant_id.to_string(),
            format!("{:.4}", r.location_share),
            format!("{:.4}", r.supply_share),
            format!("{:.4}", r.mean_steps),
            format!("{:.4}", r.mean_cleared_mwh),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `participant_id,<year>...`, `-` where the participant was absent that year.
pub fn write_yearly_csr_csv<W: Write>(w: W, rows: &[YearlyCsr]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let years: Vec<i32> = rows
        .first()
        .map(|r| r.by_year.keys().copied().collect())
        .unwrap_or_default();
    let mut header = vec!["participant_id".to_string()];
    header.extend(years.iter().map(|y| y.to_string()));
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.participant_id.to_string()];
        rec.extend(years.iter().map(|y| match r.by_year.get(y).copied().flatten() {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        }));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
