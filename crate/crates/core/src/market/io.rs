//! CSV ingestion and emission for prices, bids, node registry and ground truth.
//!
//! Monetary values and quantities are written with exactly four decimals.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike, Utc};

use super::{
    Archetype, ConvergenceBid, GroundTruth, NodeRegistry, PriceBidStep, PriceRecord, Side,
};
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%MZ";

const PRICE_HEADER: [&str; 4] = ["timestamp", "node_id", "dlmp", "rtlmp"];
const BID_HEADER: [&str; 7] = [
    "bid_id",
    "participant_id",
    "node_id",
    "date",
    "hour",
    "side",
    "steps",
];
const REGISTRY_HEADER: [&str; 2] = ["node_id", "is_major"];
const GROUND_TRUTH_HEADER: [&str; 3] = ["bid_id", "participant_id", "archetype"];

fn open(path: &Path) -> Result<File> {
    Ok(File::open(path)?)
}

fn source_name(path: &Path) -> String {
    path.display().to_string()
}

fn reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(rdr)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], source: &str) -> Result<()> {
    let header = rdr.headers()?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::MalformedRow {
            source_name: source.to_string(),
            row: 1,
            reason: format!("header {:?}, expected {:?}", got.join(","), expected.join(",")),
        });
    }
    Ok(())
}

fn malformed(source: &str, row: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        source_name: source.to_string(),
        row,
        reason: reason.into(),
    }
}

fn parse_f64(field: &str, what: &str, source: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| malformed(source, row, format!("{what} {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(malformed(source, row, format!("{what} {field:?} is not finite")));
    }
    Ok(v)
}

/// Parses an hourly ISO-8601 timestamp such as `2019-06-01T14:00Z`.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let parsed = NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%SZ"))
        .map(|n| n.and_utc())
        .or_else(|_| DateTime::parse_from_rfc3339(s).map(|d| d.with_timezone(&Utc)))
        .ok()?;
    (parsed.minute() == 0 && parsed.second() == 0 && parsed.nanosecond() == 0).then_some(parsed)
}

pub fn load_price_csv(path: &Path) -> Result<Vec<PriceRecord>> {
    read_prices(open(path)?, &source_name(path))
}

/// Reads price rows, computes gaps and returns them sorted by (node, timestamp).
pub fn read_prices<R: Read>(rdr: R, source: &str) -> Result<Vec<PriceRecord>> {
    let mut rdr = reader(rdr);
    check_header(&mut rdr, &PRICE_HEADER, source)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != PRICE_HEADER.len() {
            return Err(malformed(source, row, format!("expected 4 fields, got {}", rec.len())));
        }
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| malformed(source, row, format!("bad hourly timestamp {:?}", &rec[0])))?;
        if rec[1].is_empty() {
            return Err(malformed(source, row, "empty node_id"));
        }
        let dlmp = parse_f64(&rec[2], "dlmp", source, row)?;
        let rtlmp = parse_f64(&rec[3], "rtlmp", source, row)?;
        out.push(PriceRecord::new(rec[1].into(), ts, dlmp, rtlmp));
    }
    out.sort_by(|a, b| (&a.node_id, a.timestamp).cmp(&(&b.node_id, b.timestamp)));
    if let Some(w) = out
        .windows(2)
        .find(|w| w[0].node_id == w[1].node_id && w[0].timestamp == w[1].timestamp)
    {
        return Err(Error::DuplicateKey {
            node: w[0].node_id.to_string(),
            timestamp: w[0].timestamp.format(TIMESTAMP_FORMAT).to_string(),
        });
    }
    Ok(out)
}

pub fn write_price_csv<W: Write>(w: W, prices: &[PriceRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(PRICE_HEADER)?;
    for p in prices {
        wtr.write_record([
            p.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            p.node_id.to_string(),
            format!("{:.4}", p.dlmp),
            format!("{:.4}", p.rtlmp),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_steps(s: &str, source: &str, row: usize) -> Result<Vec<PriceBidStep>> {
    s.split(';')
        .map(|part| {
            let (q, p) = part
                .split_once('@')
                .ok_or_else(|| malformed(source, row, format!("step {part:?} is not qty@price")))?;
            Ok(PriceBidStep {
                quantity: parse_f64(q.trim(), "step quantity", source, row)?,
                price: parse_f64(p.trim(), "step price", source, row)?,
            })
        })
        .collect()
}

pub fn format_steps(bid: &ConvergenceBid) -> String {
    bid.steps()
        .iter()
        .map(|s| format!("{:.4}@{:.4}", s.quantity, s.price))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn load_bid_csv(path: &Path) -> Result<Vec<ConvergenceBid>> {
    read_bids(open(path)?, &source_name(path))
}

/// Reads bid rows; any row violating the bid invariants is rejected with its reason.
pub fn read_bids<R: Read>(rdr: R, source: &str) -> Result<Vec<ConvergenceBid>> {
    let mut rdr = reader(rdr);
    check_header(&mut rdr, &BID_HEADER, source)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != BID_HEADER.len() {
            return Err(malformed(source, row, format!("expected 7 fields, got {}", rec.len())));
        }
        let date: NaiveDate = rec[3]
            .parse()
            .map_err(|_| malformed(source, row, format!("bad date {:?}", &rec[3])))?;
        let hour: u8 = rec[4]
            .parse()
            .map_err(|_| malformed(source, row, format!("bad hour {:?}", &rec[4])))?;
        let side = Side::from_tag(&rec[5])
            .ok_or_else(|| malformed(source, row, format!("unknown side tag {:?}", &rec[5])))?;
        let steps = parse_steps(&rec[6], source, row)?;
        let bid = ConvergenceBid::new(
            rec[0].into(),
            rec[1].into(),
            rec[2].into(),
            date,
            hour,
            side,
            steps,
        )
        .map_err(|e| malformed(source, row, e.to_string()))?;
        out.push(bid);
    }
    Ok(out)
}

pub fn write_bid_csv<W: Write>(w: W, bids: &[ConvergenceBid]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BID_HEADER)?;
    for b in bids {
        wtr.write_record([
            b.bid_id.to_string(),
            b.participant_id.to_string(),
            b.node_id.to_string(),
            b.date.to_string(),
            b.hour.to_string(),
            b.side.tag().to_string(),
            format_steps(b),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_registry_csv(path: &Path) -> Result<NodeRegistry> {
    read_registry(open(path)?, &source_name(path))
}

pub fn read_registry<R: Read>(rdr: R, source: &str) -> Result<NodeRegistry> {
    let mut rdr = reader(rdr);
    check_header(&mut rdr, &REGISTRY_HEADER, source)?;
    let mut reg = NodeRegistry::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let is_major = match rec.get(1) {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(malformed(source, row, format!("is_major {other:?} is not 0 or 1")))
            }
        };
        if reg.contains(&rec[0].into()) {
            return Err(malformed(source, row, format!("duplicate node {:?}", &rec[0])));
        }
        reg.insert(rec[0].into(), is_major);
    }
    Ok(reg)
}

pub fn write_registry_csv<W: Write>(w: W, registry: &NodeRegistry) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(REGISTRY_HEADER)?;
    for (node, major) in registry.iter() {
        wtr.write_record([node.as_str(), if major { "1" } else { "0" }])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-bid planted archetypes. Participant mixes are not stored in this file.
pub fn load_ground_truth_csv(path: &Path) -> Result<GroundTruth> {
    let source = source_name(path);
    let mut rdr = reader(open(path)?);
    check_header(&mut rdr, &GROUND_TRUTH_HEADER, &source)?;
    let mut bids = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let a = Archetype::parse(&rec[2])
            .ok_or_else(|| malformed(&source, row, format!("unknown archetype {:?}", &rec[2])))?;
        bids.insert(rec[0].into(), a);
    }
    Ok(GroundTruth {
        participants: BTreeMap::new(),
        bids,
    })
}

pub fn write_ground_truth_csv<W: Write>(
    w: W,
    bids: &[ConvergenceBid],
    truth: &GroundTruth,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(GROUND_TRUTH_HEADER)?;
    for b in bids {
        if let Some(a) = truth.bids.get(&b.bid_id) {
            wtr.write_record([b.bid_id.as_str(), b.participant_id.as_str(), a.as_str()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
