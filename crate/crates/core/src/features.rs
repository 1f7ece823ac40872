//! Per-bid strategy features and their robust scaling.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{
    BidId, ConvergenceBid, HourlyPriceStats, MarketDataset, NodeRegistry, Side, StatsIndex,
};

/// Days of history behind the type-consistency feature.
pub const HISTORY_DAYS: i64 = 365;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub bid_id: BidId,
    /// Signed distance of the price envelope from the hourly average day-ahead price.
    pub delta: f64,
    pub type_consistency: f64,
    pub n_steps: u8,
    pub is_major_node: bool,
}

/// Distance of the bid's price envelope from `stats.avg_dlmp`, oriented so
/// that a large positive value means the bid waits for a spike.
pub fn compute_price_distance(bid: &ConvergenceBid, stats: &HourlyPriceStats) -> Result<f64> {
    if stats.node_id != bid.node_id || stats.hour != bid.hour {
        return Err(Error::KeyMismatch(format!(
            "bid {} is at {} h{} but stats are for {} h{}",
            bid.bid_id, bid.node_id, bid.hour, stats.node_id, stats.hour
        )));
    }
    Ok(price_distance(bid, stats.avg_dlmp))
}

fn price_distance(bid: &ConvergenceBid, avg: f64) -> f64 {
    let lo = bid.min_price();
    let hi = bid.max_price();
    let raw = if lo > avg {
        lo - avg
    } else if hi < avg {
        hi - avg
    } else {
        return 0.0;
    };
    match bid.side {
        Side::Supply => raw,
        Side::Demand => -raw,
    }
}

fn consistency(same: usize, total: usize) -> f64 {
    if total == 0 {
        0.5
    } else {
        same as f64 / total as f64
    }
}

fn in_history(bid: &ConvergenceBid, h: &ConvergenceBid) -> bool {
    h.participant_id == bid.participant_id
        && h.node_id == bid.node_id
        && h.date < bid.date
        && h.date >= bid.date - Duration::days(HISTORY_DAYS)
}

/// Share of the participant's earlier bids at the same node (trailing year)
/// that were on the same side. Bids outside that history are ignored; an
/// empty history gives 0.5.
pub fn compute_type_consistency<'a, I>(bid: &ConvergenceBid, history: I) -> f64
where
    I: IntoIterator<Item = &'a ConvergenceBid>,
{
    let (mut same, mut total) = (0, 0);
    for h in history.into_iter().filter(|h| in_history(bid, h)) {
        total += 1;
        if h.side == bid.side {
            same += 1;
        }
    }
    consistency(same, total)
}

/// Read-only inputs for feature computation.
pub struct FeatureContext<'a> {
    pub stats: &'a StatsIndex,
    pub history: &'a [ConvergenceBid],
    pub registry: &'a NodeRegistry,
}

pub fn compute_feature_vector(bid: &ConvergenceBid, ctx: &FeatureContext<'_>) -> Result<FeatureVector> {
    let is_major_node = ctx.registry.is_major(&bid.node_id).ok_or_else(|| {
        Error::MissingData(format!("bid {} at unregistered node {}", bid.bid_id, bid.node_id))
    })?;
    let stats = ctx.stats.get(&bid.node_id, bid.hour).ok_or_else(|| {
        Error::MissingData(format!("no hourly stats for {} h{}", bid.node_id, bid.hour))
    })?;
    Ok(FeatureVector {
        bid_id: bid.bid_id.clone(),
        delta: compute_price_distance(bid, stats)?,
        type_consistency: compute_type_consistency(bid, ctx.history),
        n_steps: bid.n_steps() as u8,
        is_major_node,
    })
}

/// Features for every bid of the dataset, in bid order.
///
/// Same result as [`compute_feature_vector`] with the dataset's bids as
/// history, but the history counts come from per-(participant, node) prefix sums.
pub fn extract_features(dataset: &MarketDataset, stats: &StatsIndex) -> Result<Vec<FeatureVector>> {
    let mut groups: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, b) in dataset.bids.iter().enumerate() {
        groups
            .entry((b.participant_id.as_str(), b.node_id.as_str()))
            .or_default()
            .push(i);
    }
    let mut tc = vec![0.0; dataset.bids.len()];
    for idx in groups.values() {
        let mut idx = idx.clone();
        idx.sort_by_key(|&i| dataset.bids[i].date);
        let dates: Vec<NaiveDate> = idx.iter().map(|&i| dataset.bids[i].date).collect();
        let mut supply = Vec::with_capacity(idx.len() + 1);
        supply.push(0usize);
        for &i in &idx {
            let s = *supply.last().unwrap() + usize::from(dataset.bids[i].side == Side::Supply);
            supply.push(s);
        }
        for &i in &idx {
            let b = &dataset.bids[i];
            let lo = dates.partition_point(|d| *d < b.date - Duration::days(HISTORY_DAYS));
            let hi = dates.partition_point(|d| *d < b.date);
            let total = hi - lo;
            let sup = supply[hi] - supply[lo];
            let same = match b.side {
                Side::Supply => sup,
                Side::Demand => total - sup,
            };
            tc[i] = consistency(same, total);
        }
    }
    dataset
        .bids
        .iter()
        .zip(tc)
        .map(|(b, type_consistency)| {
            let is_major_node = dataset.registry.is_major(&b.node_id).ok_or_else(|| {
                Error::MissingData(format!("bid {} at unregistered node {}", b.bid_id, b.node_id))
            })?;
            let st = stats.get(&b.node_id, b.hour).ok_or_else(|| {
                Error::MissingData(format!("no hourly stats for {} h{}", b.node_id, b.hour))
            })?;
            Ok(FeatureVector {
                bid_id: b.bid_id.clone(),
                delta: price_distance(b, st.avg_dlmp),
                type_consistency,
                n_steps: b.n_steps() as u8,
                is_major_node,
            })
        })
        .collect()
}

/// Robust scaling applied to the price-distance column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling {
    pub delta_median: f64,
    /// Median absolute deviation of delta, or 1 when it is zero.
    pub delta_mad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// Columns: scaled delta, type consistency, (n_steps - 1) / 9, major-node flag.
    pub rows: Vec<[f64; 4]>,
    pub scaling: Scaling,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn normalize_features(vectors: &[FeatureVector]) -> Result<FeatureMatrix> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "normalization needs at least 2 feature vectors, got {}",
            vectors.len()
        )));
    }
    let mut d: Vec<f64> = vectors.iter().map(|v| v.delta).collect();
    let med = median(&mut d);
    let mut dev: Vec<f64> = vectors.iter().map(|v| (v.delta - med).abs()).collect();
    let mad = median(&mut dev);
    let mad = if mad > 0.0 { mad } else { 1.0 };
    let rows = vectors
        .iter()
        .map(|v| {
            [
                (v.delta - med) / mad,
                v.type_consistency,
                (v.n_steps as f64 - 1.0) / 9.0,
                if v.is_major_node { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    Ok(FeatureMatrix {
        rows,
        scaling: Scaling {
            delta_median: med,
            delta_mad: mad,
        },
    })
}

const FEATURE_HEADER: [&str; 5] = ["bid_id", "delta", "type_consistency", "n_steps", "is_major_node"];

/// `bid_id,delta,type_consistency,n_steps,is_major_node`, values before scaling.
///
/// Reals are written in shortest round-trip form so the file reloads exactly.
pub fn write_features_csv<W: Write>(w: W, vectors: &[FeatureVector]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(FEATURE_HEADER)?;
    for v in vectors {
        wtr.write_record([
            v.bid_id.as_str(),
            &v.delta.to_string(),
            &v.type_consistency.to_string(),
            &v.n_steps.to_string(),
            if v.is_major_node { "1" } else { "0" },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_features<R: Read>(rdr: R, source: &str) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(rdr);
    let header = rdr.headers()?.clone();
    if header.iter().ne(FEATURE_HEADER) {
        return Err(Error::MalformedRow {
            source_name: source.to_string(),
            row: 1,
            reason: format!("expected header {}", FEATURE_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let bad = |reason: String| Error::MalformedRow {
            source_name: source.to_string(),
            row,
            reason,
        };
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", rec.len())));
        }
        let real = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("{} is not a finite number: {:?}", FEATURE_HEADER[k], &rec[k])))
        };
        let n_steps: u8 = rec[3]
            .parse()
            .ok()
            .filter(|n| (1..=10).contains(n))
            .ok_or_else(|| bad(format!("n_steps out of range: {:?}", &rec[3])))?;
        let is_major_node = match &rec[4] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("is_major_node must be 0 or 1, got {other:?}"))),
        };
        let type_consistency = real(2)?;
        if !(0.0..=1.0).contains(&type_consistency) {
            return Err(bad(format!("type_consistency {type_consistency} outside [0, 1]")));
        }
        out.push(FeatureVector {
            bid_id: rec[0].into(),
            delta: real(1)?,
            type_consistency,
            n_steps,
            is_major_node,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{DateRange, PriceBidStep};
    use proptest::prelude::*;

    fn day(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn bid_on(id: &str, date: &str, side: Side, prices: &[f64]) -> ConvergenceBid {
        let steps = prices
            .iter()
            .enumerate()
            .map(|(i, &price)| PriceBidStep {
                quantity: (i + 1) as f64,
                price,
            })
            .collect();
        ConvergenceBid::new(id.into(), "P1".into(), "N1".into(), day(date), 14, side, steps).unwrap()
    }

    fn stats(avg: f64) -> HourlyPriceStats {
        HourlyPriceStats {
            node_id: "N1".into(),
            hour: 14,
            avg_dlmp: avg,
            sample_count: 1,
            window: DateRange::new(day("2019-01-01"), day("2019-12-31")).unwrap(),
        }
    }

    fn fv(delta: f64, tc: f64, n: u8, major: bool) -> FeatureVector {
        FeatureVector {
            bid_id: "b".into(),
            delta,
            type_consistency: tc,
            n_steps: n,
            is_major_node: major,
        }
    }

    #[test]
    fn price_distance_cases() {
        let d = |side, p: &[f64], avg| {
            compute_price_distance(&bid_on("b", "2020-01-01", side, p), &stats(avg)).unwrap()
        };
        assert_eq!(d(Side::Supply, &[45.0, 55.0], 40.0), 5.0);
        assert_eq!(d(Side::Demand, &[60.0, 50.0], 70.0), 10.0);
        assert_eq!(d(Side::Supply, &[35.0, 45.0], 40.0), 0.0);
        // boundary touches count as straddling
        assert_eq!(d(Side::Supply, &[40.0, 45.0], 40.0), 0.0);
        assert_eq!(d(Side::Demand, &[500.0], 40.0), -460.0);
    }

    #[test]
    fn price_distance_key_mismatch() {
        let mut s = stats(40.0);
        s.hour = 15;
        assert!(compute_price_distance(&bid_on("b", "2020-01-01", Side::Supply, &[1.0]), &s).is_err());
    }

    fn sixty_percent_supply() -> Vec<ConvergenceBid> {
        (0..10)
            .map(|i| {
                let side = if i < 6 { Side::Supply } else { Side::Demand };
                bid_on(&format!("h{i}"), &format!("2020-01-{:02}", i + 1), side, &[40.0])
            })
            .collect()
    }

    #[test]
    fn type_consistency_worked_example() {
        let hist = sixty_percent_supply();
        let s = bid_on("x", "2020-02-01", Side::Supply, &[40.0]);
        let d = bid_on("y", "2020-02-01", Side::Demand, &[40.0]);
        assert_eq!(compute_type_consistency(&s, &hist), 0.6);
        assert_eq!(compute_type_consistency(&d, &hist), 0.4);
        assert_eq!(compute_type_consistency(&s, &[]), 0.5);
    }

    #[test]
    fn type_consistency_window() {
        let hist = sixty_percent_supply();
        // same day and more than a year later both see nothing
        let same_day = bid_on("x", "2020-01-01", Side::Supply, &[40.0]);
        assert_eq!(compute_type_consistency(&same_day, &hist), 0.5);
        let late = bid_on("x", "2021-02-01", Side::Supply, &[40.0]);
        assert_eq!(compute_type_consistency(&late, &hist), 0.5);
    }

    #[test]
    fn feature_vector_context() {
        let idx: StatsIndex = [stats(40.0)].into_iter().collect();
        let reg: NodeRegistry = [("N1".into(), true)].into_iter().collect();
        let ctx = FeatureContext {
            stats: &idx,
            history: &[],
            registry: &reg,
        };
        let v = compute_feature_vector(&bid_on("b", "2020-01-01", Side::Supply, &[30.0]), &ctx).unwrap();
        assert_eq!(v.n_steps, 1);
        assert!(v.is_major_node);
        let v = compute_feature_vector(&bid_on("b", "2020-01-01", Side::Demand, &[60.0, 50.0, 45.0]), &ctx)
            .unwrap();
        assert_eq!(v.n_steps, 3);
        let empty = NodeRegistry::new();
        let ctx = FeatureContext {
            stats: &idx,
            history: &[],
            registry: &empty,
        };
        assert!(compute_feature_vector(&bid_on("b", "2020-01-01", Side::Supply, &[30.0]), &ctx).is_err());
    }

    #[test]
    fn normalize_fixture() {
        let v = [
            fv(0.0, 0.2, 1, false),
            fv(10.0, 0.5, 10, true),
            fv(-5.0, 1.0, 4, false),
            fv(20.0, 0.0, 1, true),
            fv(100.0, 0.9, 2, false),
        ];
        // median 10; |d - 10| = 10,0,15,10,90 -> MAD 10
        let m = normalize_features(&v).unwrap();
        assert_eq!(m.scaling, Scaling { delta_median: 10.0, delta_mad: 10.0 });
        let col0: Vec<f64> = m.rows.iter().map(|r| r[0]).collect();
        assert_eq!(col0, [-1.0, 0.0, -1.5, 1.0, 9.0]);
        assert_eq!(m.rows[1], [0.0, 0.5, 1.0, 1.0]);
        assert_eq!(m.rows[2][2], 1.0 / 3.0);
        assert_eq!(m.rows[0][2], 0.0);
    }

    #[test]
    fn normalize_degenerate() {
        let m = normalize_features(&[fv(7.0, 0.5, 1, false), fv(7.0, 0.5, 1, false)]).unwrap();
        assert!(m.rows.iter().all(|r| r[0] == 0.0));
        assert_eq!(m.scaling.delta_mad, 1.0);
        assert!(normalize_features(&[fv(1.0, 0.5, 1, false)]).is_err());
    }

    #[test]
    fn features_csv_round_trip() {
        let v = vec![fv(1.0 / 3.0, 0.6, 3, true), fv(-460.0, 0.5, 1, false)];
        let mut buf = Vec::new();
        write_features_csv(&mut buf, &v).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("bid_id,delta,type_consistency,n_steps,is_major_node\n"));
        assert_eq!(read_features(&buf[..], "f").unwrap(), v);
        assert!(read_features("bid_id,delta\n".as_bytes(), "f").is_err());
    }

    #[test]
    fn bulk_matches_per_bid() {
        use crate::market::{compute_hourly_stats, generate_synthetic_market, GeneratorConfig};
        let cfg = GeneratorConfig {
            n_nodes: 6,
            n_days: 20,
            ..GeneratorConfig::default()
        };
        let ds = generate_synthetic_market(&cfg, 5).unwrap();
        let idx: StatsIndex = compute_hourly_stats(&ds.prices, ds.price_span().unwrap())
            .into_iter()
            .collect();
        let bulk = extract_features(&ds, &idx).unwrap();
        assert_eq!(bulk.len(), ds.bids.len());
        let ctx = FeatureContext {
            stats: &idx,
            history: &ds.bids,
            registry: &ds.registry,
        };
        for (b, v) in ds.bids.iter().zip(&bulk).step_by(7) {
            assert_eq!(&compute_feature_vector(b, &ctx).unwrap(), v);
        }
    }

    fn dyadic() -> impl Strategy<Value = f64> {
        (-2000i32..2000).prop_map(|k| k as f64 / 8.0)
    }

    proptest! {
        #[test]
        fn reflection_keeps_delta(avg in dyadic(), p in proptest::collection::vec(dyadic(), 1..5)) {
            let mut p = p;
            p.sort_by(f64::total_cmp);
            let supply = bid_on("s", "2020-01-01", Side::Supply, &p);
            let reflected: Vec<f64> = p.iter().map(|x| 2.0 * avg - x).collect();
            let demand = bid_on("d", "2020-01-01", Side::Demand, &reflected);
            let a = compute_price_distance(&supply, &stats(avg)).unwrap();
            let b = compute_price_distance(&demand, &stats(avg)).unwrap();
            prop_assert_eq!(a, b);
            let straddles = p[0] <= avg && avg <= p[p.len() - 1];
            prop_assert_eq!(a == 0.0, straddles);
        }

        #[test]
        fn flipped_side_consistency_sums_to_one(sides in proptest::collection::vec(any::<bool>(), 1..40)) {
            let hist: Vec<_> = sides.iter().enumerate().map(|(i, s)| {
                let side = if *s { Side::Supply } else { Side::Demand };
                bid_on(&format!("h{i}"), "2020-01-01", side, &[40.0])
            }).collect();
            let s = compute_type_consistency(&bid_on("x", "2020-03-01", Side::Supply, &[40.0]), &hist);
            let d = compute_type_consistency(&bid_on("x", "2020-03-01", Side::Demand, &[40.0]), &hist);
            prop_assert!((s + d - 1.0).abs() < 1e-12);
        }

        #[test]
        fn scaling_preserves_column_order(deltas in proptest::collection::vec(dyadic(), 2..30)) {
            let v: Vec<_> = deltas.iter().map(|&d| fv(d, 0.5, 1, false)).collect();
            let m = normalize_features(&v).unwrap();
            for i in 0..v.len() {
                for j in 0..v.len() {
                    prop_assert_eq!(v[i].delta < v[j].delta, m.rows[i][0] < m.rows[j][0]);
                }
            }
        }
    }
}
