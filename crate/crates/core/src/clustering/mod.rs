//! Hierarchical density clustering of bid features and mapping of clusters to strategies.

mod hierarchy;
mod mst;
mod signature;

pub use hierarchy::{condense, label_points, single_linkage, CondensedRow, CondensedTree, Member, Merge};
pub use mst::{build_mutual_reachability_mst, core_distances, euclidean, Edge};
pub use signature::{classify_signature, ClusterSignature, SignatureThresholds, StrategyLabel};

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_features, FeatureVector};
use crate::market::ParticipantId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub small_delta: f64,
    pub large_delta: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            min_cluster_size: 50,
            min_samples: 5,
            small_delta: 5.0,
            large_delta: 25.0,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.min_cluster_size < 2 {
            return bad(format!("cluster.min_cluster_size {} must be >= 2", self.min_cluster_size));
        }
        if self.min_samples < 1 {
            return bad("cluster.min_samples must be >= 1".into());
        }
        if self.min_samples > self.min_cluster_size {
            return bad(format!(
                "cluster.min_samples {} exceeds cluster.min_cluster_size {}",
                self.min_samples, self.min_cluster_size
            ));
        }
        if !(self.small_delta >= 0.0 && self.small_delta.is_finite()) {
            return bad(format!("cluster.small_delta {} must be >= 0", self.small_delta));
        }
        if !(self.large_delta >= self.small_delta && self.large_delta.is_finite()) {
            return bad(format!(
                "cluster.large_delta {} must be >= cluster.small_delta {}",
                self.large_delta, self.small_delta
            ));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> SignatureThresholds {
        SignatureThresholds {
            small_delta: self.small_delta,
            large_delta: self.large_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// Per point; -1 is noise.
    pub labels: Vec<i32>,
    pub condensed_tree: CondensedTree,
    /// Indexed by cluster label; empty until filled from unscaled features.
    pub cluster_signatures: Vec<ClusterSignature>,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().map(|&l| l + 1).max().unwrap_or(0) as usize
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }

    /// Medians of `features` (aligned with the clustered points) per cluster.
    pub fn fill_signatures(&mut self, features: &[FeatureVector]) {
        let mut members: Vec<Vec<&FeatureVector>> = vec![Vec::new(); self.n_clusters()];
        for (l, f) in self.labels.iter().zip(features) {
            if *l >= 0 {
                members[*l as usize].push(f);
            }
        }
        self.cluster_signatures = members
            .into_iter()
            .enumerate()
            .map(|(c, m)| ClusterSignature::from_members(c as i32, m))
            .collect();
    }
}

/// Clusters from a spanning tree over `n` points.
pub fn extract_condensed_clusters(n: usize, mst: &[Edge], config: &ClusteringConfig) -> Result<ClusterModel> {
    config.validate()?;
    let merges = single_linkage(n, mst)?;
    let tree = condense(n, &merges, config.min_cluster_size);
    Ok(ClusterModel {
        labels: label_points(n, &tree),
        condensed_tree: tree,
        cluster_signatures: Vec::new(),
    })
}

/// Strategy per cluster, in cluster-label order.
pub fn assign_strategy_labels(model: &ClusterModel, thresholds: &SignatureThresholds) -> Vec<StrategyLabel> {
    model
        .cluster_signatures
        .iter()
        .map(|s| classify_signature(s, thresholds))
        .collect()
}

/// Fraction of one participant's bids per strategy; noise counts as Other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyShares {
    pub participant_id: ParticipantId,
    pub price_forecasting: f64,
    pub self_scheduling: f64,
    pub opportunistic: f64,
    pub other: f64,
}

impl StrategyShares {
    pub fn get(&self, label: StrategyLabel) -> f64 {
        match label {
            StrategyLabel::PriceForecasting => self.price_forecasting,
            StrategyLabel::SelfScheduling => self.self_scheduling,
            StrategyLabel::Opportunistic => self.opportunistic,
            StrategyLabel::Other => self.other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub model: ClusterModel,
    pub cluster_strategies: Vec<StrategyLabel>,
    /// Strategy of every input bid.
    pub bid_strategies: Vec<StrategyLabel>,
    pub shares: Vec<StrategyShares>,
}

pub fn participant_shares(owners: &[ParticipantId], strategies: &[StrategyLabel]) -> Vec<StrategyShares> {
    let mut counts: BTreeMap<&ParticipantId, [usize; 4]> = BTreeMap::new();
    for (p, s) in owners.iter().zip(strategies) {
        counts.entry(p).or_default()[s.index()] += 1;
    }
    counts
        .into_iter()
        .map(|(p, c)| {
            let total = c.iter().sum::<usize>() as f64;
            StrategyShares {
                participant_id: p.clone(),
                price_forecasting: c[0] as f64 / total,
                self_scheduling: c[1] as f64 / total,
                opportunistic: c[2] as f64 / total,
                other: c[3] as f64 / total,
            }
        })
        .collect()
}

/// Normalize, build the spanning tree, extract clusters, name them and tally shares.
///
/// `owners[i]` is the participant that submitted the bid behind `features[i]`.
pub fn cluster_bids(
    features: &[FeatureVector],
    owners: &[ParticipantId],
    config: &ClusteringConfig,
) -> Result<ClusteringResult> {
    config.validate()?;
    if owners.len() != features.len() {
        return Err(Error::InvalidInput(format!(
            "{} owners for {} feature vectors",
            owners.len(),
            features.len()
        )));
    }
    if features.len() < config.min_cluster_size.max(2) {
        return Err(Error::InsufficientData(format!(
            "clustering needs at least {} bids, got {}",
            config.min_cluster_size.max(2),
            features.len()
        )));
    }
    let matrix = normalize_features(features)?;
    let mst = build_mutual_reachability_mst(&matrix.rows, config.min_samples)?;
    let mut model = extract_condensed_clusters(features.len(), &mst, config)?;
    model.fill_signatures(features);
    let cluster_strategies = assign_strategy_labels(&model, &config.thresholds());
    let bid_strategies: Vec<StrategyLabel> = model
        .labels
        .iter()
        .map(|&l| {
            if l < 0 {
                StrategyLabel::Other
            } else {
                cluster_strategies[l as usize]
            }
        })
        .collect();
    let shares = participant_shares(owners, &bid_strategies);
    Ok(ClusteringResult {
        model,
        cluster_strategies,
        bid_strategies,
        shares,
    })
}

/// `bid_id,cluster_id,strategy_label`
pub fn write_clusters_csv<W: Write>(w: W, features: &[FeatureVector], result: &ClusteringResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["bid_id", "cluster_id", "strategy_label"])?;
    for ((f, l), s) in features.iter().zip(&result.model.labels).zip(&result.bid_strategies) {
        wtr.write_record([f.bid_id.as_str(), &l.to_string(), s.as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `participant_id,price_forecasting,self_scheduling,opportunistic,other`
pub fn write_shares_csv<W: Write>(w: W, shares: &[StrategyShares]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["participant_id", "price_forecasting", "self_scheduling", "opportunistic", "other"])?;
    for s in shares {
        wtr.write_record([
            s.participant_id.to_string(),
            format!("{:.4}", s.price_forecasting),
            format!("{:.4}", s.self_scheduling),
            format!("{:.4}", s.opportunistic),
            format!("{:.4}", s.other),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn cfg(mcs: usize, ms: usize) -> ClusteringConfig {
        ClusteringConfig {
            min_cluster_size: mcs,
            min_samples: ms,
            ..ClusteringConfig::default()
        }
    }

    fn cluster_points(points: &[[f64; 2]], c: &ClusteringConfig) -> ClusterModel {
        let mst = build_mutual_reachability_mst(points, c.min_samples).unwrap();
        extract_condensed_clusters(points.len(), &mst, c).unwrap()
    }

    fn blobs(rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        let mut pts = Vec::new();
        for center in [[0.0, 0.0], [20.0, 0.0]] {
            for _ in 0..50 {
                pts.push([
                    center[0] + rng.random_range(-0.5..0.5),
                    center[1] + rng.random_range(-0.5..0.5),
                ]);
            }
        }
        pts
    }

    /// Partition as a set of member sets, independent of label numbering.
    fn partition(labels: &[i32], order: &[usize]) -> BTreeSet<BTreeSet<usize>> {
        let mut groups: BTreeMap<i32, BTreeSet<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().insert(order[i]);
        }
        groups.into_values().collect()
    }

    #[test]
    fn two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = blobs(&mut rng);
        let m = cluster_points(&pts, &cfg(10, 5));
        assert_eq!(m.n_clusters(), 2);
        assert_eq!(m.noise_count(), 0);
        assert!(m.labels[..50].iter().all(|&l| l == 0));
        assert!(m.labels[50..].iter().all(|&l| l == 1));
    }

    #[test]
    fn uniform_never_two_large_clusters() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 2]> = (0..100).map(|_| [rng.random(), rng.random()]).collect();
            let m = cluster_points(&pts, &cfg(90, 5));
            assert!(m.n_clusters() <= 1);
        }
    }

    #[test]
    fn identical_points_one_cluster() {
        let pts = vec![[3.0, 3.0]; 20];
        let m = cluster_points(&pts, &cfg(5, 3));
        assert_eq!(m.labels, vec![0; 20]);
    }

    #[test]
    fn cluster_sizes_respect_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 2]> = (0..300).map(|_| [rng.random::<f64>() * 10.0, rng.random()]).collect();
        let c = cfg(15, 5);
        let m = cluster_points(&pts, &c);
        for k in 0..m.n_clusters() as i32 {
            assert!(m.labels.iter().filter(|&&l| l == k).count() >= 15);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = blobs(&mut rng);
        pts.extend((0..40).map(|_| [rng.random_range(-5.0..25.0), rng.random_range(-5.0..5.0)]));
        let c = cfg(10, 4);
        let base = cluster_points(&pts, &c);
        let mut order: Vec<usize> = (0..pts.len()).collect();
        for _ in 0..3 {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let shuffled: Vec<[f64; 2]> = order.iter().map(|&i| pts[i]).collect();
            let m = cluster_points(&shuffled, &c);
            let ident: Vec<usize> = (0..pts.len()).collect();
            assert_eq!(partition(&m.labels, &order), partition(&base.labels, &ident));
        }
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pts = blobs(&mut rng);
        pts.extend((0..30).map(|_| [rng.random_range(-5.0..25.0), rng.random_range(-5.0..5.0)]));
        let c = cfg(10, 4);
        let a = build_mutual_reachability_mst(&pts, 4).unwrap();
        let scaled: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] * 4.0, p[1] * 4.0]).collect();
        let b = build_mutual_reachability_mst(&scaled, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!((x.a, x.b), (y.a, y.b));
            assert_eq!(x.weight * 4.0, y.weight);
        }
        assert_eq!(cluster_points(&pts, &c).labels, cluster_points(&scaled, &c).labels);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, 1).validate().is_err());
        assert!(cfg(5, 6).validate().is_err());
        assert!(cfg(5, 0).validate().is_err());
        assert!(ClusteringConfig::default().validate().is_ok());
        let bad = ClusteringConfig { small_delta: 30.0, ..ClusteringConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn shares_sum_to_one_and_csv() {
        let owners: Vec<ParticipantId> = ["A", "A", "B", "A"].iter().map(|s| ParticipantId::from(*s)).collect();
        let strat = [
            StrategyLabel::Opportunistic,
            StrategyLabel::Other,
            StrategyLabel::SelfScheduling,
            StrategyLabel::Opportunistic,
        ];
        let s = participant_shares(&owners, &strat);
        assert_eq!(s.len(), 2);
        assert!((s[0].opportunistic - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[1].self_scheduling, 1.0);
        for x in &s {
            let total: f64 = StrategyLabel::ALL.iter().map(|&l| x.get(l)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let mut out = Vec::new();
        write_shares_csv(&mut out, &[]).unwrap();
        assert_eq!(out, b"participant_id,price_forecasting,self_scheduling,opportunistic,other\n");
    }

    #[test]
    fn too_few_bids() {
        let f = FeatureVector {
            bid_id: "b".into(),
            delta: 0.0,
            type_consistency: 0.5,
            n_steps: 1,
            is_major_node: false,
        };
        let owners = vec![ParticipantId::from("A"); 3];
        assert!(cluster_bids(&vec![f; 3], &owners, &cfg(5, 2)).is_err());
    }
}
