//! Seeded synthetic two-settlement market.
//!
//! Day-ahead prices are an hour-of-day profile plus bounded noise, with
//! additive heavy-tailed spikes. Real-time prices carry independent noise and,
//! with a node-specific probability, overshoot a day-ahead spike (which makes
//! capturing that spike a loss). Participants follow scripted archetypes.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Pareto};
use serde::{Deserialize, Serialize};

use super::{
    market_timestamp, round4, Archetype, ConvergenceBid, GroundTruth, Id, MarketDataset,
    NodeRegistry, PriceBidStep, PriceRecord, Side,
};
use crate::error::{Error, Result};

/// Relative weights of the three archetypes within one participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeMix {
    pub price_forecasting: f64,
    pub self_scheduling: f64,
    pub opportunistic: f64,
}

impl ArchetypeMix {
    pub fn pure(a: Archetype) -> Self {
        let mut m = ArchetypeMix {
            price_forecasting: 0.0,
            self_scheduling: 0.0,
            opportunistic: 0.0,
        };
        *m.weight_mut(a) = 1.0;
        m
    }

    pub fn weight(&self, a: Archetype) -> f64 {
        match a {
            Archetype::PriceForecasting => self.price_forecasting,
            Archetype::SelfScheduling => self.self_scheduling,
            Archetype::Opportunistic => self.opportunistic,
        }
    }

    fn weight_mut(&mut self, a: Archetype) -> &mut f64 {
        match a {
            Archetype::PriceForecasting => &mut self.price_forecasting,
            Archetype::SelfScheduling => &mut self.self_scheduling,
            Archetype::Opportunistic => &mut self.opportunistic,
        }
    }

    /// Splits `n` nodes between archetypes by largest remainder.
    pub fn node_counts(&self, n: usize) -> [usize; 3] {
        let total: f64 = Archetype::ALL.iter().map(|&a| self.weight(a)).sum();
        let exact: Vec<f64> = Archetype::ALL
            .iter()
            .map(|&a| self.weight(a) / total * n as f64)
            .collect();
        let mut counts = [0usize; 3];
        for i in 0..3 {
            counts[i] = exact[i].floor() as usize;
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut left = n - counts.iter().sum::<usize>();
        for i in order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

/// One scripted participant: bids every day at each of its nodes for each listed hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSpec {
    pub id: String,
    pub mix: ArchetypeMix,
    pub n_nodes: usize,
    pub hours: Vec<u8>,
}

impl ParticipantSpec {
    pub fn pure(id: &str, archetype: Archetype, n_nodes: usize, hours: &[u8]) -> Self {
        ParticipantSpec {
            id: id.to_string(),
            mix: ArchetypeMix::pure(archetype),
            n_nodes,
            hours: hours.to_vec(),
        }
    }

    /// Bids emitted over `n_days`.
    pub fn scheduled_bids(&self, n_days: usize) -> usize {
        n_days * self.n_nodes * self.hours.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_nodes: usize,
    pub n_major: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub base_price: f64,
    /// Peak-to-mean amplitude of the hour-of-day profile.
    pub daily_amplitude: f64,
    /// Bound on day-ahead noise around the profile.
    pub noise_scale: f64,
    /// Bound on real-time noise around the profile.
    pub rt_noise_scale: f64,
    /// Spike probability per node-hour for a node of median spikiness.
    pub spike_frequency: f64,
    /// Minimum spike excursion as a multiple of `noise_scale`.
    pub spike_threshold: f64,
    /// Pareto scale of the spike excess.
    pub spike_scale: f64,
    /// Pareto shape of the spike excess; smaller is heavier.
    pub spike_tail: f64,
    pub spike_cap: f64,
    pub positive_spike_share: f64,
    /// Upper bound of the per-node probability that real time overshoots a spike.
    pub rt_follow_max: f64,
    pub participants: Vec<ParticipantSpec>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_nodes: 20,
            n_major: 3,
            n_days: 60,
            start_date: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            base_price: 40.0,
            daily_amplitude: 12.0,
            noise_scale: 4.0,
            rt_noise_scale: 6.0,
            spike_frequency: 0.004,
            spike_threshold: 8.0,
            spike_scale: 40.0,
            spike_tail: 2.0,
            spike_cap: 1000.0,
            positive_spike_share: 0.5,
            rt_follow_max: 0.4,
            participants: vec![
                ParticipantSpec::pure("PF1", Archetype::PriceForecasting, 3, &[8, 12, 17, 20]),
                ParticipantSpec::pure("SS1", Archetype::SelfScheduling, 3, &[8, 12, 17, 20]),
                ParticipantSpec::pure("OP1", Archetype::Opportunistic, 3, &[8, 12, 17, 20]),
            ],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_nodes == 0 {
            return bad("generator.n_nodes must be at least 1".into());
        }
        if self.n_major > self.n_nodes {
            return bad(format!("generator.n_major {} exceeds generator.n_nodes {}", self.n_major, self.n_nodes));
        }
        if self.n_days == 0 {
            return bad("generator.n_days must be at least 1".into());
        }
        for (name, v) in [
            ("spike_frequency", self.spike_frequency),
            ("positive_spike_share", self.positive_spike_share),
            ("rt_follow_max", self.rt_follow_max),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("generator.{name} {v} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("rt_noise_scale", self.rt_noise_scale),
            ("spike_threshold", self.spike_threshold),
            ("daily_amplitude", self.daily_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("generator.{name} {v} must be non-negative"));
            }
        }
        for (name, v) in [
            ("spike_scale", self.spike_scale),
            ("spike_tail", self.spike_tail),
            ("spike_cap", self.spike_cap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("generator.{name} {v} must be positive"));
            }
        }
        if !self.base_price.is_finite() {
            return bad("generator.base_price must be finite".into());
        }
        let mut ids = BTreeSet::new();
        for p in &self.participants {
            if !ids.insert(&p.id) {
                return bad(format!("generator.participants: duplicate participant {}", p.id));
            }
            if p.n_nodes == 0 || p.n_nodes > self.n_nodes {
                return bad(format!("generator.participants: participant {} node count {} invalid", p.id, p.n_nodes));
            }
            if p.hours.is_empty() || p.hours.iter().any(|&h| h > 23) {
                return bad(format!("generator.participants: participant {} hours invalid", p.id));
            }
            let weights = Archetype::ALL.map(|a| p.mix.weight(a));
            if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                return bad(format!("generator.participants: participant {} archetype mix invalid", p.id));
            }
        }
        Ok(())
    }

    /// Largest distance from the hourly mean day-ahead price when no spikes occur.
    pub fn noise_bound(&self) -> f64 {
        2.0 * self.noise_scale + 1e-4
    }

    pub fn node_ids(&self) -> Vec<Id> {
        (0..self.n_nodes)
            .map(|i| {
                if i < self.n_major {
                    Id::from(format!("HUB_{:02}", i + 1))
                } else {
                    Id::from(format!("APN_{:04}", i + 1 - self.n_major))
                }
            })
            .collect()
    }

    fn profile(&self, level: f64, hour: usize) -> f64 {
        let phase = 2.0 * PI * (hour as f64 - 3.0) / 24.0;
        self.base_price * level - self.daily_amplitude * phase.cos()
    }
}

struct NodeSeries {
    id: Id,
    major: bool,
    base: [f64; 24],
    dlmp: Vec<f64>,
    rtlmp: Vec<f64>,
}

fn bounded_normal(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound == 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, bound / 2.0).unwrap();
    n.sample(rng).clamp(-bound, bound)
}

fn generate_prices(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<NodeSeries> {
    let spikiness = LogNormal::new(0.0, 1.0).unwrap();
    let pareto = Pareto::new(cfg.spike_scale, cfg.spike_tail).unwrap();
    let hours = cfg.n_days * 24;
    cfg.node_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let major = i < cfg.n_major;
            let level = rng.random_range(0.85..1.15);
            let spike_rate = if major {
                0.1 * cfg.spike_frequency
            } else {
                (cfg.spike_frequency * Distribution::<f64>::sample(&spikiness, rng).min(8.0)).min(1.0)
            };
            let rt_follow = rng.random::<f64>() * cfg.rt_follow_max;
            let base: [f64; 24] = std::array::from_fn(|h| cfg.profile(level, h));
            let mut dlmp = Vec::with_capacity(hours);
            let mut rtlmp = Vec::with_capacity(hours);
            for t in 0..hours {
                let b = base[t % 24];
                let mut da = b + bounded_normal(rng, cfg.noise_scale);
                let mut rt = b + bounded_normal(rng, cfg.rt_noise_scale);
                if rng.random::<f64>() < spike_rate {
                    let sign = if rng.random::<f64>() < cfg.positive_spike_share {
                        1.0
                    } else {
                        -1.0
                    };
                    let magnitude = (cfg.spike_threshold * cfg.noise_scale + pareto.sample(rng))
                        .min(cfg.spike_cap);
                    da += sign * magnitude;
                    if rng.random::<f64>() < rt_follow {
                        rt = da + sign * magnitude * rng.random_range(0.05..0.5);
                    }
                }
                dlmp.push(round4(da));
                rtlmp.push(round4(rt));
            }
            NodeSeries {
                id,
                major,
                base,
                dlmp,
                rtlmp,
            }
        })
        .collect()
}

/// Per (participant, node) scripted state.
struct Assignment {
    node: usize,
    archetype: Archetype,
    fixed_side: Side,
    distance: f64,
}

fn assign_nodes(
    spec: &ParticipantSpec,
    nodes: &[NodeSeries],
    rng: &mut ChaCha8Rng,
) -> Vec<Assignment> {
    let mut majors: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].major).collect();
    let mut regular: Vec<usize> = (0..nodes.len()).filter(|&i| !nodes[i].major).collect();
    majors.shuffle(rng);
    regular.shuffle(rng);
    let mut any: Vec<usize> = (0..nodes.len()).collect();
    any.shuffle(rng);

    let counts = spec.mix.node_counts(spec.n_nodes);
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for (a, &count) in Archetype::ALL.iter().zip(&counts) {
        let pool: Vec<usize> = match a {
            Archetype::PriceForecasting => majors.iter().chain(&regular).copied().collect(),
            Archetype::Opportunistic => regular.iter().chain(&majors).copied().collect(),
            Archetype::SelfScheduling => any.clone(),
        };
        let picked: Vec<usize> = pool.into_iter().filter(|n| !used.contains(n)).take(count).collect();
        for node in picked {
            used.insert(node);
            out.push(Assignment {
                node,
                archetype: *a,
                fixed_side: if rng.random::<bool>() {
                    Side::Supply
                } else {
                    Side::Demand
                },
                distance: rng.random_range(40.0..180.0),
            });
        }
    }
    out.sort_by_key(|a| a.node);
    out
}

fn cumulative_quantities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut q = 0.0;
    (0..n)
        .map(|_| {
            q = round4(q + rng.random_range(1.0..20.0));
            q
        })
        .collect()
}

fn make_steps(quantities: Vec<f64>, prices: Vec<f64>) -> Vec<PriceBidStep> {
    quantities
        .into_iter()
        .zip(prices)
        .map(|(quantity, price)| PriceBidStep {
            quantity,
            price: round4(price),
        })
        .collect()
}

/// Builds one scripted bid's side and steps.
fn scripted_bid(
    cfg: &GeneratorConfig,
    a: &Assignment,
    series: &NodeSeries,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> (Side, Vec<PriceBidStep>) {
    let base = series.base[t % 24];
    match a.archetype {
        Archetype::PriceForecasting => {
            let f_da = series.dlmp[t] + bounded_normal(rng, cfg.noise_scale);
            let f_rt = series.rtlmp[t] + bounded_normal(rng, cfg.rt_noise_scale);
            let n = rng.random_range(1..=4usize);
            let side = if f_da >= f_rt { Side::Supply } else { Side::Demand };
            let prices = (0..n)
                .map(|k| {
                    let offset = 1.0 + (n - 1 - k) as f64;
                    match side {
                        Side::Supply => f_da - offset,
                        Side::Demand => f_da + offset,
                    }
                })
                .collect();
            (side, make_steps(cumulative_quantities(rng, n), prices))
        }
        Archetype::SelfScheduling => {
            let f_gap = series.dlmp[t] - series.rtlmp[t]
                + bounded_normal(rng, cfg.noise_scale + cfg.rt_noise_scale);
            let side = if f_gap >= 0.0 { Side::Supply } else { Side::Demand };
            let offset = rng.random_range(400.0..600.0);
            let price = match side {
                Side::Supply => base - offset,
                Side::Demand => base + offset,
            };
            (side, make_steps(cumulative_quantities(rng, 1), vec![price]))
        }
        Archetype::Opportunistic => {
            let n = rng.random_range(1..=3usize);
            let m = a.distance + rng.random_range(-2.0..2.0);
            let prices = (0..n)
                .map(|k| match a.fixed_side {
                    Side::Supply => base + m + 5.0 * k as f64,
                    Side::Demand => base - m - 5.0 * k as f64,
                })
                .collect();
            (a.fixed_side, make_steps(cumulative_quantities(rng, n), prices))
        }
    }
}

/// Generates a deterministic synthetic dataset for `(config, seed)`.
pub fn generate_synthetic_market(config: &GeneratorConfig, seed: u64) -> Result<MarketDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = generate_prices(config, &mut rng);

    let mut registry = NodeRegistry::new();
    for n in &nodes {
        registry.insert(n.id.clone(), n.major);
    }

    let mut truth = GroundTruth::default();
    let mut bids = Vec::new();
    for spec in &config.participants {
        let pid = Id::from(spec.id.as_str());
        truth.participants.insert(pid.clone(), spec.mix);
        let assignments = assign_nodes(spec, &nodes, &mut rng);
        let mut hours = spec.hours.clone();
        hours.sort_unstable();
        hours.dedup();
        let mut seq = 0usize;
        for day in 0..config.n_days {
            let date = config.start_date + Duration::days(day as i64);
            for a in &assignments {
                let series = &nodes[a.node];
                for &hour in &hours {
                    let t = day * 24 + hour as usize;
                    let (side, steps) = scripted_bid(config, a, series, t, &mut rng);
                    seq += 1;
                    let bid_id = Id::from(format!("{}-{:07}", spec.id, seq));
                    let bid = ConvergenceBid::new(
                        bid_id.clone(),
                        pid.clone(),
                        series.id.clone(),
                        date,
                        hour,
                        side,
                        steps,
                    )?;
                    truth.bids.insert(bid_id, a.archetype);
                    bids.push(bid);
                }
            }
        }
    }

    let mut prices = Vec::with_capacity(config.n_nodes * config.n_days * 24);
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| nodes[a].id.cmp(&nodes[b].id));
    for i in order {
        let n = &nodes[i];
        for t in 0..n.dlmp.len() {
            let date = config.start_date + Duration::days((t / 24) as i64);
            prices.push(PriceRecord::new(
                n.id.clone(),
                market_timestamp(date, (t % 24) as u8),
                n.dlmp[t],
                n.rtlmp[t],
            ));
        }
    }
    bids.sort_by(|a, b| {
        (a.date, a.hour, &a.participant_id, &a.node_id, &a.bid_id).cmp(&(
            b.date,
            b.hour,
            &b.participant_id,
            &b.node_id,
            &b.bid_id,
        ))
    });
    MarketDataset::new(prices, bids, registry, Some(truth))
}

/// Bid counts per planted archetype.
pub fn archetype_counts(truth: &GroundTruth) -> BTreeMap<Archetype, usize> {
    let mut out = BTreeMap::new();
    for a in truth.bids.values() {
        *out.entry(*a).or_insert(0) += 1;
    }
    out
}
