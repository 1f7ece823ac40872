use serde::Serialize;

use crate::features::{median, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum StrategyLabel {
    PriceForecasting,
    SelfScheduling,
    Opportunistic,
    Other,
}

impl StrategyLabel {
    pub const ALL: [StrategyLabel; 4] = [
        StrategyLabel::PriceForecasting,
        StrategyLabel::SelfScheduling,
        StrategyLabel::Opportunistic,
        StrategyLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyLabel::PriceForecasting => "price_forecasting",
            StrategyLabel::SelfScheduling => "self_scheduling",
            StrategyLabel::Opportunistic => "opportunistic",
            StrategyLabel::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Medians of the unscaled features of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSignature {
    pub cluster_id: i32,
    pub size: usize,
    pub delta: f64,
    pub type_consistency: f64,
    pub n_steps: f64,
    pub is_major_node: f64,
}

impl ClusterSignature {
    pub fn from_members<'a, I>(cluster_id: i32, members: I) -> Self
    where
        I: IntoIterator<Item = &'a FeatureVector>,
    {
        let mut d = Vec::new();
        let mut tc = Vec::new();
        let mut st = Vec::new();
        let mut mj = Vec::new();
        for v in members {
            d.push(v.delta);
            tc.push(v.type_consistency);
            st.push(v.n_steps as f64);
            mj.push(if v.is_major_node { 1.0 } else { 0.0 });
        }
        assert!(!d.is_empty(), "cluster {cluster_id} has no members");
        ClusterSignature {
            cluster_id,
            size: d.len(),
            delta: median(&mut d),
            type_consistency: median(&mut tc),
            n_steps: median(&mut st),
            is_major_node: median(&mut mj),
        }
    }
}

/// Price-distance thresholds separating the named strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignatureThresholds {
    pub small_delta: f64,
    pub large_delta: f64,
}

impl Default for SignatureThresholds {
    fn default() -> Self {
        SignatureThresholds {
            small_delta: 5.0,
            large_delta: 25.0,
        }
    }
}

pub fn classify_signature(s: &ClusterSignature, th: &SignatureThresholds) -> StrategyLabel {
    if s.delta.abs() <= th.small_delta {
        StrategyLabel::PriceForecasting
    } else if s.delta <= -th.large_delta && s.n_steps == 1.0 {
        StrategyLabel::SelfScheduling
    } else if s.delta >= th.large_delta && s.type_consistency >= 0.8 {
        StrategyLabel::Opportunistic
    } else {
        StrategyLabel::Other
    }
}
