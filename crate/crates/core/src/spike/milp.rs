//! Big-M mixed-integer form of the spike problem, kept as a verification contract.
//!
//! Per interval `t` with unit payoff `g_t`, the witness carries a clearing
//! binary `b1`, a sign binary `b2` and the product `z = b1 * b2`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{bid_price, OptimizerConfig, SpikeInstance, SpikeSolution};
use crate::error::{Error, Result};
use crate::market::Side;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MilpWitness {
    pub b1: Vec<bool>,
    pub b2: Vec<bool>,
    pub z: Vec<f64>,
    pub m: f64,
    /// Objective claimed by the solver that produced the witness.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MilpConstraint {
    /// Claimed objective equals `sum b1 * g`.
    Objective,
    /// `b1 = 1` forces the bid price through the day-ahead price.
    ClearedBidCrosses,
    /// `b1 = 0` forces the bid price to stay on the rejecting side.
    RejectedBidStaysOut,
    /// `b2 = 0` forces a non-positive payoff.
    ProfitIndicator,
    /// `b2 = 1` forces a non-negative payoff.
    LossIndicator,
    /// Total loss at most epsilon times total profit.
    LossBound,
    DistanceBounds,
    ProductBelowClearing,
    ProductBelowSign,
    ProductAbove,
    ProductRange,
    /// The configured big-M is too small for this instance.
    BigMTooSmall,
}

impl MilpConstraint {
    pub fn name(self) -> &'static str {
        match self {
            MilpConstraint::Objective => "objective",
            MilpConstraint::ClearedBidCrosses => "cleared_bid_crosses",
            MilpConstraint::RejectedBidStaysOut => "rejected_bid_stays_out",
            MilpConstraint::ProfitIndicator => "profit_indicator",
            MilpConstraint::LossIndicator => "loss_indicator",
            MilpConstraint::LossBound => "loss_bound",
            MilpConstraint::DistanceBounds => "distance_bounds",
            MilpConstraint::ProductBelowClearing => "product_below_clearing",
            MilpConstraint::ProductBelowSign => "product_below_sign",
            MilpConstraint::ProductAbove => "product_above",
            MilpConstraint::ProductRange => "product_range",
            MilpConstraint::BigMTooSmall => "big_m_too_small",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: MilpConstraint,
    pub interval: Option<usize>,
    /// Amount by which the row is violated.
    pub excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpCheck {
    pub violations: Vec<Violation>,
}

impl MilpCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self, c: MilpConstraint) -> bool {
        self.violations.iter().any(|v| v.constraint == c)
    }

    pub fn constraints(&self) -> BTreeSet<MilpConstraint> {
        self.violations.iter().map(|v| v.constraint).collect()
    }
}

/// Signed slack of the clearing condition: non-negative exactly when the bid clears.
#[inline]
fn clearing_slack(side: Side, x: f64, dlmp: f64) -> f64 {
    match side {
        Side::Demand => x - dlmp,
        Side::Supply => dlmp - x,
    }
}

/// Smallest big-M for which the indicator rows are exact on this instance.
pub fn needed_big_m(instance: &SpikeInstance, config: &OptimizerConfig) -> f64 {
    let reach = config.m_min.abs().max(config.m_max.abs());
    (0..instance.len())
        .map(|t| {
            instance
                .unit_gain(t)
                .abs()
                .max(instance.breakpoint(t).abs() + reach)
        })
        .fold(0.0, f64::max)
}

/// Encodes a solver output: `b1` is the clearing mask, `b2` marks non-negative payoff.
pub fn encode_milp_witness(instance: &SpikeInstance, solution: &SpikeSolution) -> Result<MilpWitness> {
    if solution.cleared.len() != instance.len() || solution.side != instance.side {
        return Err(Error::InvalidInput(
            "solution does not belong to this instance".into(),
        ));
    }
    for t in 0..instance.len() {
        if solution.cleared[t] != instance.clears_at(t, solution.m_star) {
            return Err(Error::InvalidInput(format!(
                "cleared mask disagrees with m = {} at interval {t}",
                solution.m_star
            )));
        }
    }
    let b1 = solution.cleared.clone();
    // payoff is zero where b1 = 0, so b2 = 1 there
    let b2: Vec<bool> = (0..instance.len())
        .map(|t| !b1[t] || instance.unit_gain(t) >= 0.0)
        .collect();
    let z = b1
        .iter()
        .zip(&b2)
        .map(|(a, b)| if *a && *b { 1.0 } else { 0.0 })
        .collect();
    Ok(MilpWitness {
        b1,
        b2,
        z,
        m: solution.m_star,
        objective: solution.objective,
    })
}

/// Checks every row of the mixed-integer program at tolerance 1e-9 (relative to row magnitude).
pub fn verify_milp_constraints(
    instance: &SpikeInstance,
    witness: &MilpWitness,
    config: &OptimizerConfig,
) -> Result<MilpCheck> {
    let n = instance.len();
    if witness.b1.len() != n || witness.b2.len() != n || witness.z.len() != n {
        return Err(Error::InvalidInput(format!(
            "witness lengths {}/{}/{} do not match {n} intervals",
            witness.b1.len(),
            witness.b2.len(),
            witness.z.len()
        )));
    }
    let mut out = MilpCheck::default();
    let mut flag = |constraint, interval, excess: f64, scale: f64| {
        if excess > TOL * scale.max(1.0) {
            out.violations.push(Violation {
                constraint,
                interval,
                excess,
            });
        }
    };
    let big_m = config.big_m;
    let need = needed_big_m(instance, config);
    flag(MilpConstraint::BigMTooSmall, None, need - big_m, big_m);

    let m = witness.m;
    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    let mut objective = 0.0;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut magnitude = 0.0;
    for t in 0..n {
        let g = instance.unit_gain(t);
        let b1 = bit(witness.b1[t]);
        let b2 = bit(witness.b2[t]);
        let z = witness.z[t];
        let x = bid_price(instance.side, instance.avg_dlmp[t], m);
        let slack = clearing_slack(instance.side, x, instance.dlmp[t]);
        let eta = b1 * g;
        let scale = big_m + x.abs() + instance.dlmp[t].abs();

        flag(MilpConstraint::ClearedBidCrosses, Some(t), -big_m * (1.0 - b1) - slack, scale);
        flag(MilpConstraint::RejectedBidStaysOut, Some(t), slack - big_m * b1, scale);
        flag(MilpConstraint::LossIndicator, Some(t), -big_m * (1.0 - b2) - eta, big_m);
        flag(MilpConstraint::ProfitIndicator, Some(t), eta - big_m * b2, big_m);
        flag(MilpConstraint::ProductBelowClearing, Some(t), z - b1, 1.0);
        flag(MilpConstraint::ProductBelowSign, Some(t), z - b2, 1.0);
        flag(MilpConstraint::ProductAbove, Some(t), b1 + b2 - 1.0 - z, 1.0);
        flag(MilpConstraint::ProductRange, Some(t), (-z).max(z - 1.0), 1.0);

        objective += eta;
        lhs += (z - b1) * g;
        rhs += z * g;
        magnitude += g.abs();
    }
    flag(MilpConstraint::LossBound, None, lhs - config.epsilon * rhs, magnitude);
    flag(
        MilpConstraint::DistanceBounds,
        None,
        (config.m_min - m).max(m - config.m_max),
        config.m_max.abs().max(config.m_min.abs()),
    );
    flag(
        MilpConstraint::Objective,
        None,
        (objective - witness.objective).abs(),
        magnitude,
    );
    Ok(out)
}

fn coef(v: f64) -> String {
    if v < 0.0 {
        format!("- {}", -v)
    } else {
        format!("+ {v}")
    }
}

/// LP-format text of the program, for cross-checking with an external solver.
///
/// With a witness, its values are appended as comments.
pub fn write_milp_lp(
    instance: &SpikeInstance,
    config: &OptimizerConfig,
    witness: Option<&MilpWitness>,
) -> String {
    let n = instance.len();
    let big_m = config.big_m;
    let mut s = String::new();
    let side = match instance.side {
        Side::Demand => "demand",
        Side::Supply => "supply",
    };
    let _ = writeln!(s, "\\ spike capture, {side} side, {n} intervals");
    let _ = writeln!(s, "Maximize");
    let _ = write!(s, " obj:");
    for t in 0..n {
        let _ = write!(s, " {} b1_{t}", coef(instance.unit_gain(t)));
    }
    let _ = writeln!(s, "\nSubject To");
    for t in 0..n {
        // clearing rows in terms of the breakpoint c: m <= c when b1 = 1, m >= c when b1 = 0
        let c = instance.breakpoint(t);
        let g = instance.unit_gain(t);
        let _ = writeln!(s, " clr_{t}: m + {big_m} b1_{t} <= {}", c + big_m);
        let _ = writeln!(s, " rej_{t}: m + {big_m} b1_{t} >= {c}");
        let _ = writeln!(s, " neg_{t}: {} b1_{t} - {big_m} b2_{t} >= -{big_m}", coef(g));
        let _ = writeln!(s, " pos_{t}: {} b1_{t} - {big_m} b2_{t} <= 0", coef(g));
        let _ = writeln!(s, " zb1_{t}: z_{t} - b1_{t} <= 0");
        let _ = writeln!(s, " zb2_{t}: z_{t} - b2_{t} <= 0");
        let _ = writeln!(s, " zlo_{t}: z_{t} - b1_{t} - b2_{t} >= -1");
    }
    let _ = write!(s, " loss:");
    for t in 0..n {
        let g = instance.unit_gain(t);
        let _ = write!(s, " {} z_{t} {} b1_{t}", coef((1.0 - config.epsilon) * g), coef(-g));
    }
    let _ = writeln!(s, " <= 0\nBounds");
    let _ = writeln!(s, " {} <= m <= {}", config.m_min, config.m_max);
    for t in 0..n {
        let _ = writeln!(s, " 0 <= z_{t} <= 1");
    }
    let _ = writeln!(s, "Binaries");
    for t in 0..n {
        let _ = writeln!(s, " b1_{t} b2_{t}");
    }
    if let Some(w) = witness {
        let _ = writeln!(s, "\\ witness m = {} objective = {}", w.m, w.objective);
        for t in 0..n {
            let _ = writeln!(
                s,
                "\\ t{t} b1={} b2={} z={}",
                u8::from(w.b1[t]),
                u8::from(w.b2[t]),
                w.z[t]
            );
        }
    }
    let _ = writeln!(s, "End");
    s
}
