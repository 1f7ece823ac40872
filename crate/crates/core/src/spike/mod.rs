//! Per-node price-spike capture.
//!
//! A single distance `m` from the hourly average day-ahead price sets every
//! hour's bid price. Clearing is a threshold on `m`, so the objective is
//! piecewise constant in `m` and the optimum is found exactly by sweeping the
//! breakpoints.

mod milp;
mod oracle;

pub use milp::{
    encode_milp_witness, needed_big_m, verify_milp_constraints, write_milp_lp, MilpCheck,
    MilpConstraint, MilpWitness, Violation,
};
pub use oracle::{breakpoint_interval, solve_grid_oracle, solve_grid_scan};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{NodeId, Side};

/// Bid price at distance `m` from the hourly average: below it for demand, above it for supply.
#[inline]
pub fn bid_price(side: Side, avg_dlmp: f64, m: f64) -> f64 {
    match side {
        Side::Demand => avg_dlmp - m,
        Side::Supply => avg_dlmp + m,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeInstance {
    pub side: Side,
    pub dlmp: Vec<f64>,
    pub rtlmp: Vec<f64>,
    pub avg_dlmp: Vec<f64>,
}

impl SpikeInstance {
    pub fn new(side: Side, dlmp: Vec<f64>, rtlmp: Vec<f64>, avg_dlmp: Vec<f64>) -> Result<Self> {
        if dlmp.is_empty() {
            return Err(Error::InvalidInput("spike instance needs at least one interval".into()));
        }
        if rtlmp.len() != dlmp.len() || avg_dlmp.len() != dlmp.len() {
            return Err(Error::InvalidInput(format!(
                "interval arrays differ in length: {} / {} / {}",
                dlmp.len(),
                rtlmp.len(),
                avg_dlmp.len()
            )));
        }
        if dlmp.iter().chain(&rtlmp).chain(&avg_dlmp).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("spike instance contains non-finite prices".into()));
        }
        Ok(SpikeInstance {
            side,
            dlmp,
            rtlmp,
            avg_dlmp,
        })
    }

    pub fn len(&self) -> usize {
        self.dlmp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dlmp.is_empty()
    }

    /// Largest `m` at which interval `t` still clears.
    #[inline]
    pub fn breakpoint(&self, t: usize) -> f64 {
        match self.side {
            Side::Demand => self.avg_dlmp[t] - self.dlmp[t],
            Side::Supply => self.dlmp[t] - self.avg_dlmp[t],
        }
    }

    #[inline]
    pub fn unit_gain(&self, t: usize) -> f64 {
        self.side.unit_gain(self.dlmp[t], self.rtlmp[t])
    }

    #[inline]
    pub fn clears_at(&self, t: usize, m: f64) -> bool {
        self.side
            .clears(self.dlmp[t], bid_price(self.side, self.avg_dlmp[t], m))
    }

    /// Opposite-side instance with every price negated.
    pub fn mirrored(&self) -> SpikeInstance {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect();
        SpikeInstance {
            side: self.side.flipped(),
            dlmp: neg(&self.dlmp),
            rtlmp: neg(&self.rtlmp),
            avg_dlmp: neg(&self.avg_dlmp),
        }
    }

    /// Sorted, de-duplicated breakpoints inside `[lo, hi]`.
    pub fn breakpoints_within(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.len())
            .map(|t| self.breakpoint(t))
            .filter(|c| *c >= lo && *c <= hi)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub epsilon: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub big_m: f64,
    /// Node-labeling threshold on the unit-quantity objective.
    pub theta: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            epsilon: 0.01,
            m_min: 30.0,
            m_max: 200.0,
            big_m: 3000.0,
            theta: 100.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (k, v) in [
            ("epsilon", self.epsilon),
            ("m_min", self.m_min),
            ("m_max", self.m_max),
            ("big_m", self.big_m),
            ("theta", self.theta),
        ] {
            if !v.is_finite() {
                return bad(format!("optimizer.{k} must be finite"));
            }
        }
        if self.epsilon < 0.0 {
            return bad(format!("optimizer.epsilon {} must be >= 0", self.epsilon));
        }
        if self.m_min > self.m_max {
            return bad(format!(
                "optimizer.m_min {} exceeds optimizer.m_max {}",
                self.m_min, self.m_max
            ));
        }
        if self.big_m <= 0.0 {
            return bad(format!("optimizer.big_m {} must be positive", self.big_m));
        }
        Ok(())
    }
}

/// Outcome of a fixed `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub total_profit: f64,
    /// Sum of negative interval payoffs (≤ 0).
    pub total_loss: f64,
    pub cleared: Vec<bool>,
}

impl Evaluation {
    pub fn satisfies_loss_bound(&self, epsilon: f64) -> bool {
        loss_bound_holds(self.total_profit, self.total_loss, epsilon)
    }
}

#[inline]
fn loss_bound_holds(profit: f64, loss: f64, epsilon: f64) -> bool {
    -loss <= epsilon * profit
}

/// Unit-quantity settlement of every interval at distance `m`.
pub fn evaluate_m(instance: &SpikeInstance, m: f64) -> Evaluation {
    let mut objective = 0.0;
    let mut total_profit = 0.0;
    let mut total_loss = 0.0;
    let cleared: Vec<bool> = (0..instance.len())
        .map(|t| {
            let c = instance.clears_at(t, m);
            if c {
                let eta = instance.unit_gain(t);
                objective += eta;
                if eta >= 0.0 {
                    total_profit += eta;
                } else {
                    total_loss += eta;
                }
            }
            c
        })
        .collect();
    Evaluation {
        objective,
        total_profit,
        total_loss,
        cleared,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSolution {
    pub side: Side,
    pub feasible: bool,
    pub m_star: f64,
    pub objective: f64,
    pub cleared: Vec<bool>,
    pub profit: Vec<f64>,
    pub loss: Vec<f64>,
    pub bid_schedule: Vec<f64>,
}

impl SpikeSolution {
    pub fn from_evaluation(instance: &SpikeInstance, m: f64, feasible: bool, ev: Evaluation) -> Self {
        let n = instance.len();
        let mut profit = vec![0.0; n];
        let mut loss = vec![0.0; n];
        for t in (0..n).filter(|&t| ev.cleared[t]) {
            let eta = instance.unit_gain(t);
            if eta >= 0.0 {
                profit[t] = eta;
            } else {
                loss[t] = eta;
            }
        }
        SpikeSolution {
            side: instance.side,
            feasible,
            m_star: m,
            objective: ev.objective,
            bid_schedule: (0..n)
                .map(|t| bid_price(instance.side, instance.avg_dlmp[t], m))
                .collect(),
            cleared: ev.cleared,
            profit,
            loss,
        }
    }

    pub fn n_cleared(&self) -> usize {
        self.cleared.iter().filter(|c| **c).count()
    }

    pub fn total_profit(&self) -> f64 {
        self.profit.iter().sum()
    }

    pub fn total_loss(&self) -> f64 {
        self.loss.iter().sum()
    }
}

/// Candidate distances: in-range breakpoints plus both bounds, ascending.
pub fn candidate_distances(instance: &SpikeInstance, config: &OptimizerConfig) -> Vec<f64> {
    let mut c = instance.breakpoints_within(config.m_min, config.m_max);
    c.push(config.m_min);
    c.push(config.m_max);
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Feasible maximum over `(m, objective, feasible)` triples; ties go to the largest `m`.
fn select<I: IntoIterator<Item = (f64, f64, bool)>>(scored: I) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for (m, obj, ok) in scored {
        if !ok {
            continue;
        }
        best = match best {
            Some((bm, bo)) if bo > obj || (bo == obj && bm >= m) => Some((bm, bo)),
            _ => Some((m, obj)),
        };
    }
    best
}

fn finish(instance: &SpikeInstance, config: &OptimizerConfig, best: Option<(f64, f64)>) -> SpikeSolution {
    match best {
        Some((m, _)) => {
            let ev = evaluate_m(instance, m);
            SpikeSolution::from_evaluation(instance, m, true, ev)
        }
        None => {
            let ev = evaluate_m(instance, config.m_max);
            SpikeSolution::from_evaluation(instance, config.m_max, false, ev)
        }
    }
}

/// Exhaustive evaluation of each candidate with [`evaluate_m`].
pub(crate) fn select_by_evaluation(
    instance: &SpikeInstance,
    config: &OptimizerConfig,
    candidates: &[f64],
) -> Option<(f64, f64)> {
    select(candidates.iter().map(|&m| {
        let ev = evaluate_m(instance, m);
        (m, ev.objective, ev.satisfies_loss_bound(config.epsilon))
    }))
}

/// Exact optimum over `[m_min, m_max]` by a single sweep over sorted breakpoints.
pub fn solve_breakpoints(instance: &SpikeInstance, config: &OptimizerConfig) -> Result<SpikeSolution> {
    config.validate()?;
    let cands = candidate_distances(instance, config);
    let n = cands.len();
    let mut gain = vec![0.0; n];
    let mut lose = vec![0.0; n];
    for t in 0..instance.len() {
        // clearing is monotone in m, so it holds on a prefix of the candidates
        let k = cands.partition_point(|&m| instance.clears_at(t, m));
        if k > 0 {
            let eta = instance.unit_gain(t);
            if eta >= 0.0 {
                gain[k - 1] += eta;
            } else {
                lose[k - 1] += eta;
            }
        }
    }
    let mut profit = 0.0;
    let mut loss = 0.0;
    let mut scored = Vec::with_capacity(n);
    for i in (0..n).rev() {
        profit += gain[i];
        loss += lose[i];
        scored.push((cands[i], profit + loss, loss_bound_holds(profit, loss, config.epsilon)));
    }
    let mut best = select(scored);

    // Summation order differs from evaluate_m; confirm the pick and fall back
    // to evaluating every candidate directly if rounding disagrees.
    if let Some((m, obj)) = best {
        let ev = evaluate_m(instance, m);
        let scale = 1.0 + ev.total_profit - ev.total_loss;
        if !ev.satisfies_loss_bound(config.epsilon) || (ev.objective - obj).abs() > 1e-9 * scale {
            best = select_by_evaluation(instance, config, &cands);
        }
    }
    Ok(finish(instance, config, best))
}

pub(crate) fn finish_selection(
    instance: &SpikeInstance,
    config: &OptimizerConfig,
    best: Option<(f64, f64)>,
) -> SpikeSolution {
    finish(instance, config, best)
}

/// `node_id,side,feasible,m_star,objective,n_cleared`
pub fn write_solutions_csv<W: Write>(w: W, rows: &[(NodeId, SpikeSolution)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["node_id", "side", "feasible", "m_star", "objective", "n_cleared"])?;
    for (node, s) in rows {
        wtr.write_record([
            node.as_str(),
            s.side.tag(),
            if s.feasible { "true" } else { "false" },
            &format!("{:.4}", s.m_star),
            &format!("{:.4}", s.objective),
            &s.n_cleared().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
