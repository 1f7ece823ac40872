//! Brute-force reference solvers over a dense grid of distances.

use super::{evaluate_m, finish_selection, OptimizerConfig, SpikeInstance, SpikeSolution};
use crate::error::{Error, Result};

const MAX_GRID_POINTS: f64 = 5e7;

fn grid(config: &OptimizerConfig, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("grid step {step} must be positive")));
    }
    let span = config.m_max - config.m_min;
    if span / step > MAX_GRID_POINTS {
        return Err(Error::InvalidInput(format!("grid step {step} too fine for range {span}")));
    }
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let m = config.m_min + k as f64 * step;
        if m > config.m_max {
            break;
        }
        out.push(m);
        k += 1;
    }
    out.push(config.m_max);
    Ok(out)
}

fn search(
    instance: &SpikeInstance,
    config: &OptimizerConfig,
    points: impl IntoIterator<Item = f64>,
) -> SpikeSolution {
    let mut best: Option<(f64, f64)> = None;
    for m in points {
        let ev = evaluate_m(instance, m);
        if !ev.satisfies_loss_bound(config.epsilon) {
            continue;
        }
        let better = match best {
            None => true,
            Some((bm, bo)) => ev.objective > bo || (ev.objective == bo && m > bm),
        };
        if better {
            best = Some((m, ev.objective));
        }
    }
    finish_selection(instance, config, best)
}

/// Scans `[m_min, m_max]` at `step`, plus the bounds and every in-range breakpoint.
pub fn solve_grid_oracle(
    instance: &SpikeInstance,
    config: &OptimizerConfig,
    step: f64,
) -> Result<SpikeSolution> {
    config.validate()?;
    let mut points = grid(config, step)?;
    points.extend(instance.breakpoints_within(config.m_min, config.m_max));
    Ok(search(instance, config, points))
}

/// Scans `[m_min, m_max]` at `step` and the bounds only, never visiting breakpoints.
///
/// Exact whenever `step` is below half the smallest gap between breakpoints,
/// though the reported distance then lies strictly inside the optimal interval.
pub fn solve_grid_scan(
    instance: &SpikeInstance,
    config: &OptimizerConfig,
    step: f64,
) -> Result<SpikeSolution> {
    config.validate()?;
    Ok(search(instance, config, grid(config, step)?))
}

/// Number of distinct in-range breakpoints strictly below `m`.
///
/// Two distances with equal index clear the same intervals.
pub fn breakpoint_interval(instance: &SpikeInstance, config: &OptimizerConfig, m: f64) -> usize {
    let bps = instance.breakpoints_within(config.m_min, config.m_max);
    bps.partition_point(|&c| c < m)
}

#[cfg(test)]
mod tests {
    use super::super::solve_breakpoints;
    use super::*;
    use crate::market::Side;

    fn worked() -> SpikeInstance {
        SpikeInstance::new(
            Side::Demand,
            vec![10.0, 50.0, 30.0],
            vec![35.0, 20.0, 10.0],
            vec![40.0; 3],
        )
        .unwrap()
    }

    fn bounds(lo: f64, hi: f64) -> OptimizerConfig {
        OptimizerConfig {
            m_min: lo,
            m_max: hi,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn oracle_agrees_on_worked_example() {
        let cfg = bounds(0.0, 100.0);
        let o = solve_grid_oracle(&worked(), &cfg, 0.01).unwrap();
        assert_eq!((o.m_star, o.objective), (30.0, 25.0));
        let s = solve_grid_scan(&worked(), &cfg, 0.25).unwrap();
        assert_eq!(s.objective, 25.0);
        assert_eq!(
            breakpoint_interval(&worked(), &cfg, s.m_star),
            breakpoint_interval(&worked(), &cfg, 30.0)
        );
    }

    #[test]
    fn coarse_step_visits_bounds() {
        let cfg = bounds(0.0, 100.0);
        assert_eq!(grid(&cfg, 1000.0).unwrap(), [0.0, 100.0]);
        let o = solve_grid_oracle(&worked(), &cfg, 1000.0).unwrap();
        let b = solve_breakpoints(&worked(), &cfg).unwrap();
        assert_eq!(o.objective, b.objective);
    }

    #[test]
    fn single_interval_hand_case() {
        let inst = SpikeInstance::new(Side::Demand, vec![40.0], vec![50.0], vec![40.0]).unwrap();
        let o = solve_grid_oracle(&inst, &bounds(0.0, 5.0), 0.5).unwrap();
        assert_eq!(o.m_star, 0.0);
        assert_eq!(o.objective, 10.0);
        assert_eq!(o.cleared, [true]);
    }

    #[test]
    fn rejects_bad_step() {
        let cfg = bounds(0.0, 1.0);
        assert!(solve_grid_oracle(&worked(), &cfg, 0.0).is_err());
        assert!(solve_grid_oracle(&worked(), &cfg, -1.0).is_err());
        assert!(solve_grid_oracle(&worked(), &cfg, f64::NAN).is_err());
    }
}
