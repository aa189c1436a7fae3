//! Block-coordinate ascent on the weakest user's gain.

use crate::channel::{Block, ChannelRealization, Layout};
use crate::config::{Movable, SolverOptions, SystemConfig};
use crate::solver::qp::qp_solve_2d;
use crate::solver::subproblem::{build_subproblem, BlockContext};
use crate::surrogate::RESTORATION_TOLERANCE;

/// Consecutive passes with an infeasible sub-problem before giving up.
const MAX_FAILED_PASSES: usize = 2;

#[derive(Debug, Clone)]
pub struct AlternatingOutcome {
    pub layout: Layout,
    /// `|H~ h~_k|^2` before the first pass and after every pass.
    pub objectives: Vec<f64>,
    pub passes: usize,
    /// Sub-problems whose gain cuts needed relaxing.
    pub restorations: usize,
    /// Stopped on repeated sub-problem infeasibility.
    pub failed: bool,
    /// Layout at the end of every pass.
    pub pass_layouts: Vec<Layout>,
}

/// Visit order: the user's own antenna, relay receive, relay transmit, BS.
pub fn block_order(config: &SystemConfig, k: usize, movable: Movable) -> Vec<Block> {
    let mut order = Vec::new();
    if movable.users {
        order.push(Block::User(k));
    }
    if movable.relay {
        order.extend((0..config.relay_antennas).map(Block::RelayRx));
        order.extend((0..config.relay_antennas).map(Block::RelayTx));
    }
    if movable.bs {
        order.extend((0..config.bs_antennas).map(Block::Bs));
    }
    order
}

fn acceptable(current: &BlockContext, candidate: &BlockContext, k: usize, alpha0: f64) -> bool {
    let old = current.objective(k);
    if candidate.objective(k) < old - 1e-12 * old {
        return false;
    }
    let others_ok = candidate
        .gains()
        .iter()
        .zip(current.gains())
        .enumerate()
        .filter(|(i, _)| *i != k)
        .all(|(_, (new, old))| *new >= alpha0.min(*old) - RESTORATION_TOLERANCE);
    others_ok && candidate.layout().is_feasible(candidate.config, 1e-9)
}

/// Some other user is now at or below user `k`.
fn overtaken(gains: &[f64], k: usize) -> bool {
    gains.iter().enumerate().any(|(i, g)| i != k && *g <= gains[k])
}

/// Raises `|H~ h~_k|^2` by cycling through the movable antennas, keeping every
/// other user's gain above `alpha0` and all spacing constraints satisfied.
/// With `options.retarget` the run also ends once `k` stops being the weakest.
pub fn alternating_optimize(
    realization: &ChannelRealization,
    layout: &Layout,
    config: &SystemConfig,
    options: &SolverOptions,
    k: usize,
    alpha0: f64,
) -> AlternatingOutcome {
    let order = block_order(config, k, options.movable);
    let mut ctx = BlockContext::new(realization, config, layout.clone());
    let mut objectives = vec![ctx.objective(k)];
    let mut restorations = 0;
    let mut failed_passes = 0;
    let mut passes = 0;
    let mut failed = false;
    let mut pass_layouts = Vec::new();

    while passes < options.max_passes && !order.is_empty() {
        passes += 1;
        let mut infeasible = false;
        let mut overtook = false;
        for &block in &order {
            let sub = build_subproblem(&ctx, k, block, alpha0);
            restorations += usize::from(sub.restored);
            let sol = qp_solve_2d(&sub.spec);
            if sol.restored {
                infeasible = true;
                continue;
            }
            if sol.point == ctx.layout().position(block) {
                continue;
            }
            let candidate = ctx.moved(block, sol.point);
            if acceptable(&ctx, &candidate, k, alpha0) {
                ctx = candidate;
                if options.retarget && overtaken(ctx.gains(), k) {
                    overtook = true;
                    break;
                }
            }
        }
        let prev = *objectives.last().unwrap();
        let now = ctx.objective(k);
        objectives.push(now);
        pass_layouts.push(ctx.layout().clone());
        if overtook {
            break;
        }

        failed_passes = if infeasible { failed_passes + 1 } else { 0 };
        if failed_passes >= MAX_FAILED_PASSES {
            failed = true;
            break;
        }
        if (now - prev).abs() <= options.inner_tolerance * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    AlternatingOutcome {
        layout: ctx.into_layout(),
        objectives,
        passes,
        restorations,
        failed,
        pass_layouts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_realization;
    use crate::config::RngStream;
    use crate::metrics;

    #[test]
    fn order_respects_movable_groups() {
        let cfg = SystemConfig::default();
        assert_eq!(block_order(&cfg, 2, Movable::ALL).len(), 1 + 4 + 4 + 5);
        let relay = block_order(&cfg, 2, Movable::RELAY_ONLY);
        assert_eq!(relay.len(), 8);
        assert!(relay.iter().all(|b| matches!(b, Block::RelayRx(_) | Block::RelayTx(_))));
        assert_eq!(block_order(&cfg, 0, Movable::ALL)[0], Block::User(0));
    }

    #[test]
    fn objective_never_decreases_and_constraints_hold() {
        let cfg = SystemConfig::default();
        let options = SolverOptions::default();
        for seed in 0..4 {
            let real = sample_realization(&cfg, RngStream::new(seed, 3));
            let layout = Layout::initial(&cfg);
            let start = BlockContext::new(&real, &cfg, layout.clone());
            let k = metrics::argmin(start.gains());
            let alpha0 = start.gains()[k];
            let out = alternating_optimize(&real, &layout, &cfg, &options, k, alpha0);
            for w in out.objectives.windows(2) {
                assert!(w[1] >= w[0] - 1e-12 * w[0]);
            }
            assert!(out.passes <= options.max_passes);
            assert!(!out.failed);
            assert!(out.layout.is_feasible(&cfg, 1e-9));
            let end = BlockContext::new(&real, &cfg, out.layout.clone());
            for i in 0..cfg.users {
                if i != k {
                    assert!(end.gains()[i] >= alpha0 - 1e-6);
                }
            }
        }
    }

    #[test]
    fn frozen_groups_stay_put() {
        let cfg = SystemConfig::default();
        let real = sample_realization(&cfg, RngStream::new(9, 0));
        let layout = Layout::initial(&cfg);
        let options = SolverOptions {
            movable: Movable::RELAY_ONLY,
            ..SolverOptions::default()
        };
        let out = alternating_optimize(&real, &layout, &cfg, &options, 1, 0.0);
        assert_eq!(out.layout.users, layout.users);
        assert_eq!(out.layout.bs, layout.bs);
    }

    #[test]
    fn nothing_movable_is_a_no_op() {
        let cfg = SystemConfig::default();
        let real = sample_realization(&cfg, RngStream::new(9, 1));
        let layout = Layout::initial(&cfg);
        let options = SolverOptions {
            movable: Movable {
                users: false,
                relay: false,
                bs: false,
            },
            ..SolverOptions::default()
        };
        let out = alternating_optimize(&real, &layout, &cfg, &options, 0, 0.0);
        assert_eq!(out.layout, layout);
        assert_eq!(out.passes, 0);
    }

    #[test]
    fn zero_pass_budget_returns_input() {
        let cfg = SystemConfig::default();
        let real = sample_realization(&cfg, RngStream::new(9, 2));
        let layout = Layout::initial(&cfg);
        let options = SolverOptions {
            max_passes: 0,
            ..SolverOptions::default()
        };
        let out = alternating_optimize(&real, &layout, &cfg, &options, 0, 0.0);
        assert_eq!(out.layout, layout);
        assert_eq!(out.objectives.len(), 1);
    }

    #[test]
    fn single_user_ascends_every_pass() {
        let cfg = SystemConfig {
            users: 1,
            max_power: vec![1.0],
            ..SystemConfig::default()
        };
        let real = sample_realization(&cfg, RngStream::new(9, 3));
        let out = alternating_optimize(&real, &Layout::initial(&cfg), &cfg, &SolverOptions::default(), 0, 0.0);
        assert!(out.objectives.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.objectives.last().unwrap() > &out.objectives[0]);
    }

    #[test]
    fn small_instances_converge_before_pass_cap() {
        let cfg = SystemConfig {
            users: 2,
            relay_antennas: 2,
            bs_antennas: 2,
            paths: 2,
            max_power: vec![1.0; 2],
            ..SystemConfig::default()
        };
        let options = SolverOptions {
            max_passes: 500,
            retarget: false,
            ..SolverOptions::default()
        };
        let mut converged = 0;
        for t in 0..10 {
            let real = sample_realization(&cfg, RngStream::new(31, t));
            let ctx = BlockContext::new(&real, &cfg, Layout::initial(&cfg));
            let k = metrics::argmin(ctx.gains());
            let out = alternating_optimize(&real, &Layout::initial(&cfg), &cfg, &options, k, ctx.gains()[k]);
            if out.passes < options.max_passes {
                converged += 1;
                let n = out.objectives.len();
                let last = out.objectives[n - 1];
                assert!((last - out.objectives[n - 2]).abs() <= 1e-6 * last);
            }
        }
        assert!(converged >= 5, "only {converged} of 10 runs converged");
    }

    #[test]
    fn retarget_stops_once_overtaken() {
        let cfg = SystemConfig::default();
        for seed in 0..5 {
            let real = sample_realization(&cfg, RngStream::new(40, seed));
            let layout = Layout::initial(&cfg);
            let start = BlockContext::new(&real, &cfg, layout.clone());
            let k = metrics::argmin(start.gains());
            let options = SolverOptions::default();
            let floor = options.gain_floor.level(start.gains(), k);
            let out = alternating_optimize(&real, &layout, &cfg, &options, k, floor);
            let end = BlockContext::new(&real, &cfg, out.layout);
            let g = end.gains();
            if out.passes < options.max_passes && !overtaken(g, k) {
                let n = out.objectives.len();
                assert!((out.objectives[n - 1] - out.objectives[n - 2]).abs() <= 1e-6 * out.objectives[n - 1]);
            }
            for i in (0..cfg.users).filter(|&i| i != k) {
                assert!(g[i] >= floor - 1e-6, "user {i} fell below the runner-up floor");
            }
        }
    }

    #[test]
    fn current_min_floor_lets_others_trade_down() {
        let cfg = SystemConfig {
            users: 2,
            relay_antennas: 2,
            bs_antennas: 2,
            paths: 2,
            max_power: vec![1.0; 2],
            ..SystemConfig::default()
        };
        let real = sample_realization(&cfg, RngStream::new(23, 15));
        let layout = Layout::initial(&cfg);
        let start = BlockContext::new(&real, &cfg, layout.clone());
        let k = metrics::argmin(start.gains());
        let options = SolverOptions {
            gain_floor: crate::config::GainFloor::CurrentMin,
            retarget: false,
            ..SolverOptions::default()
        };
        let out = alternating_optimize(&real, &layout, &cfg, &options, k, start.gains()[k]);
        let end = BlockContext::new(&real, &cfg, out.layout);
        let other = 1 - k;
        assert!(end.gains()[other] < start.gains()[other]);
        assert!(end.gains()[other] >= start.gains()[k] - 1e-6);
    }
}
