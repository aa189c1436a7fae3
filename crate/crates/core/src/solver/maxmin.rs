//! Outer max-min loop: repeatedly lift the weakest user.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::channel::{ChannelRealization, Layout};
use crate::config::{SolverOptions, SystemConfig};
use crate::metrics::{self, RateReport};
use crate::solver::alternating::alternating_optimize;
use crate::solver::subproblem::BlockContext;

/// Diagnostics of one max-min run.
#[derive(Debug, Clone, Default)]
pub struct SolveTrace {
    /// Minimum gain of every outer iterate, starting with the initial layout.
    pub outer_alphas: Vec<f64>,
    /// User lifted at each outer iteration.
    pub weakest_users: Vec<usize>,
    /// Inner objective history of each outer iteration.
    pub inner_objectives: Vec<Vec<f64>>,
    pub outer_iterations: usize,
    pub inner_passes: usize,
    pub restorations: usize,
    pub restoration_failed: bool,
    pub wall_time: Duration,
}

impl SolveTrace {
    /// `outer_iter,weakest_user,alpha,pass,inner_objective`, one row per pass.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("outer_iter,weakest_user,alpha,pass,inner_objective\n");
        for (t, (k, objs)) in self.weakest_users.iter().zip(&self.inner_objectives).enumerate() {
            for (pass, obj) in objs.iter().enumerate() {
                let _ = writeln!(out, "{},{},{:e},{},{:e}", t + 1, k, self.outer_alphas[t], pass, obj);
            }
        }
        out
    }
}

/// Every outer iterate (initial layout first) plus the trace that produced them.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub iterates: Vec<Layout>,
    /// Layout after every inner pass of every outer iteration.
    pub pass_layouts: Vec<Layout>,
    pub trace: SolveTrace,
}

/// Runs the outer loop and keeps every iterate.
///
/// The path depends on gains only, never on the noise level, so one
/// trajectory serves every SNR point of a sweep.
pub fn max_min_trajectory(
    realization: &ChannelRealization,
    layout: &Layout,
    config: &SystemConfig,
    options: &SolverOptions,
) -> Trajectory {
    let start = Instant::now();
    let mut trace = SolveTrace::default();
    let mut iterates = vec![layout.clone()];
    let mut pass_layouts = Vec::new();
    let ctx = BlockContext::new(realization, config, layout.clone());
    let mut gains = ctx.gains().to_vec();
    let mut alpha = gains.iter().copied().fold(f64::INFINITY, f64::min);
    trace.outer_alphas.push(alpha);

    // The loop starts from alpha = 0, so the first check compares against it.
    let mut improvement = alpha;
    while improvement >= options.epsilon && trace.outer_iterations < options.max_outer {
        let k = metrics::argmin(&gains);
        let current = iterates.last().unwrap();
        let floor = options.gain_floor.level(&gains, k);
        let out = alternating_optimize(realization, current, config, options, k, floor);
        trace.outer_iterations += 1;
        trace.weakest_users.push(k);
        trace.inner_objectives.push(out.objectives);
        trace.inner_passes += out.passes;
        trace.restorations += out.restorations;
        pass_layouts.extend(out.pass_layouts);

        gains = BlockContext::new(realization, config, out.layout.clone()).gains().to_vec();
        let next = gains.iter().copied().fold(f64::INFINITY, f64::min);
        trace.outer_alphas.push(next);
        iterates.push(out.layout);
        improvement = next - alpha;
        alpha = next;
        if out.failed {
            trace.restoration_failed = true;
            break;
        }
    }
    trace.wall_time = start.elapsed();
    Trajectory {
        iterates,
        pass_layouts,
        trace,
    }
}

/// Iterate with the largest minimum rate at the configured noise level;
/// the earliest wins ties.
pub fn select_best(
    realization: &ChannelRealization,
    config: &SystemConfig,
    iterates: &[Layout],
) -> (usize, RateReport) {
    let sigma2 = config.effective_noise();
    let mut best: Option<(usize, RateReport)> = None;
    for (i, layout) in iterates.iter().enumerate() {
        let ctx = BlockContext::new(realization, config, layout.clone());
        let report = RateReport::from_gains(ctx.gains().to_vec(), sigma2);
        if best.as_ref().is_none_or(|(_, b)| report.min_rate > b.min_rate) {
            best = Some((i, report));
        }
    }
    best.expect("trajectory always holds the initial layout")
}

/// Max-min layout optimization from `layout`.
pub fn max_min_optimize(
    realization: &ChannelRealization,
    layout: &Layout,
    config: &SystemConfig,
    options: &SolverOptions,
) -> (Layout, SolveTrace) {
    let Trajectory { mut iterates, trace, .. } = max_min_trajectory(realization, layout, config, options);
    let (best, _) = select_best(realization, config, &iterates);
    (iterates.swap_remove(best), trace)
}
