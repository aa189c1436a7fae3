//! Quick oracle checks runnable from the command line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{frv, sample_path_response, sample_realization, Block, Layout};
use crate::config::{RngStream, SolverOptions, SystemConfig};
use crate::metrics::{argmin, RateReport};
use crate::solver::{build_subproblem, max_min_trajectory, qp_solve_2d, BlockContext};
use crate::surrogate::Upsilon;
use crate::Position;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Empirical variances of LoS and NLoS path entries.
pub fn channel_statistics(draws: usize, seed: u64) -> CheckOutcome {
    let mut rng = RngStream::new(seed, 0).rng();
    let (mut los, mut nlos) = (0.0, [0.0; 3]);
    for _ in 0..draws {
        let s = sample_path_response(&mut rng, 4, 1.0);
        los += s[(0, 0)].norm_sqr();
        for (l, acc) in nlos.iter_mut().enumerate() {
            *acc += s[(l + 1, l + 1)].norm_sqr();
        }
    }
    let n = draws as f64;
    let los = los / n;
    let nlos = nlos.map(|v| v / n);
    let ok = (los / 0.5 - 1.0).abs() < 0.02 && nlos.iter().all(|v| (v * 6.0 - 1.0).abs() < 0.03);
    outcome("channel statistics", ok, format!("LoS {los:.4}, NLoS {nlos:.4?}"))
}

/// Rate, SINR and gain orderings agree on random gain vectors.
pub fn gain_ordering(instances: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let k = rng.random_range(1..=4);
        let gains: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..20.0)).collect();
        let r = RateReport::from_gains(gains.clone(), rng.random_range(1e-3..5.0));
        let pairs_ok = (0..k).all(|m| (0..k).all(|n| gains[m].partial_cmp(&gains[n]) == r.rates[m].partial_cmp(&r.rates[n])));
        if !pairs_ok || r.min_index != argmin(&gains) {
            bad += 1;
        }
    }
    outcome("gain ordering", bad == 0, format!("{bad} of {instances} instances disagree"))
}

/// Tangent surrogate touches the true objective at the expansion point and
/// stays below it elsewhere.
pub fn surrogate_certification(instances: usize, samples: usize, seed: u64) -> CheckOutcome {
    let cfg = SystemConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_gap: f64 = 0.0;
    let mut violations = 0;
    for i in 0..instances {
        let real = sample_realization(&cfg, RngStream::new(seed, i as u64));
        let ctx = BlockContext::new(&real, &cfg, Layout::initial(&cfg));
        let k = argmin(ctx.gains());
        let block = Block::RelayRx(rng.random_range(0..cfg.relay_antennas));
        let x0 = ctx.layout().position(block);
        let angles = ctx.angles(k, block);
        let form = ctx.block_form(k, block).expect("relay block couples every user");
        let f0 = frv(&x0, angles);
        let offset = form.constant - f0.dotc(&(&form.quad * &f0)).re;
        let sub = build_subproblem(&ctx, k, block, ctx.gains()[k]);
        let s = &sub.spec.surrogate;
        let truth0 = ctx.objective(k);
        let upsilon = Upsilon::new(form.tangent_coeffs(&f0), angles);
        worst_gap = worst_gap.max((upsilon.value(&x0) + offset - truth0).abs() / truth0.max(1.0));
        for _ in 0..samples {
            let x = Position::new(rng.random_range(0.0..cfg.region_size), rng.random_range(0.0..cfg.region_size));
            let truth = form.value(&frv(&x, angles));
            if s.value(&x) + offset > truth + 1e-9 * truth.max(1.0) {
                violations += 1;
            }
        }
    }
    let ok = worst_gap < 1e-12 && violations == 0;
    outcome(
        "surrogate certification",
        ok,
        format!("touch gap {worst_gap:.2e}, {violations} bound violations"),
    )
}

/// QP solutions against a coarse grid search.
pub fn qp_oracle(instances: usize, steps: usize, seed: u64) -> CheckOutcome {
    let cfg = SystemConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = f64::INFINITY;
    for i in 0..instances {
        let real = sample_realization(&cfg, RngStream::new(seed ^ 0x9e37, i as u64));
        let ctx = BlockContext::new(&real, &cfg, Layout::initial(&cfg));
        let k = argmin(ctx.gains());
        let block = match rng.random_range(0..3) {
            0 => Block::RelayRx(rng.random_range(0..cfg.relay_antennas)),
            1 => Block::RelayTx(rng.random_range(0..cfg.relay_antennas)),
            _ => Block::Bs(rng.random_range(0..cfg.bs_antennas)),
        };
        let spec = build_subproblem(&ctx, k, block, ctx.gains()[k]).spec;
        let sol = qp_solve_2d(&spec);
        let h = spec.region_size / steps as f64;
        let mut best = f64::NEG_INFINITY;
        for a in 0..=steps {
            for b in 0..=steps {
                let x = Position::new(a as f64 * h, b as f64 * h);
                if spec.is_feasible(&x, 0.0) {
                    best = best.max(spec.surrogate.value(&x));
                }
            }
        }
        worst = worst.min(sol.objective - best);
    }
    outcome("qp oracle", worst >= -1e-4, format!("worst margin over grid {worst:.3e}"))
}

/// Outer minimum gain never decreases and every iterate is feasible.
pub fn sca_monotonicity(instances: usize, seed: u64) -> CheckOutcome {
    let cfg = SystemConfig::default();
    let mut bad = 0;
    for i in 0..instances {
        let real = sample_realization(&cfg, RngStream::new(seed, 1000 + i as u64));
        let traj = max_min_trajectory(&real, &Layout::initial(&cfg), &cfg, &SolverOptions::default());
        let alphas = &traj.trace.outer_alphas;
        let monotone = alphas.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        let feasible = traj.iterates.iter().all(|l| l.is_feasible(&cfg, 1e-9));
        if !monotone || !feasible || alphas.last() < alphas.first() {
            bad += 1;
        }
    }
    outcome("sca monotonicity", bad == 0, format!("{bad} of {instances} runs misbehave"))
}

/// Every check at a size that finishes in a few seconds.
pub fn run_all(seed: u64) -> Vec<CheckOutcome> {
    vec![
        channel_statistics(100_000, seed),
        gain_ordering(1000, seed),
        surrogate_certification(20, 200, seed),
        qp_oracle(10, 200, seed),
        sca_monotonicity(3, seed),
    ]
}
