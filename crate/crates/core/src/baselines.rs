//! The three compared layout schemes.

use std::fmt;
use std::str::FromStr;

use crate::channel::{ChannelRealization, Layout};
use crate::config::{Movable, SolverOptions, SystemConfig};
use crate::metrics::RateReport;
use crate::solver::{max_min_optimize, BlockContext, SolveTrace};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchemeId {
    /// Every antenna stays at its initial position.
    Fixed,
    /// Only relay antennas move.
    UFar,
    /// Users, relay and BS antennas all move.
    Proposed,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::Fixed, SchemeId::UFar, SchemeId::Proposed];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Fixed => "Fixed",
            SchemeId::UFar => "UFar",
            SchemeId::Proposed => "Proposed",
        }
    }

    pub fn movable(self) -> Option<Movable> {
        match self {
            SchemeId::Fixed => None,
            SchemeId::UFar => Some(Movable::RELAY_ONLY),
            SchemeId::Proposed => Some(Movable::ALL),
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("scheme", format!("unknown scheme `{s}`")))
    }
}

/// Outcome of one scheme on one realization.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub layout: Layout,
    pub report: RateReport,
    pub trace: SolveTrace,
}

fn evaluate(realization: &ChannelRealization, config: &SystemConfig, layout: Layout, trace: SolveTrace) -> SchemeRun {
    let ctx = BlockContext::new(realization, config, layout);
    let report = RateReport::from_gains(ctx.gains().to_vec(), config.effective_noise());
    SchemeRun {
        layout: ctx.into_layout(),
        report,
        trace,
    }
}

fn optimize(
    realization: &ChannelRealization,
    config: &SystemConfig,
    options: &SolverOptions,
    movable: Movable,
) -> SchemeRun {
    let options = SolverOptions {
        movable,
        ..options.clone()
    };
    let (layout, trace) = max_min_optimize(realization, &Layout::initial(config), config, &options);
    evaluate(realization, config, layout, trace)
}

/// Initial layout, untouched.
pub fn run_fixed(realization: &ChannelRealization, config: &SystemConfig) -> SchemeRun {
    evaluate(realization, config, Layout::initial(config), SolveTrace::default())
}

/// Relay-only movement; users and BS stay at their initial positions.
pub fn run_ufar(realization: &ChannelRealization, config: &SystemConfig, options: &SolverOptions) -> SchemeRun {
    optimize(realization, config, options, Movable::RELAY_ONLY)
}

/// Joint movement of every antenna.
pub fn run_proposed(realization: &ChannelRealization, config: &SystemConfig, options: &SolverOptions) -> SchemeRun {
    optimize(realization, config, options, Movable::ALL)
}

pub fn run_scheme(
    scheme: SchemeId,
    realization: &ChannelRealization,
    config: &SystemConfig,
    options: &SolverOptions,
) -> SchemeRun {
    match scheme {
        SchemeId::Fixed => run_fixed(realization, config),
        SchemeId::UFar => run_ufar(realization, config, options),
        SchemeId::Proposed => run_proposed(realization, config, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_realization;
    use crate::config::RngStream;

    #[test]
    fn names_round_trip() {
        for id in SchemeId::ALL {
            assert_eq!(id.to_string().parse::<SchemeId>().unwrap(), id);
        }
        assert!("nope".parse::<SchemeId>().is_err());
    }

    #[test]
    fn fixed_is_deterministic_and_unoptimized() {
        let cfg = SystemConfig::default();
        let real = sample_realization(&cfg, RngStream::new(12, 1));
        let a = run_fixed(&real, &cfg);
        assert_eq!(a.report, run_fixed(&real, &cfg).report);
        assert_eq!(a.layout, Layout::initial(&cfg));
        assert_eq!(a.trace.outer_iterations, 0);
    }

    #[test]
    fn zero_relay_gain_means_zero_rate() {
        let cfg = SystemConfig {
            relay_gain: 0.0,
            ..SystemConfig::default()
        };
        let real = sample_realization(&cfg, RngStream::new(12, 2));
        for id in SchemeId::ALL {
            assert_eq!(run_scheme(id, &real, &cfg, &SolverOptions::default()).report.min_rate, 0.0);
        }
    }

    #[test]
    fn ufar_moves_only_relay_antennas() {
        let cfg = SystemConfig::default();
        let real = sample_realization(&cfg, RngStream::new(12, 0));
        let run = run_ufar(&real, &cfg, &SolverOptions::default());
        let init = Layout::initial(&cfg);
        assert_eq!(run.layout.users, init.users);
        assert_eq!(run.layout.bs, init.bs);
        for w in run.trace.outer_alphas.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0]);
        }
    }

    #[test]
    fn optimized_schemes_never_lose_to_fixed() {
        let cfg = SystemConfig::default();
        let options = SolverOptions::default();
        for trial in 0..5 {
            let real = sample_realization(&cfg, RngStream::new(12, trial));
            let fixed = run_fixed(&real, &cfg).report.min_rate;
            assert!(run_ufar(&real, &cfg, &options).report.min_rate >= fixed - 1e-9);
            assert!(run_proposed(&real, &cfg, &options).report.min_rate >= fixed);
        }
    }
}
