//! System parameters, solver settings and seeded random streams.
//!
//! Config files are flat TOML: one `key = value` per line, `#` comments, no
//! tables. Every key is optional and falls back to [`SystemConfig::default`]
//! or [`SolverOptions::default`]. Recognized keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `users` | number of single-antenna users K |
//! | `relay_antennas` | fluid antennas per relay side M |
//! | `bs_antennas` | base station fluid antennas N |
//! | `paths` | propagation paths per link L (>= 2) |
//! | `region_size` | side A of every square region, in wavelengths |
//! | `min_distance` | minimum antenna spacing d0, in wavelengths |
//! | `relay_gain` | amplify-and-forward gain F |
//! | `noise_relay`, `noise_bs` | noise powers at relay and base station |
//! | `snr_db` | alternative to the two noise keys, see [`snr_to_noise`] |
//! | `max_power` | per-user maximum power: a number or a K-element array |
//! | `rician_factor` | LoS to NLoS power ratio beta |
//! | `seed` | Monte Carlo seed |
//! | `epsilon`, `inner_tolerance`, `max_passes`, `max_outer` | solver knobs |
//! | `gain_floor` | `"runner_up"` (default) or `"current_min"`, see [`GainFloor`] |
//! | `retarget` | end an inner run once its user is no longer the weakest |

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Static scalars describing one FAR-assisted uplink deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub users: usize,
    pub relay_antennas: usize,
    pub bs_antennas: usize,
    pub paths: usize,
    pub region_size: f64,
    pub min_distance: f64,
    pub relay_gain: f64,
    pub noise_relay: f64,
    pub noise_bs: f64,
    pub max_power: Vec<f64>,
    pub rician_factor: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let (noise_relay, noise_bs) = snr_to_noise(5.0, 1.0, 1.0);
        Self {
            users: 4,
            relay_antennas: 4,
            bs_antennas: 5,
            paths: 4,
            region_size: 4.0,
            min_distance: 0.5,
            relay_gain: 1.0,
            noise_relay,
            noise_bs,
            max_power: vec![1.0; 4],
            rician_factor: 1.0,
        }
    }
}

impl SystemConfig {
    /// Aggregate noise `F * sigma_U^2 + sigma_B^2` seen after equal-gain combining.
    pub fn effective_noise(&self) -> f64 {
        self.relay_gain * self.noise_relay + self.noise_bs
    }

    /// Average SNR in dB implied by the first user's power and the noise split.
    pub fn snr_db(&self) -> f64 {
        let p = self.max_power[0];
        10.0 * (p * p / self.effective_noise()).log10()
    }

    /// Replaces both noise powers so that the average SNR equals `snr_db`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        let (u, b) = snr_to_noise(snr_db, self.max_power[0], self.relay_gain);
        self.noise_relay = u;
        self.noise_bs = b;
        self
    }

    pub fn with_region_size(mut self, region_size: f64) -> Self {
        self.region_size = region_size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::invalid("users", "need at least one user"));
        }
        if self.relay_antennas == 0 {
            return Err(Error::invalid("relay_antennas", "need at least one antenna"));
        }
        if self.bs_antennas == 0 {
            return Err(Error::invalid("bs_antennas", "need at least one antenna"));
        }
        if self.paths < 2 {
            return Err(Error::invalid(
                "paths",
                "need at least 2 paths (one LoS plus NLoS)",
            ));
        }
        if !(self.min_distance > 0.0) || !self.min_distance.is_finite() {
            return Err(Error::invalid("min_distance", "d0 must be positive"));
        }
        if !(self.region_size > 0.0) || !self.region_size.is_finite() {
            return Err(Error::invalid("region_size", "region size must be positive"));
        }
        let fits = |count: usize| {
            let side = (count as f64).sqrt().ceil();
            self.region_size >= self.min_distance * (side - 1.0)
        };
        if !fits(self.relay_antennas) {
            return Err(Error::invalid(
                "region_size",
                "region cannot host M antennas at spacing d0",
            ));
        }
        if !fits(self.bs_antennas) {
            return Err(Error::invalid(
                "region_size",
                "region cannot host N antennas at spacing d0",
            ));
        }
        if !(self.relay_gain > 0.0) || !self.relay_gain.is_finite() {
            return Err(Error::invalid("relay_gain", "relay gain must be positive"));
        }
        if !(self.noise_relay > 0.0) || !self.noise_relay.is_finite() {
            return Err(Error::invalid("noise_relay", "noise power must be positive"));
        }
        if !(self.noise_bs > 0.0) || !self.noise_bs.is_finite() {
            return Err(Error::invalid("noise_bs", "noise power must be positive"));
        }
        if self.max_power.len() != self.users {
            return Err(Error::invalid(
                "max_power",
                format!(
                    "expected {} entries, found {}",
                    self.users,
                    self.max_power.len()
                ),
            ));
        }
        if self.max_power.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("max_power", "powers must be positive"));
        }
        if !(self.rician_factor >= 0.0) || !self.rician_factor.is_finite() {
            return Err(Error::invalid(
                "rician_factor",
                "rician factor must be non-negative",
            ));
        }
        Ok(())
    }

    /// Flat TOML rendering; [`parse_config`] on the result yields `self` back.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }
}

/// Knobs of the alternating and outer loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Outer loop stops once the minimum gain improves by less than this.
    pub epsilon: f64,
    /// Relative objective change that ends an alternating run.
    pub inner_tolerance: f64,
    /// Maximum passes over all blocks per alternating run.
    pub max_passes: usize,
    /// Cap on outer iterations.
    pub max_outer: usize,
    pub movable: Movable,
    pub gain_floor: GainFloor,
    /// End an inner run as soon as another user's gain drops to or below
    /// the lifted user's, handing control back to the outer loop.
    pub retarget: bool,
}

/// Lower bound imposed on the other users while the weakest one is lifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainFloor {
    /// The current minimum gain. Other users may be traded down to it, which
    /// often leaves the minimum where it was.
    CurrentMin,
    /// The smallest gain among the other users, so none of them can end up
    /// below its current rank.
    RunnerUp,
}

impl GainFloor {
    pub fn as_str(self) -> &'static str {
        match self {
            GainFloor::CurrentMin => "current_min",
            GainFloor::RunnerUp => "runner_up",
        }
    }

    /// Floor for users other than `k`.
    pub fn level(self, gains: &[f64], k: usize) -> f64 {
        let current = gains[k];
        match self {
            GainFloor::CurrentMin => current,
            GainFloor::RunnerUp => gains
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, g)| *g)
                .reduce(f64::min)
                .unwrap_or(current),
        }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            inner_tolerance: 1e-6,
            max_passes: 30,
            max_outer: 50,
            movable: Movable::ALL,
            gain_floor: GainFloor::RunnerUp,
            retarget: true,
        }
    }
}

/// Which antenna groups an optimization run may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Movable {
    pub users: bool,
    pub relay: bool,
    pub bs: bool,
}

impl Movable {
    pub const ALL: Movable = Movable {
        users: true,
        relay: true,
        bs: true,
    };
    pub const RELAY_ONLY: Movable = Movable {
        users: false,
        relay: true,
        bs: false,
    };
}

/// Everything a config file can carry.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub solver: SolverOptions,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    users: Option<usize>,
    relay_antennas: Option<usize>,
    bs_antennas: Option<usize>,
    paths: Option<usize>,
    region_size: Option<f64>,
    min_distance: Option<f64>,
    relay_gain: Option<f64>,
    noise_relay: Option<f64>,
    noise_bs: Option<f64>,
    snr_db: Option<f64>,
    max_power: Option<PowerSpec>,
    rician_factor: Option<f64>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    inner_tolerance: Option<f64>,
    max_passes: Option<usize>,
    max_outer: Option<usize>,
    gain_floor: Option<GainFloor>,
    retarget: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PowerSpec {
    Shared(f64),
    PerUser(Vec<f64>),
}

/// Parses and validates config text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text)?;
    let defaults = SystemConfig::default();
    let users = raw.users.unwrap_or(defaults.users);
    let max_power = match raw.max_power {
        Some(PowerSpec::Shared(p)) => vec![p; users],
        Some(PowerSpec::PerUser(v)) => v,
        None => vec![1.0; users],
    };
    let mut system = SystemConfig {
        users,
        relay_antennas: raw.relay_antennas.unwrap_or(defaults.relay_antennas),
        bs_antennas: raw.bs_antennas.unwrap_or(defaults.bs_antennas),
        paths: raw.paths.unwrap_or(defaults.paths),
        region_size: raw.region_size.unwrap_or(defaults.region_size),
        min_distance: raw.min_distance.unwrap_or(defaults.min_distance),
        relay_gain: raw.relay_gain.unwrap_or(defaults.relay_gain),
        noise_relay: raw.noise_relay.unwrap_or(defaults.noise_relay),
        noise_bs: raw.noise_bs.unwrap_or(defaults.noise_bs),
        max_power,
        rician_factor: raw.rician_factor.unwrap_or(defaults.rician_factor),
    };
    if let Some(snr) = raw.snr_db {
        if raw.noise_relay.is_some() || raw.noise_bs.is_some() {
            return Err(Error::invalid(
                "snr_db",
                "give either snr_db or explicit noise powers, not both",
            ));
        }
        if !snr.is_finite() {
            return Err(Error::invalid("snr_db", "must be finite"));
        }
        if system.max_power.is_empty() {
            return Err(Error::invalid("max_power", "no users"));
        }
        system = system.with_snr_db(snr);
    }
    system.validate()?;

    let d = SolverOptions::default();
    let solver = SolverOptions {
        epsilon: raw.epsilon.unwrap_or(d.epsilon),
        inner_tolerance: raw.inner_tolerance.unwrap_or(d.inner_tolerance),
        max_passes: raw.max_passes.unwrap_or(d.max_passes),
        max_outer: raw.max_outer.unwrap_or(d.max_outer),
        movable: Movable::ALL,
        gain_floor: raw.gain_floor.unwrap_or(d.gain_floor),
        retarget: raw.retarget.unwrap_or(d.retarget),
    };
    if !(solver.epsilon >= 0.0) {
        return Err(Error::invalid("epsilon", "must be non-negative"));
    }
    if !(solver.inner_tolerance >= 0.0) {
        return Err(Error::invalid("inner_tolerance", "must be non-negative"));
    }
    Ok(RunConfig {
        system,
        solver,
        seed: raw.seed,
    })
}

/// Reads a config file from disk; see the module docs for the format.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Splits the noise budget implied by `snr_db` equally between relay and base
/// station: returns `(sigma_U^2, sigma_B^2)` with
/// `p_max^2 / (F sigma_U^2 + sigma_B^2) = 10^(snr_db / 10)`.
pub fn snr_to_noise(snr_db: f64, p_max: f64, relay_gain: f64) -> (f64, f64) {
    let total = p_max * p_max / 10f64.powf(snr_db / 10.0);
    let each = total / (relay_gain + 1.0);
    (each, each)
}

/// One independent random stream per Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
