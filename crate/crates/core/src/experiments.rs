//! Seeded Monte Carlo sweeps over SNR or region size, CSV emission and
//! per-point summaries.
//!
//! Trial `t` at every grid point uses the realization drawn from stream `t`,
//! so all schemes and all grid points of a sweep see the same channels.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{run_scheme, SchemeId};
use crate::channel::{sample_realization, ChannelRealization, Layout};
use crate::config::{RngStream, SolverOptions, SystemConfig};
use crate::solver::{max_min_trajectory, select_best};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "sweep_value,scheme,trial,min_rate_bpshz,outer_iters,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Grid values are SNRs in dB.
    Snr,
    /// Grid values are region sizes in wavelengths.
    Region,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Snr => "snr",
            SweepKind::Region => "region",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::Snr => vec![-5.0, 0.0, 5.0, 10.0, 15.0],
            SweepKind::Region => vec![1.0, 2.0, 3.0, 4.0, 5.0],
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(SweepKind::Snr),
            "region" => Ok(SweepKind::Region),
            other => Err(Error::InvalidSweep(format!("unknown sweep kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub trials: usize,
    /// Config every grid point is derived from.
    pub base: SystemConfig,
    pub options: SolverOptions,
    pub seed: u64,
    /// Thread count; 0 lets rayon decide.
    pub workers: usize,
}

impl SweepSpec {
    /// Default grid and 100 trials for `kind`. Region sweeps keep the noise
    /// of `base`, which is 5 dB for the default config.
    pub fn new(kind: SweepKind, base: SystemConfig, seed: u64) -> Self {
        Self {
            kind,
            grid: kind.default_grid(),
            trials: 100,
            base,
            options: SolverOptions::default(),
            seed,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidSweep("grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSweep("grid values must be finite".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSweep("grid must be strictly increasing".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidSweep("trials must be at least 1".into()));
        }
        for v in &self.grid {
            self.config_at(*v)?;
        }
        Ok(())
    }

    /// Config of one grid point.
    pub fn config_at(&self, value: f64) -> Result<SystemConfig> {
        let cfg = match self.kind {
            SweepKind::Snr => self.base.clone().with_snr_db(value),
            SweepKind::Region => self.base.clone().with_region_size(value),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub scheme: SchemeId,
    pub trial: u64,
    pub min_rate: f64,
    pub outer_iters: usize,
    pub wall_ms: f64,
    /// Fingerprint of the realization the row was computed on.
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Sorted by sweep value, scheme, trial.
    pub rows: Vec<SweepRow>,
}

fn sample(spec: &SweepSpec, config: &SystemConfig, trial: u64) -> ChannelRealization {
    sample_realization(config, RngStream::new(spec.seed, trial))
}

/// Rows of one SNR-sweep trial. Gains, and therefore the optimizer's path,
/// do not depend on noise, so each optimized scheme runs once and the best
/// iterate is picked per SNR.
fn snr_trial(spec: &SweepSpec, configs: &[(f64, SystemConfig)], trial: u64) -> Vec<SweepRow> {
    let base = &configs[0].1;
    let realization = sample(spec, base, trial);
    let fingerprint = realization.fingerprint();
    let layout = Layout::initial(base);
    let mut rows = Vec::new();
    for scheme in SchemeId::ALL {
        let (iterates, outer_iters, wall_ms) = match scheme.movable() {
            None => (vec![layout.clone()], 0, 0.0),
            Some(movable) => {
                let options = SolverOptions {
                    movable,
                    ..spec.options.clone()
                };
                let traj = max_min_trajectory(&realization, &layout, base, &options);
                let ms = traj.trace.wall_time.as_secs_f64() * 1e3;
                (traj.iterates, traj.trace.outer_iterations, ms)
            }
        };
        for (value, config) in configs {
            let (_, report) = select_best(&realization, config, &iterates);
            rows.push(SweepRow {
                sweep_value: *value,
                scheme,
                trial,
                min_rate: report.min_rate,
                outer_iters,
                wall_ms,
                fingerprint: fingerprint.clone(),
            });
        }
    }
    rows
}

fn region_trial(spec: &SweepSpec, value: f64, config: &SystemConfig, trial: u64) -> Vec<SweepRow> {
    let realization = sample(spec, config, trial);
    let fingerprint = realization.fingerprint();
    SchemeId::ALL
        .into_iter()
        .map(|scheme| {
            let run = run_scheme(scheme, &realization, config, &spec.options);
            SweepRow {
                sweep_value: value,
                scheme,
                trial,
                min_rate: run.report.min_rate,
                outer_iters: run.trace.outer_iterations,
                wall_ms: run.trace.wall_time.as_secs_f64() * 1e3,
                fingerprint: fingerprint.clone(),
            }
        })
        .collect()
}

/// Runs every scheme on every (grid point, trial) pair.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let configs: Vec<(f64, SystemConfig)> = spec
        .grid
        .iter()
        .map(|v| spec.config_at(*v).map(|c| (*v, c)))
        .collect::<Result<_>>()?;
    let trials = spec.trials as u64;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidSweep(format!("cannot start worker pool: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| match spec.kind {
        SweepKind::Snr => (0..trials)
            .into_par_iter()
            .flat_map_iter(|t| snr_trial(spec, &configs, t))
            .collect(),
        SweepKind::Region => configs
            .par_iter()
            .flat_map(|(v, c)| (0..trials).into_par_iter().flat_map_iter(move |t| region_trial(spec, *v, c, t)))
            .collect(),
    });
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.scheme.cmp(&b.scheme))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
    })
}

/// Decimal rendering rounded to 12 significant digits.
pub fn format_sig12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// CSV body; `wall_ms` is written as 0 unless `timing` is set, which keeps
/// the bytes a pure function of the inputs.
pub fn render_csv(result: &SweepResult, timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let wall = if timing { format_sig12(r.wall_ms) } else { "0".into() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_sig12(r.sweep_value),
            r.scheme,
            r.trial,
            format_sig12(r.min_rate),
            r.outer_iters,
            wall
        );
    }
    out
}

/// Flat `key = value` metadata: seed, grid, solver knobs and config snapshot.
pub fn render_metadata(result: &SweepResult) -> String {
    let spec = &result.spec;
    let grid: Vec<String> = spec.grid.iter().map(|v| format_sig12(*v)).collect();
    let schemes: Vec<&str> = SchemeId::ALL.iter().map(|s| s.as_str()).collect();
    let o = &spec.options;
    let mut out = String::new();
    let _ = writeln!(out, "version = \"{}\"", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "sweep = \"{}\"", spec.kind.as_str());
    let _ = writeln!(out, "seed = {}", spec.seed);
    let _ = writeln!(out, "grid = [{}]", grid.join(", "));
    let _ = writeln!(out, "trials = {}", spec.trials);
    let _ = writeln!(out, "schemes = [\"{}\"]", schemes.join("\", \""));
    let _ = writeln!(out, "rate_log_base = 2");
    let _ = writeln!(out, "noise_split = \"equal\"");
    let _ = writeln!(out, "epsilon = {}", format_sig12(o.epsilon));
    let _ = writeln!(out, "inner_tolerance = {}", format_sig12(o.inner_tolerance));
    let _ = writeln!(out, "max_passes = {}", o.max_passes);
    let _ = writeln!(out, "max_outer = {}", o.max_outer);
    let _ = writeln!(out, "gain_floor = \"{}\"", o.gain_floor.as_str());
    let _ = writeln!(out, "retarget = {}", o.retarget);
    for line in spec.base.to_toml().lines() {
        let _ = writeln!(out, "config.{line}");
    }
    out
}

/// `sweep_value,trial,fingerprint`, one line per distinct pair.
pub fn render_realizations(result: &SweepResult) -> String {
    let mut seen = BTreeMap::new();
    for r in &result.rows {
        seen.entry((format_sig12(r.sweep_value), r.trial))
            .or_insert((r.sweep_value, r.fingerprint.as_str()));
    }
    let mut entries: Vec<_> = seen.into_iter().collect();
    entries.sort_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0 .1.cmp(&b.0 .1)));
    let mut out = String::from("sweep_value,trial,fingerprint\n");
    for ((value, trial), (_, fp)) in entries {
        let _ = writeln!(out, "{value},{trial},{fp}");
    }
    out
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Writes the CSV plus `<path>.meta` and `<path>.realizations.csv`.
pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>, timing: bool) -> Result<()> {
    let path = path.as_ref();
    let write = |p: PathBuf, body: String| fs::write(&p, body).map_err(|e| Error::io(&p, e));
    write(path.to_path_buf(), render_csv(result, timing))?;
    write(sidecar(path, ".meta"), render_metadata(result))?;
    write(sidecar(path, ".realizations.csv"), render_realizations(result))
}

/// Parses a CSV produced by [`render_csv`]; fingerprints come back empty.
pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidSweep("missing or unexpected CSV header".into()));
    }
    let bad = |line: &str| Error::InvalidSweep(format!("malformed CSV row `{line}`"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(line));
            }
            Ok(SweepRow {
                sweep_value: f[0].parse().map_err(|_| bad(line))?,
                scheme: f[1].parse()?,
                trial: f[2].parse().map_err(|_| bad(line))?,
                min_rate: f[3].parse().map_err(|_| bad(line))?,
                outer_iters: f[4].parse().map_err(|_| bad(line))?,
                wall_ms: f[5].parse().map_err(|_| bad(line))?,
                fingerprint: String::new(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub scheme: SchemeId,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`; 0 for a single trial.
    pub std_err: f64,
}

/// Mean and standard error of the min-rate per (sweep value, scheme).
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(u64, SchemeId), (f64, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        // Order-preserving key for non-negative and negative floats alike.
        let bits = r.sweep_value.to_bits();
        let key = if r.sweep_value.is_sign_negative() { !bits } else { bits | (1 << 63) };
        groups
            .entry((key, r.scheme))
            .or_insert_with(|| (r.sweep_value, Vec::new()))
            .1
            .push(r.min_rate);
    }
    groups
        .into_iter()
        .map(|((_, scheme), (sweep_value, xs))| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std_err = if n > 1 {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow {
                sweep_value,
                scheme,
                trials: n,
                mean,
                std_err,
            }
        })
        .collect()
}

/// Aligned text table of a summary.
pub fn render_table(summary: &[SummaryRow], kind: SweepKind) -> String {
    let axis = match kind {
        SweepKind::Snr => "snr_db",
        SweepKind::Region => "region",
    };
    let mut out = format!("{axis:>8}  {:<9} {:>7} {:>12} {:>12}\n", "scheme", "trials", "mean_rate", "std_err");
    for s in summary {
        let _ = writeln!(
            out,
            "{:>8}  {:<9} {:>7} {:>12.6} {:>12.6}",
            format_sig12(s.sweep_value),
            s.scheme.as_str(),
            s.trials,
            s.mean,
            s.std_err
        );
    }
    out
}

pub fn render_summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from("sweep_value,scheme,trials,mean_min_rate,std_err\n");
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_sig12(s.sweep_value),
            s.scheme,
            s.trials,
            format_sig12(s.mean),
            format_sig12(s.std_err)
        );
    }
    out
}

/// Everything produced by a single-trial run.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub realization: ChannelRealization,
    pub runs: Vec<(SchemeId, crate::baselines::SchemeRun)>,
}

/// All schemes on trial `trial` of `seed`.
pub fn run_single(config: &SystemConfig, options: &SolverOptions, seed: u64, trial: u64) -> Result<SingleRun> {
    config.validate()?;
    let realization = sample_realization(config, RngStream::new(seed, trial));
    let runs = SchemeId::ALL
        .into_iter()
        .map(|s| (s, run_scheme(s, &realization, config, options)))
        .collect();
    Ok(SingleRun { realization, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::run_proposed;

    fn small(kind: SweepKind, grid: Vec<f64>, trials: usize) -> SweepSpec {
        SweepSpec {
            grid,
            trials,
            ..SweepSpec::new(kind, SystemConfig::default(), 11)
        }
    }

    #[test]
    fn spec_validation() {
        assert!(small(SweepKind::Snr, vec![], 1).validate().is_err());
        assert!(small(SweepKind::Snr, vec![5.0, 5.0], 1).validate().is_err());
        assert!(small(SweepKind::Snr, vec![5.0, 0.0], 1).validate().is_err());
        assert!(small(SweepKind::Snr, vec![5.0], 0).validate().is_err());
        assert!(small(SweepKind::Region, vec![0.1], 1).validate().is_err());
        assert!(small(SweepKind::Region, vec![1.0, 2.0], 1).validate().is_ok());
        assert!("snr".parse::<SweepKind>().is_ok());
        assert!("power".parse::<SweepKind>().is_err());
    }

    #[test]
    fn one_trial_one_point_gives_three_rows() {
        let result = run_sweep(&small(SweepKind::Snr, vec![5.0], 1)).unwrap();
        assert_eq!(result.rows.len(), 3);
        let fp = &result.rows[0].fingerprint;
        assert!(result.rows.iter().all(|r| &r.fingerprint == fp));
    }

    #[test]
    fn rows_are_complete_sorted_and_paired() {
        let result = run_sweep(&small(SweepKind::Region, vec![2.0, 4.0], 3)).unwrap();
        assert_eq!(result.rows.len(), 2 * 3 * 3);
        assert!(result.rows.iter().all(|r| r.min_rate >= 0.0));
        for w in result.rows.windows(2) {
            let a = (w[0].sweep_value, w[0].scheme, w[0].trial);
            let b = (w[1].sweep_value, w[1].scheme, w[1].trial);
            assert!(a < b);
        }
        for r in &result.rows {
            let same_trial = result.rows.iter().filter(|o| o.trial == r.trial);
            assert!(same_trial.into_iter().all(|o| o.fingerprint == r.fingerprint));
        }
    }

    #[test]
    fn snr_reuse_matches_direct_runs() {
        let spec = small(SweepKind::Snr, vec![-5.0, 5.0, 15.0], 2);
        let result = run_sweep(&spec).unwrap();
        for r in &result.rows {
            let cfg = spec.config_at(r.sweep_value).unwrap();
            let real = sample_realization(&cfg, RngStream::new(spec.seed, r.trial));
            let direct = run_scheme(r.scheme, &real, &cfg, &spec.options);
            assert_eq!(direct.report.min_rate, r.min_rate, "{:?}", r);
            assert_eq!(direct.trace.outer_iterations, r.outer_iters);
        }
    }

    #[test]
    fn worker_count_does_not_change_rows() {
        let mut spec = small(SweepKind::Snr, vec![0.0, 10.0], 3);
        spec.workers = 1;
        let a = run_sweep(&spec).unwrap();
        spec.workers = 3;
        let b = run_sweep(&spec).unwrap();
        assert_eq!(render_csv(&a, false), render_csv(&b, false));
    }

    #[test]
    fn csv_round_trip_and_sidecars() {
        let result = run_sweep(&small(SweepKind::Snr, vec![0.0, 5.0], 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_csv(&result, &path, false).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), result.rows.len());
        for (p, r) in parsed.iter().zip(&result.rows) {
            assert_eq!(p.sweep_value, r.sweep_value);
            assert_eq!(p.scheme, r.scheme);
            assert_eq!(p.trial, r.trial);
            assert_eq!(p.min_rate, format_sig12(r.min_rate).parse::<f64>().unwrap());
            assert_eq!(p.outer_iters, r.outer_iters);
            assert_eq!(p.wall_ms, 0.0);
        }
        let meta = fs::read_to_string(dir.path().join("out.csv.meta")).unwrap();
        assert!(meta.contains("seed = 11"));
        assert!(meta.contains("rate_log_base = 2"));
        assert!(meta.contains("config.users = 4"));
        let fps = fs::read_to_string(dir.path().join("out.csv.realizations.csv")).unwrap();
        assert_eq!(fps.lines().count(), 1 + 2 * 2);
        assert!(emit_csv(&result, dir.path().join("missing/out.csv"), false).is_err());
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(0.1), "0.1");
        assert_eq!(format_sig12(-5.0), "-5");
        assert_eq!(format_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig12(123456.7890123456), "123456.789012");
        assert_eq!(format_sig12(0.0), "0");
    }

    #[test]
    fn summary_statistics() {
        let row = |v: f64, s: SchemeId, t: u64, rate: f64| SweepRow {
            sweep_value: v,
            scheme: s,
            trial: t,
            min_rate: rate,
            outer_iters: 0,
            wall_ms: 0.0,
            fingerprint: String::new(),
        };
        let rows = vec![
            row(-5.0, SchemeId::Fixed, 0, 0.7),
            row(-5.0, SchemeId::Fixed, 1, 0.7),
            row(-5.0, SchemeId::Fixed, 2, 0.7),
            row(0.0, SchemeId::Proposed, 0, 1.0),
            row(0.0, SchemeId::Proposed, 1, 3.0),
            row(-10.0, SchemeId::UFar, 0, 2.0),
        ];
        let s = summarize(&rows);
        assert_eq!(s.iter().map(|r| r.sweep_value).collect::<Vec<_>>(), vec![-10.0, -5.0, 0.0]);
        assert_eq!(s[0].std_err, 0.0);
        assert!((s[1].mean - 0.7).abs() < 1e-15);
        assert!(s[1].std_err < 1e-15);
        assert_eq!(s[2].mean, 2.0);
        assert!((s[2].std_err - 1.0).abs() < 1e-15);
        let table = render_table(&s, SweepKind::Snr);
        assert_eq!(table.lines().count(), 4);
        assert!(render_summary_csv(&s).starts_with("sweep_value,scheme,trials,mean_min_rate,std_err\n"));
    }

    #[test]
    fn single_run_covers_all_schemes() {
        let cfg = SystemConfig::default();
        let single = run_single(&cfg, &SolverOptions::default(), 3, 0).unwrap();
        assert_eq!(single.runs.len(), 3);
        let proposed = run_proposed(&single.realization, &cfg, &SolverOptions::default());
        assert_eq!(single.runs[2].1.report, proposed.report);
        assert!(run_single(&SystemConfig { min_distance: 0.0, ..cfg }, &SolverOptions::default(), 3, 0).is_err());
    }
}
