//! Field-response channel model.
//!
//! Every link is described by per-path departure/arrival angles and a path
//! response matrix. The channel seen by an antenna at position `t` is the
//! stack of unit-modulus phases `exp(j 2 pi n_p . t)`, one per path, where
//! `n_p` is the path's planar wave vector. Positions are in wavelengths.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RngStream, SystemConfig};
use crate::{Error, Position, Result, C64};

const TWO_PI: f64 = 2.0 * PI;

/// Elevation/azimuth angles of a set of paths, all in `[0, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAngles {
    theta: Vec<f64>,
    phi: Vec<f64>,
    waves: Vec<Position>,
}

impl PathAngles {
    pub fn new(theta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if theta.len() != phi.len() {
            return Err(Error::Dimension(format!(
                "{} elevation angles but {} azimuth angles",
                theta.len(),
                phi.len()
            )));
        }
        let waves = theta
            .iter()
            .zip(&phi)
            .map(|(&t, &p)| wave_vector(t, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { theta, phi, waves })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Wave vectors `[sin(theta) cos(phi), cos(theta)]`, one per path.
    pub fn waves(&self) -> &[Position] {
        &self.waves
    }

    fn sample<R: Rng>(rng: &mut R, paths: usize) -> Self {
        let theta: Vec<f64> = (0..paths).map(|_| rng.random_range(0.0..=PI)).collect();
        let phi: Vec<f64> = (0..paths).map(|_| rng.random_range(0.0..=PI)).collect();
        Self::new(theta, phi).expect("sampled angles lie in [0, pi]")
    }
}

/// Wave vector `[sin(theta) cos(phi), cos(theta)]` of a path.
pub fn wave_vector(theta: f64, phi: f64) -> Result<Position> {
    for value in [theta, phi] {
        if !(0.0..=PI).contains(&value) {
            return Err(Error::AngleDomain { value });
        }
    }
    Ok(Position::new(theta.sin() * phi.cos(), theta.cos()))
}

/// Phase `exp(j 2 pi n . t)` accumulated by a plane wave at `position`.
pub fn phase_response(position: &Position, wave: &Position) -> C64 {
    C64::from_polar(1.0, TWO_PI * wave.dot(position))
}

/// Field response vector: one phase per path.
pub fn frv(position: &Position, angles: &PathAngles) -> DVector<C64> {
    DVector::from_iterator(
        angles.len(),
        angles.waves.iter().map(|n| phase_response(position, n)),
    )
}

/// Partial derivatives of [`frv`] with respect to the two coordinates.
pub fn frv_gradient(position: &Position, angles: &PathAngles) -> [DVector<C64>; 2] {
    let f = frv(position, angles);
    let scale = |axis: usize| {
        DVector::from_iterator(
            angles.len(),
            f.iter()
                .zip(&angles.waves)
                .map(|(v, n)| v * C64::new(0.0, TWO_PI * n[axis])),
        )
    };
    [scale(0), scale(1)]
}

/// Field response matrix: column `m` is the FRV of `positions[m]`.
pub fn frm(positions: &[Position], angles: &PathAngles) -> DMatrix<C64> {
    DMatrix::from_fn(angles.len(), positions.len(), |p, m| {
        phase_response(&positions[m], &angles.waves[p])
    })
}

/// Propagation parameters of one user's link to the relay receive side.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLink {
    pub departure: PathAngles,
    pub relay_arrival: PathAngles,
    /// Path response, receive paths by transmit paths.
    pub response: DMatrix<C64>,
}

/// One quasi-static channel draw. Fixed during an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub users: Vec<UserLink>,
    pub relay_departure: PathAngles,
    pub bs_arrival: PathAngles,
    /// Relay-to-BS path response, BS paths by relay paths.
    pub relay_response: DMatrix<C64>,
}

/// Diagonal Rician path response: LoS entry variance `beta / (beta + 1)`, the
/// remaining `paths - 1` entries `1 / ((beta + 1)(paths - 1))` each.
pub fn sample_path_response<R: Rng>(rng: &mut R, paths: usize, beta: f64) -> DMatrix<C64> {
    let los = beta / (beta + 1.0);
    let nlos = 1.0 / ((beta + 1.0) * (paths - 1) as f64);
    let mut sigma = DMatrix::zeros(paths, paths);
    for l in 0..paths {
        let var = if l == 0 { los } else { nlos };
        sigma[(l, l)] = complex_gaussian(rng, var);
    }
    sigma
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

impl ChannelRealization {
    /// Draws i.i.d. uniform angles and diagonal Rician path responses.
    pub fn sample(config: &SystemConfig, stream: RngStream) -> Self {
        let mut rng = stream.rng();
        let l = config.paths;
        let users = (0..config.users)
            .map(|_| {
                let departure = PathAngles::sample(&mut rng, l);
                let relay_arrival = PathAngles::sample(&mut rng, l);
                let response = sample_path_response(&mut rng, l, config.rician_factor);
                UserLink {
                    departure,
                    relay_arrival,
                    response,
                }
            })
            .collect();
        let relay_departure = PathAngles::sample(&mut rng, l);
        let bs_arrival = PathAngles::sample(&mut rng, l);
        let relay_response = sample_path_response(&mut rng, l, config.rician_factor);
        Self {
            users,
            relay_departure,
            bs_arrival,
            relay_response,
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        for (k, u) in self.users.iter().enumerate() {
            let shape = u.response.shape();
            if shape != (u.relay_arrival.len(), u.departure.len()) {
                return Err(Error::Dimension(format!(
                    "user {k} path response is {shape:?}, expected ({}, {})",
                    u.relay_arrival.len(),
                    u.departure.len()
                )));
            }
        }
        let shape = self.relay_response.shape();
        if shape != (self.bs_arrival.len(), self.relay_departure.len()) {
            return Err(Error::Dimension(format!(
                "relay path response is {shape:?}, expected ({}, {})",
                self.bs_arrival.len(),
                self.relay_departure.len()
            )));
        }
        Ok(())
    }

    /// Short content hash, used to check that paired schemes saw the same draw.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut angles = |a: &PathAngles| {
            for v in a.theta.iter().chain(&a.phi) {
                h.update(v.to_bits().to_le_bytes());
            }
        };
        for u in &self.users {
            angles(&u.departure);
            angles(&u.relay_arrival);
        }
        angles(&self.relay_departure);
        angles(&self.bs_arrival);
        for m in self
            .users
            .iter()
            .map(|u| &u.response)
            .chain(std::iter::once(&self.relay_response))
        {
            for z in m.iter() {
                h.update(z.re.to_bits().to_le_bytes());
                h.update(z.im.to_bits().to_le_bytes());
            }
        }
        h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Writes angles and path-response diagonals as pretty JSON.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&RealizationDump::from(self))
            .expect("dump is plain data");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize)]
struct AnglesDump {
    theta: Vec<f64>,
    phi: Vec<f64>,
}

#[derive(Serialize)]
struct UserDump {
    departure: AnglesDump,
    relay_arrival: AnglesDump,
    response_diagonal: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct RealizationDump {
    fingerprint: String,
    users: Vec<UserDump>,
    relay_departure: AnglesDump,
    bs_arrival: AnglesDump,
    relay_response_diagonal: Vec<[f64; 2]>,
}

fn diag(m: &DMatrix<C64>) -> Vec<[f64; 2]> {
    m.diagonal().iter().map(|z| [z.re, z.im]).collect()
}

impl From<&PathAngles> for AnglesDump {
    fn from(a: &PathAngles) -> Self {
        Self {
            theta: a.theta.clone(),
            phi: a.phi.clone(),
        }
    }
}

impl From<&ChannelRealization> for RealizationDump {
    fn from(r: &ChannelRealization) -> Self {
        Self {
            fingerprint: r.fingerprint(),
            users: r
                .users
                .iter()
                .map(|u| UserDump {
                    departure: (&u.departure).into(),
                    relay_arrival: (&u.relay_arrival).into(),
                    response_diagonal: diag(&u.response),
                })
                .collect(),
            relay_departure: (&r.relay_departure).into(),
            bs_arrival: (&r.bs_arrival).into(),
            relay_response_diagonal: diag(&r.relay_response),
        }
    }
}

/// Draws a realization from `config` on the given stream.
pub fn sample_realization(config: &SystemConfig, stream: RngStream) -> ChannelRealization {
    ChannelRealization::sample(config, stream)
}

/// One movable antenna.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    User(usize),
    RelayRx(usize),
    RelayTx(usize),
    Bs(usize),
}

/// Positions of every fluid antenna, each inside its own `[0, A]^2` region.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub users: Vec<Position>,
    pub relay_rx: Vec<Position>,
    pub relay_tx: Vec<Position>,
    pub bs: Vec<Position>,
}

impl Layout {
    /// Deterministic start: users at region centers, array antennas on a
    /// corner-anchored grid with spacing `max(d0, A / ceil(sqrt(count)))`.
    pub fn initial(config: &SystemConfig) -> Self {
        let a = config.region_size;
        let grid = |count: usize| {
            let cols = (count as f64).sqrt().ceil() as usize;
            let spacing = config.min_distance.max(a / cols as f64);
            (0..count)
                .map(|i| {
                    let x = ((i % cols) as f64 * spacing).min(a);
                    let y = ((i / cols) as f64 * spacing).min(a);
                    Position::new(x, y)
                })
                .collect::<Vec<_>>()
        };
        Self {
            users: vec![Position::new(a / 2.0, a / 2.0); config.users],
            relay_rx: grid(config.relay_antennas),
            relay_tx: grid(config.relay_antennas),
            bs: grid(config.bs_antennas),
        }
    }

    pub fn position(&self, block: Block) -> Position {
        match block {
            Block::User(k) => self.users[k],
            Block::RelayRx(m) => self.relay_rx[m],
            Block::RelayTx(m) => self.relay_tx[m],
            Block::Bs(n) => self.bs[n],
        }
    }

    pub fn set_position(&mut self, block: Block, x: Position) {
        match block {
            Block::User(k) => self.users[k] = x,
            Block::RelayRx(m) => self.relay_rx[m] = x,
            Block::RelayTx(m) => self.relay_tx[m] = x,
            Block::Bs(n) => self.bs[n] = x,
        }
    }

    /// The antenna array a block belongs to; users each live alone.
    pub fn array(&self, block: Block) -> &[Position] {
        match block {
            Block::User(k) => std::slice::from_ref(&self.users[k]),
            Block::RelayRx(_) => &self.relay_rx,
            Block::RelayTx(_) => &self.relay_tx,
            Block::Bs(_) => &self.bs,
        }
    }

    /// Smallest pairwise distance within any array (infinite if no pairs).
    pub fn min_spacing(&self) -> f64 {
        [&self.relay_rx, &self.relay_tx, &self.bs]
            .into_iter()
            .map(|arr| min_pairwise(arr))
            .fold(f64::INFINITY, f64::min)
    }

    /// Every position inside `[0, A]^2` exactly and spacings at least `d0 - tol`.
    pub fn is_feasible(&self, config: &SystemConfig, tol: f64) -> bool {
        let a = config.region_size;
        let inside = |p: &Position| (0.0..=a).contains(&p.x) && (0.0..=a).contains(&p.y);
        self.users
            .iter()
            .chain(&self.relay_rx)
            .chain(&self.relay_tx)
            .chain(&self.bs)
            .all(inside)
            && self.min_spacing() >= config.min_distance - tol
    }

    pub fn check_shape(&self, config: &SystemConfig) -> Result<()> {
        let expect = [
            ("users", self.users.len(), config.users),
            ("relay_rx", self.relay_rx.len(), config.relay_antennas),
            ("relay_tx", self.relay_tx.len(), config.relay_antennas),
            ("bs", self.bs.len(), config.bs_antennas),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Dimension(format!(
                    "layout has {got} {name} positions, config expects {want}"
                )));
            }
        }
        Ok(())
    }
}

fn min_pairwise(points: &[Position]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

/// Field response vectors/matrices of every antenna for a given layout.
#[derive(Debug, Clone)]
pub struct FieldResponses {
    /// `u_k(t_k)`, one per user.
    pub user: Vec<DVector<C64>>,
    /// `F_{k,U}(R_U)`, one `L x M` matrix per user.
    pub relay_rx: Vec<DMatrix<C64>>,
    /// `F_B(T_B)`, `L x M`.
    pub relay_tx: DMatrix<C64>,
    /// `B(R)`, `L x N`.
    pub bs: DMatrix<C64>,
}

impl FieldResponses {
    pub fn new(realization: &ChannelRealization, layout: &Layout) -> Self {
        Self {
            user: realization
                .users
                .iter()
                .zip(&layout.users)
                .map(|(u, t)| frv(t, &u.departure))
                .collect(),
            relay_rx: realization
                .users
                .iter()
                .map(|u| frm(&layout.relay_rx, &u.relay_arrival))
                .collect(),
            relay_tx: frm(&layout.relay_tx, &realization.relay_departure),
            bs: frm(&layout.bs, &realization.bs_arrival),
        }
    }
}

/// Two-hop channel for a given layout.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    /// User-to-relay channels `h~_k = F_{k,U}^H Sigma_k u_k`, length M each.
    pub user_links: Vec<DVector<C64>>,
    /// Relay-to-BS channel `H = B^H Sigma F_B`, `N x M`.
    pub relay_bs: DMatrix<C64>,
    /// `H~ = F H`.
    pub relay_bs_scaled: DMatrix<C64>,
}

impl EffectiveChannel {
    pub fn users(&self) -> usize {
        self.user_links.len()
    }

    pub(crate) fn from_responses(
        realization: &ChannelRealization,
        fr: &FieldResponses,
        relay_gain: f64,
    ) -> Self {
        let user_links = realization
            .users
            .iter()
            .enumerate()
            .map(|(k, u)| fr.relay_rx[k].ad_mul(&(&u.response * &fr.user[k])))
            .collect();
        let relay_bs = fr.bs.ad_mul(&(&realization.relay_response * &fr.relay_tx));
        let relay_bs_scaled = relay_bs.map(|z| z * relay_gain);
        Self {
            user_links,
            relay_bs,
            relay_bs_scaled,
        }
    }
}

/// Builds the effective channel of `layout` under `realization`.
pub fn assemble(
    realization: &ChannelRealization,
    layout: &Layout,
    config: &SystemConfig,
) -> Result<EffectiveChannel> {
    realization.check_shape()?;
    if realization.users.len() != config.users {
        return Err(Error::Dimension(format!(
            "realization has {} users, config expects {}",
            realization.users.len(),
            config.users
        )));
    }
    layout.check_shape(config)?;
    if realization.relay_departure.len() != realization.relay_response.ncols() {
        return Err(Error::Dimension("relay departure paths".into()));
    }
    let fr = FieldResponses::new(realization, layout);
    Ok(EffectiveChannel::from_responses(
        realization,
        &fr,
        config.relay_gain,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn angles(pairs: &[(f64, f64)]) -> PathAngles {
        PathAngles::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn wave_vector_examples() {
        let n = wave_vector(PI / 2.0, 0.0).unwrap();
        assert_relative_eq!(n, Position::new(1.0, 0.0), epsilon = 1e-15);
        let n = wave_vector(0.0, 1.3).unwrap();
        assert_relative_eq!(n, Position::new(0.0, 1.0), epsilon = 1e-15);
        let n = wave_vector(PI / 3.0, PI / 4.0).unwrap();
        assert_relative_eq!(n[0], 0.612_372_435_695_794_5, epsilon = 1e-12);
        assert_relative_eq!(n[1], 0.5, epsilon = 1e-12);
        assert!(matches!(
            wave_vector(-0.1, 0.0),
            Err(Error::AngleDomain { .. })
        ));
        assert!(wave_vector(0.0, 3.2).is_err());
    }

    #[test]
    fn phase_response_examples() {
        let z = phase_response(&Position::zeros(), &Position::new(0.3, 0.8));
        assert_eq!(z, C64::new(1.0, 0.0));
        let z = phase_response(&Position::new(0.5, 0.0), &Position::new(1.0, 0.0));
        assert_relative_eq!(z.re, -1.0, epsilon = 1e-15);
        assert_relative_eq!(z.im, 0.0, epsilon = 1e-15);
        let z = phase_response(&Position::new(0.7, 0.25), &Position::new(0.0, 1.0));
        assert_relative_eq!(z.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(z.im, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn frv_examples() {
        let a = angles(&[(0.1, 0.2), (1.0, 2.0), (2.0, 0.5), (3.0, 3.0)]);
        let f = frv(&Position::zeros(), &a);
        assert!(f.iter().all(|z| *z == C64::new(1.0, 0.0)));

        let single = angles(&[(PI / 2.0, 0.0)]);
        let f = frv(&Position::new(0.5, 0.0), &single);
        assert_relative_eq!(f[0].re, -1.0, epsilon = 1e-15);

        let p = Position::new(0.37, 1.9);
        let plus = frv(&p, &a);
        let minus = frv(&-p, &a);
        for (x, y) in plus.iter().zip(minus.iter()) {
            assert_relative_eq!(x.conj().re, y.re, epsilon = 1e-14);
            assert_relative_eq!(x.conj().im, y.im, epsilon = 1e-14);
        }
    }

    #[test]
    fn frm_examples() {
        let a = angles(&[(0.1, 0.2), (1.0, 2.0), (2.0, 0.5), (3.0, 3.0)]);
        let p = Position::new(1.2, 0.4);
        assert_eq!(frm(&[p], &a).column(0).into_owned(), frv(&p, &a));
        let ones = frm(&[Position::zeros(); 4], &a);
        assert!(ones.iter().all(|z| *z == C64::new(1.0, 0.0)));
        let ps = [Position::new(0.1, 0.2), Position::new(1.0, 3.0), Position::new(2.5, 0.0)];
        let swapped = [ps[2], ps[0], ps[1]];
        let m = frm(&ps, &a);
        let s = frm(&swapped, &a);
        assert_eq!(s.column(0), m.column(2));
        assert_eq!(s.column(1), m.column(0));
        assert_eq!(s.column(2), m.column(1));
    }

    #[test]
    fn sampled_realization_shape_and_determinism() {
        let cfg = SystemConfig::default();
        let a = sample_realization(&cfg, RngStream::new(11, 3));
        let b = sample_realization(&cfg, RngStream::new(11, 3));
        let c = sample_realization(&cfg, RngStream::new(11, 4));
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.users.len(), 4);
        a.check_shape().unwrap();
        for m in a.users.iter().map(|u| &u.response).chain([&a.relay_response]) {
            assert_eq!(m.shape(), (4, 4));
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert_eq!(m[(i, j)], C64::new(0.0, 0.0));
                    }
                }
            }
        }
        for u in &a.users {
            assert!(u.departure.theta().iter().chain(u.departure.phi()).all(|v| (0.0..=PI).contains(v)));
        }
    }

    #[test]
    fn path_response_power_sums_to_one() {
        let mut rng = RngStream::new(5, 0).rng();
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let s = sample_path_response(&mut rng, 4, 1.0);
            total += s.diagonal().iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let mean = total / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    fn scalar_realization(sigma: C64) -> (ChannelRealization, SystemConfig, Layout) {
        let one = angles(&[(0.4, 1.1)]);
        let r = ChannelRealization {
            users: vec![UserLink {
                departure: one.clone(),
                relay_arrival: one.clone(),
                response: DMatrix::from_element(1, 1, sigma),
            }],
            relay_departure: one.clone(),
            bs_arrival: one,
            relay_response: DMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
        };
        let cfg = SystemConfig {
            users: 1,
            relay_antennas: 1,
            bs_antennas: 1,
            paths: 2,
            max_power: vec![1.0],
            ..SystemConfig::default()
        };
        let layout = Layout {
            users: vec![Position::zeros()],
            relay_rx: vec![Position::zeros()],
            relay_tx: vec![Position::zeros()],
            bs: vec![Position::zeros()],
        };
        (r, cfg, layout)
    }

    #[test]
    fn scalar_channel_is_path_response() {
        let sigma = C64::new(0.3, -0.7);
        let (r, cfg, layout) = scalar_realization(sigma);
        let ch = assemble(&r, &layout, &cfg).unwrap();
        assert_relative_eq!(ch.user_links[0][0].re, sigma.re, epsilon = 1e-15);
        assert_relative_eq!(ch.user_links[0][0].im, sigma.im, epsilon = 1e-15);
        let (r0, cfg, layout) = scalar_realization(C64::new(0.0, 0.0));
        let ch = assemble(&r0, &layout, &cfg).unwrap();
        assert_eq!(ch.user_links[0].norm(), 0.0);
    }

    #[test]
    fn assemble_rejects_mismatched_shapes() {
        let cfg = SystemConfig::default();
        let r = sample_realization(&cfg, RngStream::new(1, 1));
        let small = SystemConfig {
            users: 3,
            max_power: vec![1.0; 3],
            ..cfg.clone()
        };
        assert!(matches!(
            assemble(&r, &Layout::initial(&small), &small),
            Err(Error::Dimension(_))
        ));
        let mut bad = r.clone();
        bad.relay_response = DMatrix::zeros(3, 4);
        assert!(assemble(&bad, &Layout::initial(&cfg), &cfg).is_err());
    }

    #[test]
    fn common_translation_keeps_single_path_magnitudes() {
        let cfg = SystemConfig::default();
        let mut r = sample_realization(&cfg, RngStream::new(2, 0));
        // One receive path at the relay: a common shift of R_U only rotates each entry.
        for u in &mut r.users {
            u.relay_arrival = angles(&[(1.1, 0.4)]);
            u.response = DMatrix::from_fn(1, 4, |_, j| C64::new(0.2 * j as f64 + 0.1, 0.3));
        }
        let layout = Layout::initial(&cfg);
        let mut shifted = layout.clone();
        for p in &mut shifted.relay_rx {
            *p += Position::new(0.3, 0.2);
        }
        let a = assemble(&r, &layout, &cfg).unwrap();
        let b = assemble(&r, &shifted, &cfg).unwrap();
        for k in 0..cfg.users {
            for m in 0..cfg.relay_antennas {
                assert_relative_eq!(a.user_links[k][m].norm(), b.user_links[k][m].norm(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn layout_initial_is_feasible() {
        for a in [1.0, 2.0, 3.0, 4.0, 5.0] {
            let cfg = SystemConfig::default().with_region_size(a);
            let l = Layout::initial(&cfg);
            assert!(l.is_feasible(&cfg, 0.0), "A = {a}");
        }
    }

    proptest! {
        #[test]
        fn frv_entries_unit_modulus(x in -5.0f64..5.0, y in -5.0f64..5.0,
                                    t in proptest::collection::vec(0.0f64..PI, 4),
                                    p in proptest::collection::vec(0.0f64..PI, 4)) {
            let a = PathAngles::new(t, p).unwrap();
            for z in frv(&Position::new(x, y), &a).iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn assemble_is_homogeneous_in_path_response(seed in 0u64..1000, c in 0.1f64..5.0) {
            let cfg = SystemConfig::default();
            let r = sample_realization(&cfg, RngStream::new(seed, 0));
            let mut scaled = r.clone();
            scaled.users[1].response *= C64::new(c, 0.0);
            let layout = Layout::initial(&cfg);
            let a = assemble(&r, &layout, &cfg).unwrap();
            let b = assemble(&scaled, &layout, &cfg).unwrap();
            let diff = (&b.user_links[1] - a.user_links[1].map(|z| z * c)).norm();
            prop_assert!(diff <= 1e-12 * a.user_links[1].norm().max(1.0));
            prop_assert_eq!(&a.user_links[0], &b.user_links[0]);
        }

        #[test]
        fn scaled_relay_matrix(seed in 0u64..1000, g in 0.1f64..4.0) {
            let cfg = SystemConfig { relay_gain: g, ..SystemConfig::default() };
            let r = sample_realization(&cfg, RngStream::new(seed, 1));
            let ch = assemble(&r, &Layout::initial(&cfg), &cfg).unwrap();
            prop_assert!((&ch.relay_bs_scaled - ch.relay_bs.map(|z| z * g)).norm() == 0.0);
        }

        #[test]
        fn channel_gradient_matches_finite_differences(seed in 0u64..500, m in 0usize..4, axis in 0usize..2) {
            let cfg = SystemConfig::default();
            let r = sample_realization(&cfg, RngStream::new(seed, 2));
            let layout = Layout::initial(&cfg);
            let k = (seed % 4) as usize;
            // d h~_k[m] / d r_{U_m} = (d f / dx)^H Sigma_k u_k
            let x0 = layout.relay_rx[m];
            let lam = &r.users[k].response * frv(&layout.users[k], &r.users[k].departure);
            let grad = frv_gradient(&x0, &r.users[k].relay_arrival);
            let analytic = grad[axis].dotc(&lam);
            let h = 1e-6;
            let mut e = Position::zeros();
            e[axis] = h;
            let entry = |p: Position| {
                let mut l = layout.clone();
                l.relay_rx[m] = p;
                assemble(&r, &l, &cfg).unwrap().user_links[k][m]
            };
            let fd = (entry(x0 + e) - entry(x0 - e)) / (2.0 * h);
            let scale = analytic.norm().max(1.0);
            prop_assert!((fd - analytic).norm() / scale < 1e-5, "{} vs {}", fd, analytic);
            // Continuity: a 1e-7 nudge moves the entry by O(1e-6) at most.
            let mut tiny = Position::zeros();
            tiny[axis] = 1e-7;
            prop_assert!((entry(x0 + tiny) - entry(x0)).norm() < 1e-5);
        }
    }
}
