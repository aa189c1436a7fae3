//! Successive convex approximation building blocks.
//!
//! Every per-antenna objective in this crate is, after a first-order Taylor
//! bound in the field response vector, of the form
//!
//! ```text
//! upsilon(x) = 2 Re{ c^H f(x) } = 2 sum_p |c_p| cos(2 pi n_p . x - arg c_p)
//! ```
//!
//! for a fixed coefficient vector `c`. Its Hessian is
//! `-8 pi^2 sum_p |c_p| cos(.) n_p n_p^T`, whose spectral norm never exceeds
//! `delta = 8 pi^2 sum_p |c_p| |n_p|^2`. Subtracting `delta/2 |x - x0|^2` from
//! the linearization at `x0` therefore gives a concave quadratic that lies
//! below `upsilon` everywhere and touches it at `x0`.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::channel::{frv, PathAngles};
use crate::{Position, C64};

/// Smallest curvature used for a surrogate, keeps the QP strictly concave.
pub const DELTA_FLOOR: f64 = 1e-9;

/// Gain-constraint violations at the expansion point up to this size are
/// treated as solver round-off and silently absorbed.
pub const RESTORATION_TOLERANCE: f64 = 1e-6;

/// `upsilon(x) = 2 Re{c^H f(x)}` for a fixed coefficient vector.
#[derive(Debug, Clone)]
pub struct Upsilon<'a> {
    coeffs: DVector<C64>,
    angles: &'a PathAngles,
}

impl<'a> Upsilon<'a> {
    pub fn new(coeffs: DVector<C64>, angles: &'a PathAngles) -> Self {
        assert_eq!(coeffs.len(), angles.len(), "one coefficient per path");
        Self { coeffs, angles }
    }

    pub fn coeffs(&self) -> &DVector<C64> {
        &self.coeffs
    }

    pub fn angles(&self) -> &'a PathAngles {
        self.angles
    }

    pub fn value(&self, x: &Position) -> f64 {
        2.0 * self.coeffs.dotc(&frv(x, self.angles)).re
    }

    pub fn gradient(&self, x: &Position) -> Position {
        let mut g = Position::zeros();
        for (c, n) in self.coeffs.iter().zip(self.angles.waves()) {
            let phase = 2.0 * PI * n.dot(x) - c.arg();
            g -= 4.0 * PI * c.norm() * phase.sin() * n;
        }
        g
    }

    /// Analytic Hessian, `-8 pi^2 sum_p |c_p| cos(.) n_p n_p^T`.
    pub fn hessian(&self, x: &Position) -> nalgebra::Matrix2<f64> {
        let mut h = nalgebra::Matrix2::zeros();
        for (c, n) in self.coeffs.iter().zip(self.angles.waves()) {
            let phase = 2.0 * PI * n.dot(x) - c.arg();
            h -= 8.0 * PI * PI * c.norm() * phase.cos() * n * n.transpose();
        }
        h
    }

    /// Curvature bound with `delta I >= Hessian` everywhere.
    pub fn curvature_bound(&self) -> f64 {
        hessian_bound(&self.coeffs, self.angles)
    }
}

/// Value and gradient of `upsilon` at `x0`, plus the evaluator itself.
#[derive(Debug, Clone)]
pub struct TaylorTerm<'a> {
    pub value: f64,
    pub gradient: Position,
    pub upsilon: Upsilon<'a>,
}

pub fn taylor_linear_term<'a>(
    coeffs: DVector<C64>,
    angles: &'a PathAngles,
    x0: &Position,
) -> TaylorTerm<'a> {
    let upsilon = Upsilon::new(coeffs, angles);
    TaylorTerm {
        value: upsilon.value(x0),
        gradient: upsilon.gradient(x0),
        upsilon,
    }
}

/// `8 pi^2 sum_p |c_p| |n_p|^2`; zero when `c = 0`.
pub fn hessian_bound(coeffs: &DVector<C64>, angles: &PathAngles) -> f64 {
    8.0 * PI
        * PI
        * coeffs
            .iter()
            .zip(angles.waves())
            .map(|(c, n)| c.norm() * n.norm_squared())
            .sum::<f64>()
}

/// Concave quadratic minorizer
/// `s(x) = v0 + g0.(x - x0) - delta/2 |x - x0|^2`,
/// equivalently `-delta/2 x.x + linear.x + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateQuadratic {
    pub delta: f64,
    /// `g0 + delta x0`.
    pub linear: Position,
    /// `v0 - g0.x0 - delta/2 x0.x0`.
    pub constant: f64,
    pub expansion_point: Position,
    pub value_at_expansion: f64,
    pub gradient_at_expansion: Position,
}

impl SurrogateQuadratic {
    pub fn from_parts(value: f64, gradient: Position, delta: f64, x0: Position) -> Self {
        let delta = delta.max(DELTA_FLOOR);
        Self {
            delta,
            linear: gradient + delta * x0,
            constant: value - gradient.dot(&x0) - 0.5 * delta * x0.norm_squared(),
            expansion_point: x0,
            value_at_expansion: value,
            gradient_at_expansion: gradient,
        }
    }

    /// Evaluated in centered form so that `value(x0)` is exactly `v0`.
    pub fn value(&self, x: &Position) -> f64 {
        let d = x - self.expansion_point;
        self.value_at_expansion + self.gradient_at_expansion.dot(&d)
            - 0.5 * self.delta * d.norm_squared()
    }

    /// Unconstrained maximizer `x0 + g0 / delta`.
    pub fn peak(&self) -> Position {
        self.expansion_point + self.gradient_at_expansion / self.delta
    }
}

/// Quadratic minorizer of `2 Re{c^H f(x)}` expanded at `x0`.
pub fn build_surrogate(coeffs: DVector<C64>, angles: &PathAngles, x0: &Position) -> SurrogateQuadratic {
    let term = taylor_linear_term(coeffs, angles, x0);
    let delta = term.upsilon.curvature_bound();
    SurrogateQuadratic::from_parts(term.value, term.gradient, delta, *x0)
}

/// Half-plane `normal . x >= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearConstraint {
    pub normal: Position,
    pub offset: f64,
}

impl LinearConstraint {
    /// Signed slack, non-negative when satisfied (in units of `|normal|`).
    pub fn slack(&self, x: &Position) -> f64 {
        (self.normal.dot(x) - self.offset) / self.normal.norm()
    }
}

/// Disk `|x - center| <= radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskConstraint {
    pub center: Position,
    pub radius: f64,
}

impl DiskConstraint {
    pub fn slack(&self, x: &Position) -> f64 {
        self.radius - (x - self.center).norm()
    }
}

/// Convex constraint on one 2-D antenna position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    HalfPlane(LinearConstraint),
    Disk(DiskConstraint),
}

impl Constraint {
    /// Distance-like slack; negative means violated.
    pub fn slack(&self, x: &Position) -> f64 {
        match self {
            Constraint::HalfPlane(h) => h.slack(x),
            Constraint::Disk(d) => d.slack(x),
        }
    }
}

/// Inner linearization of `|x - other| >= d0` around `x0`:
/// `(x0 - other).(x - other) / |x0 - other| >= d0`.
///
/// By Cauchy-Schwarz every point satisfying the half-plane is at least `d0`
/// from `other`. When `x0` coincides with `other` the expansion point is first
/// nudged by `d0 * 1e-3` along a direction fixed by `pair`.
pub fn linearize_distance(
    x0: &Position,
    other: &Position,
    d0: f64,
    pair: (usize, usize),
) -> LinearConstraint {
    let mut diff = x0 - other;
    let mut norm = diff.norm();
    if norm <= f64::EPSILON * (1.0 + other.norm()) {
        // Golden-angle direction keyed on the ordered pair.
        let angle = (pair.0 * 7919 + pair.1 * 104_729) as f64 * 2.399_963_229_728_653;
        diff = d0 * 1e-3 * Position::new(angle.cos(), angle.sin());
        norm = diff.norm();
    }
    let normal = diff / norm;
    LinearConstraint {
        normal,
        offset: d0 + normal.dot(other),
    }
}

/// Convexified `g_i(x) >= alpha0` for a user whose gain is not the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCut {
    pub disk: DiskConstraint,
    /// How far the target was lowered to keep `x0` feasible (0 when it was).
    pub relaxation: f64,
}

impl GainCut {
    /// Whether the relaxation exceeded round-off and a restoration happened.
    pub fn restored(&self) -> bool {
        self.relaxation > RESTORATION_TOLERANCE
    }
}

/// Converts `g_i(x) >= alpha0` into a disk using the minorizer
/// `g_i(x0) + p^2 (s_i(x) - s_i(x0)) <= g_i(x)`, where `s_i` is the surrogate
/// of user `i`'s Taylor-bounded gain.
///
/// Returns `None` when the constraint is vacuous (zero power, or
/// `alpha0 <= 0` since gains are non-negative).
pub fn gain_constraint(
    surrogate: &SurrogateQuadratic,
    gain_at_x0: f64,
    power: f64,
    alpha0: f64,
) -> Option<GainCut> {
    if alpha0 <= 0.0 || power == 0.0 {
        return None;
    }
    let slack = gain_at_x0 - alpha0;
    let relaxation = (-slack).max(0.0);
    let slack = slack.max(0.0);
    let p2 = power * power;
    let g = surrogate.gradient_at_expansion;
    let delta = surrogate.delta;
    let radius = (g.norm_squared() / (delta * delta) + 2.0 * slack / (p2 * delta)).sqrt();
    Some(GainCut {
        disk: DiskConstraint {
            center: surrogate.expansion_point + g / delta,
            radius,
        },
        relaxation,
    })
}
