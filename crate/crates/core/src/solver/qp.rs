//! Exact solver for the 2-D concave sub-problems.
//!
//! The objective `-delta/2 |x|^2 + linear.x + constant` is isotropic, so
//! maximizing it over a convex set is the Euclidean projection of its peak
//! `linear / delta` onto that set. In the plane the projection is either the
//! peak itself, the projection onto a single constraint boundary, or a point
//! where two boundaries cross. All such candidates are enumerated and the
//! nearest feasible one wins.

use crate::surrogate::{Constraint, DiskConstraint, LinearConstraint, SurrogateQuadratic};
use crate::Position;

/// Candidates within this distance of every constraint count as feasible.
const FEASIBILITY_TOL: f64 = 1e-10;

/// One concave sub-problem over a single antenna position.
#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    pub surrogate: SurrogateQuadratic,
    /// Side of the square region `[0, A]^2`.
    pub region_size: f64,
    pub constraints: Vec<Constraint>,
}

impl SubproblemSpec {
    /// Box edges followed by the explicit constraints.
    pub fn all_constraints(&self) -> Vec<Constraint> {
        let a = self.region_size;
        let mut all = vec![
            half_plane(Position::new(1.0, 0.0), 0.0),
            half_plane(Position::new(-1.0, 0.0), -a),
            half_plane(Position::new(0.0, 1.0), 0.0),
            half_plane(Position::new(0.0, -1.0), -a),
        ];
        all.extend_from_slice(&self.constraints);
        all
    }

    /// Smallest slack over box and constraints.
    pub fn min_slack(&self, x: &Position) -> f64 {
        self.all_constraints()
            .iter()
            .map(|c| c.slack(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_feasible(&self, x: &Position, tol: f64) -> bool {
        self.min_slack(x) >= -tol
    }
}

fn half_plane(normal: Position, offset: f64) -> Constraint {
    Constraint::HalfPlane(LinearConstraint { normal, offset })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub point: Position,
    pub objective: f64,
    /// No candidate, not even the expansion point, was feasible.
    pub restored: bool,
}

/// Global maximizer of the surrogate over box and constraints.
pub fn qp_solve_2d(spec: &SubproblemSpec) -> QpSolution {
    let constraints = spec.all_constraints();
    let target = spec.surrogate.peak();
    let x0 = spec.surrogate.expansion_point;
    let feasible = |x: &Position| constraints.iter().all(|c| c.slack(x) >= -FEASIBILITY_TOL);

    let mut best: Option<(f64, Position)> = None;
    let mut consider = |x: Position| {
        if !x.x.is_finite() || !x.y.is_finite() || !feasible(&x) {
            return;
        }
        let d = (x - target).norm_squared();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, x));
        }
    };

    consider(target);
    for c in &constraints {
        if let Some(p) = project_onto_boundary(c, &target) {
            consider(p);
        }
    }
    for i in 0..constraints.len() {
        for j in i + 1..constraints.len() {
            for p in boundary_intersections(&constraints[i], &constraints[j]) {
                consider(p);
            }
        }
    }
    consider(x0);

    let (point, restored) = match best {
        Some((_, p)) => (clamp_to_box(p, spec.region_size), false),
        None => (x0, true),
    };
    QpSolution {
        point,
        objective: spec.surrogate.value(&point),
        restored,
    }
}

fn clamp_to_box(p: Position, a: f64) -> Position {
    Position::new(p.x.clamp(0.0, a), p.y.clamp(0.0, a))
}

fn project_onto_boundary(c: &Constraint, t: &Position) -> Option<Position> {
    match c {
        Constraint::HalfPlane(h) => {
            let n2 = h.normal.norm_squared();
            Some(t + (h.offset - h.normal.dot(t)) / n2 * h.normal)
        }
        Constraint::Disk(d) => {
            let v = t - d.center;
            let len = v.norm();
            if len == 0.0 {
                // Peak at the center is feasible whenever the disk is non-empty.
                return None;
            }
            Some(d.center + d.radius / len * v)
        }
    }
}

/// Line `normal . x = offset` as point + unit direction.
fn line_parts(h: &LinearConstraint) -> (Position, Position) {
    let n2 = h.normal.norm_squared();
    let p0 = h.offset / n2 * h.normal;
    let dir = Position::new(-h.normal.y, h.normal.x) / n2.sqrt();
    (p0, dir)
}

fn boundary_intersections(a: &Constraint, b: &Constraint) -> Vec<Position> {
    match (a, b) {
        (Constraint::HalfPlane(h1), Constraint::HalfPlane(h2)) => line_line(h1, h2).into_iter().collect(),
        (Constraint::HalfPlane(h), Constraint::Disk(d)) | (Constraint::Disk(d), Constraint::HalfPlane(h)) => {
            line_circle(h, d)
        }
        (Constraint::Disk(d1), Constraint::Disk(d2)) => circle_circle(d1, d2),
    }
}

fn line_line(a: &LinearConstraint, b: &LinearConstraint) -> Option<Position> {
    let det = a.normal.x * b.normal.y - a.normal.y * b.normal.x;
    let scale = a.normal.norm() * b.normal.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    Some(Position::new(
        (a.offset * b.normal.y - b.offset * a.normal.y) / det,
        (a.normal.x * b.offset - b.normal.x * a.offset) / det,
    ))
}

fn line_circle(h: &LinearConstraint, d: &DiskConstraint) -> Vec<Position> {
    let (p0, dir) = line_parts(h);
    // Closest point of the line to the center, then step along the chord.
    let foot = p0 + dir * dir.dot(&(d.center - p0));
    let dist2 = (foot - d.center).norm_squared();
    let r2 = d.radius * d.radius;
    if dist2 > r2 {
        return Vec::new();
    }
    let half = (r2 - dist2).sqrt();
    vec![foot + half * dir, foot - half * dir]
}

fn circle_circle(a: &DiskConstraint, b: &DiskConstraint) -> Vec<Position> {
    let v = b.center - a.center;
    let dist = v.norm();
    if dist == 0.0 || dist > a.radius + b.radius || dist < (a.radius - b.radius).abs() {
        return Vec::new();
    }
    let along = (a.radius * a.radius - b.radius * b.radius + dist * dist) / (2.0 * dist);
    let h2 = (a.radius * a.radius - along * along).max(0.0);
    let u = v / dist;
    let mid = a.center + along * u;
    let perp = Position::new(-u.y, u.x) * h2.sqrt();
    vec![mid + perp, mid - perp]
}

/// Distance of `target - x` from the cone of outward normals of the
/// constraints active at `x` (slack below `active_tol`). Zero certifies `x` as
/// the projection of the peak, i.e. the QP optimum.
pub fn kkt_residual(spec: &SubproblemSpec, x: &Position, active_tol: f64) -> f64 {
    let r = spec.surrogate.peak() - x;
    let normals: Vec<Position> = spec
        .all_constraints()
        .iter()
        .filter(|c| c.slack(x).abs() <= active_tol)
        .filter_map(|c| {
            let n = match c {
                Constraint::HalfPlane(h) => -h.normal,
                Constraint::Disk(d) => x - d.center,
            };
            let len = n.norm();
            (len > 0.0).then(|| n / len)
        })
        .collect();
    let mut best = r.norm();
    for a in &normals {
        let mu = r.dot(a).max(0.0);
        best = best.min((r - mu * a).norm());
    }
    for i in 0..normals.len() {
        for j in i + 1..normals.len() {
            let (a, b) = (normals[i], normals[j]);
            let det = a.x * b.y - a.y * b.x;
            if det.abs() < 1e-12 {
                continue;
            }
            let mu_a = (r.x * b.y - r.y * b.x) / det;
            let mu_b = (a.x * r.y - a.y * r.x) / det;
            if mu_a >= 0.0 && mu_b >= 0.0 {
                best = best.min((r - mu_a * a - mu_b * b).norm());
            }
        }
    }
    best
}
