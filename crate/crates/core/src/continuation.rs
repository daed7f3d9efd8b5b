//! Analytic continuation of the fundamental matrix along paths in the
//! punctured plane.
//!
//! The solution `Y` with `Y(start) = Id` is carried along a route made of
//! straight segments and circular arcs. Each step expands `Y` in a local
//! Taylor series about the current point; the step length never exceeds a
//! quarter of the distance to the nearest singularity, so every series
//! converges at least like `4⁻ᵐ`.
//!
//! Convention: for a closed loop `γ` at the basepoint the returned matrix is
//! `T_γ` with `Σ̃ = Σ·T_γ`. Consequently transporting along `γ₁` followed by
//! `γ₂` gives `T_γ₂ · T_γ₁`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuchsian::FuchsianSystem;
use crate::linalg::{self, serde_matrix, CMatrix};

/// Step length cap as a fraction of the distance to the nearest singularity.
pub const STEP_FRACTION: f64 = 0.25;
/// Minimum Taylor order per step.
pub const MIN_ORDER: usize = 8;
/// Extra factor on the per-step tolerance; errors are amplified along paths
/// where the solution grows.
pub const STEP_SAFETY: f64 = 1e-2;
const MAX_TERMS: usize = 120;
const MAX_HALVINGS: usize = 30;
/// Steps allowed per transport before giving up.
pub const STEP_BUDGET: usize = 1_000_000;
/// Clearance below which a path is rejected, relative to the system's length scale.
pub const MIN_CLEARANCE: f64 = 1e-10;
/// Detour threshold as a fraction of the loop radius.
pub const DETOUR_FRACTION: f64 = 0.1;
const MAX_DETOUR_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "ccw")]
    Counterclockwise,
    #[serde(rename = "cw")]
    Clockwise,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Counterclockwise => 1.0,
            Orientation::Clockwise => -1.0,
        }
    }
}

/// Polygonal path through at least two waypoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSpec {
    waypoints: Vec<Complex64>,
}

impl PathSpec {
    pub fn new(waypoints: Vec<Complex64>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Validation("a path needs at least two waypoints".into()));
        }
        if waypoints.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Validation("waypoint is not finite".into()));
        }
        if let Some(k) = waypoints.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!(
                "waypoints {k} and {} coincide",
                k + 1
            )));
        }
        Ok(PathSpec { waypoints })
    }

    pub fn waypoints(&self) -> &[Complex64] {
        &self.waypoints
    }

    pub fn is_closed(&self) -> bool {
        self.waypoints.first() == self.waypoints.last()
    }

    pub fn reversed(&self) -> PathSpec {
        let mut waypoints = self.waypoints.clone();
        waypoints.reverse();
        PathSpec { waypoints }
    }

    /// This path followed by `other`, which must start where this one ends.
    pub fn then(&self, other: &PathSpec) -> Result<PathSpec> {
        if self.waypoints.last() != other.waypoints.first() {
            return Err(Error::Validation("paths do not join".into()));
        }
        let mut waypoints = self.waypoints.clone();
        waypoints.extend_from_slice(&other.waypoints[1..]);
        PathSpec::new(waypoints)
    }

    pub fn to_route(&self) -> Route {
        Route {
            segments: self
                .waypoints
                .windows(2)
                .map(|w| Segment::Line { from: w[0], to: w[1] })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LoopSpec {
    /// Lasso: follow `approach` from the basepoint to a point on the circle,
    /// go once around `around`, and retrace the approach.
    Circle {
        around: usize,
        radius: f64,
        orientation: Orientation,
        approach: Vec<Complex64>,
    },
    Polygon { path: PathSpec },
}

impl LoopSpec {
    pub fn to_route(&self, system: &FuchsianSystem) -> Result<Route> {
        match self {
            LoopSpec::Polygon { path } => {
                if !path.is_closed() {
                    return Err(Error::Validation("polygon loop is not closed".into()));
                }
                Ok(path.to_route())
            }
            LoopSpec::Circle {
                around,
                radius,
                orientation,
                approach,
            } => {
                let pts = system.singularities();
                let center = pts
                    .get(*around)
                    .ok_or(Error::IndexOutOfRange {
                        index: *around,
                        count: pts.len(),
                    })?
                    .point;
                if !(*radius > 0.0) {
                    return Err(Error::Validation("loop radius must be positive".into()));
                }
                for (j, s) in pts.iter().enumerate() {
                    if j != *around && (s.point - center).norm() <= *radius {
                        return Err(Error::Validation(format!(
                            "circle around {around} encloses singularity {j}"
                        )));
                    }
                }
                let entry = *approach
                    .last()
                    .ok_or_else(|| Error::Validation("empty approach".into()))?;
                let mut segments: Vec<Segment> = approach
                    .windows(2)
                    .map(|w| Segment::Line { from: w[0], to: w[1] })
                    .collect();
                let back: Vec<Segment> = segments.iter().rev().map(Segment::reversed).collect();
                segments.push(Segment::Arc {
                    center,
                    radius: *radius,
                    start: (entry - center).arg(),
                    sweep: orientation.sign() * TAU,
                });
                segments.extend(back);
                Ok(Route { segments })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line { from: Complex64, to: Complex64 },
    Arc {
        center: Complex64,
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

impl Segment {
    fn at(&self, s: f64) -> Complex64 {
        match *self {
            Segment::Line { from, to } => {
                if s >= 1.0 {
                    to
                } else {
                    from + (to - from) * s
                }
            }
            Segment::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                // a full turn closes exactly on its starting point
                let angle = if s >= 1.0 && sweep.abs() == TAU {
                    start
                } else {
                    start + sweep * s
                };
                center + Complex64::from_polar(radius, angle)
            }
        }
    }

    fn length(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { from, to } => Segment::Line { from: to, to: from },
            Segment::Arc {
                center,
                radius,
                start,
                sweep,
            } => Segment::Arc {
                center,
                radius,
                start: start + sweep,
                sweep: -sweep,
            },
        }
    }

    /// Exact distance from `p` to the segment.
    fn distance_to(&self, p: Complex64) -> f64 {
        match *self {
            Segment::Line { from, to } => point_segment_distance(p, from, to),
            Segment::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let rel = p - center;
                let ends = (p - self.at(0.0)).norm().min((p - self.at(1.0)).norm());
                if rel.norm() == 0.0 {
                    return radius;
                }
                if sweep.abs() >= TAU {
                    return (rel.norm() - radius).abs();
                }
                // angular offset of p measured from the start in the sweep direction
                let offset = ((rel.arg() - start) * sweep.signum()).rem_euclid(TAU);
                if offset <= sweep.abs() {
                    (rel.norm() - radius).abs()
                } else {
                    ends
                }
            }
        }
    }
}

fn point_segment_distance(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

/// Sequence of segments traversed in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Route {
    pub segments: Vec<Segment>,
}

impl Route {
    pub fn start(&self) -> Option<Complex64> {
        self.segments.first().map(|s| s.at(0.0))
    }

    pub fn end(&self) -> Option<Complex64> {
        self.segments.last().map(|s| s.at(1.0))
    }

    pub fn then(mut self, other: Route) -> Route {
        self.segments.extend(other.segments);
        self
    }

    pub fn reversed(&self) -> Route {
        Route {
            segments: self.segments.iter().rev().map(Segment::reversed).collect(),
        }
    }

    /// Smallest distance between the route and any singular point, with the
    /// index of that point.
    pub fn clearance(&self, system: &FuchsianSystem) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for seg in &self.segments {
            for (i, p) in system.points().enumerate() {
                let d = seg.distance_to(p);
                if d < best.1 {
                    best = (i, d);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportResult {
    #[serde(with = "serde_matrix")]
    pub matrix: CMatrix,
    pub error_estimate: f64,
    pub steps_taken: usize,
    pub min_clearance: f64,
    /// 2-norm condition number of the final matrix.
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonodromyGroup {
    #[serde(with = "serde_matrix::vec")]
    pub generators: Vec<CMatrix>,
    /// Transported directly along the large clockwise circle.
    #[serde(with = "serde_matrix")]
    pub at_infinity: CMatrix,
    pub tolerance_used: f64,
    /// Error estimates for each generator, then for `at_infinity`.
    pub error_estimates: Vec<f64>,
    /// Generator indices in the order whose product is `T∞⁻¹`.
    pub relation_order: Vec<usize>,
    /// `‖T_{r₀}·T_{r₁}·…·T∞ − Id‖` in the max-entry norm, `r` = `relation_order`.
    pub product_residual: f64,
    /// Bound on `product_residual` implied by the error estimates; a larger
    /// residual means the loops do not compose as assumed.
    pub product_bound: f64,
    pub loops: Vec<LoopSpec>,
}

/// Transport along an open or closed polygonal path.
pub fn transport(system: &FuchsianSystem, path: &PathSpec, tol: f64) -> Result<TransportResult> {
    transport_route(system, &path.to_route(), tol)
}

pub fn transport_loop(
    system: &FuchsianSystem,
    spec: &LoopSpec,
    tol: f64,
) -> Result<TransportResult> {
    transport_route(system, &spec.to_route(system)?, tol)
}

/// Walk the step geometry without integrating; returns the step count.
fn count_steps(system: &FuchsianSystem, route: &Route) -> usize {
    let mut count = 0;
    for seg in &route.segments {
        let mut s = 0.0;
        while s < 1.0 {
            s = next_parameter(system, seg, s, 1.0);
            count += 1;
            if count > STEP_BUDGET {
                return count;
            }
        }
    }
    count
}

/// Parameter of the next step target from `s`, for a step scaled by `shrink`.
fn next_parameter(system: &FuchsianSystem, seg: &Segment, s: f64, shrink: f64) -> f64 {
    let z = seg.at(s);
    let d = system.nearest_singularity(z).map_or(f64::INFINITY, |(_, d)| d);
    let len = seg.length();
    let step = STEP_FRACTION * d * shrink;
    if !step.is_finite() || step >= len * (1.0 - s) {
        return 1.0;
    }
    (s + step / len).min(1.0)
}

pub fn transport_route(system: &FuchsianSystem, route: &Route, tol: f64) -> Result<TransportResult> {
    if !(tol > 0.0) {
        return Err(Error::Validation("tolerance must be positive".into()));
    }
    let n = system.dimension();
    let (index, clearance) = route.clearance(system);
    let minimum = MIN_CLEARANCE * system.length_scale();
    if clearance <= minimum {
        return Err(Error::PathTooCloseToSingularity {
            index,
            clearance,
            minimum,
        });
    }
    let expected = count_steps(system, route);
    if expected > STEP_BUDGET {
        return Err(Error::ToleranceNotMet {
            tol,
            budget: STEP_BUDGET,
        });
    }
    let step_tol = (STEP_SAFETY * tol / expected.max(1) as f64).max(f64::EPSILON);
    let stepper = TaylorStepper::new(system);

    let mut y = Mat::identity(n);
    let mut steps = 0usize;
    let mut weighted_error = 0.0;
    for seg in &route.segments {
        let mut s = 0.0;
        let mut z = seg.at(0.0);
        while s < 1.0 {
            let mut shrink = 1.0;
            let mut halvings = 0;
            loop {
                let s_next = next_parameter(system, seg, s, shrink);
                let target = seg.at(s_next);
                match stepper.step(&y, z, target - z, step_tol) {
                    Some((y_next, local)) => {
                        let cond = y.frobenius() * y.inverse_frobenius().unwrap_or(f64::INFINITY);
                        weighted_error += local * cond;
                        y = y_next;
                        z = target;
                        s = s_next;
                        break;
                    }
                    None => {
                        halvings += 1;
                        if halvings > MAX_HALVINGS {
                            return Err(Error::ToleranceNotMet {
                                tol,
                                budget: STEP_BUDGET,
                            });
                        }
                        shrink *= 0.5;
                    }
                }
            }
            steps += 1;
            if steps > STEP_BUDGET {
                return Err(Error::ToleranceNotMet {
                    tol,
                    budget: STEP_BUDGET,
                });
            }
        }
    }
    let matrix = y.to_cmatrix();
    if !linalg::is_finite(&matrix) {
        return Err(Error::ToleranceNotMet {
            tol,
            budget: STEP_BUDGET,
        });
    }
    let condition = linalg::condition_number(&matrix);
    Ok(TransportResult {
        error_estimate: weighted_error * linalg::frobenius(&matrix),
        matrix,
        steps_taken: steps,
        min_clearance: clearance,
        condition,
    })
}

/// Row-major n×n scratch matrix for the inner loop.
#[derive(Clone)]
struct Mat {
    n: usize,
    data: Vec<Complex64>,
}

impl Mat {
    fn zeros(n: usize) -> Self {
        Mat {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    fn from_cmatrix(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = m[(i, j)];
            }
        }
        out
    }

    fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.data[i * self.n + j])
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn inverse_frobenius(&self) -> Option<f64> {
        let inv = self.to_cmatrix().lu().try_inverse()?;
        Some(linalg::frobenius(&inv))
    }

    /// `self += a · b`
    fn add_product(&mut self, a: &Mat, b: &Mat) {
        let n = self.n;
        for i in 0..n {
            for k in 0..n {
                let aik = a.data[i * n + k];
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    self.data[i * n + j] += aik * b.data[k * n + j];
                }
            }
        }
    }
}

struct TaylorStepper {
    points: Vec<Complex64>,
    residues: Vec<Mat>,
    n: usize,
}

impl TaylorStepper {
    fn new(system: &FuchsianSystem) -> Self {
        TaylorStepper {
            points: system.points().collect(),
            residues: system
                .singularities()
                .iter()
                .map(|s| Mat::from_cmatrix(&s.residue))
                .collect(),
            n: system.dimension(),
        }
    }

    /// One step from `center` by `h`. With `z = center + h·t`,
    /// `dY/dt = Σₖ Pₖ tᵏ · Y` where `Pₖ = Σᵢ Aᵢ qᵢ (−qᵢ)ᵏ`, `qᵢ = h/(center − zᵢ)`,
    /// so the scaled coefficients obey `(m+1)·Ŷₘ₊₁ = Σₖ Pₖ Ŷₘ₋ₖ`.
    ///
    /// Returns the new value and the relative local error estimate, or `None`
    /// when the series has not converged within `MAX_TERMS` terms.
    fn step(&self, y: &Mat, center: Complex64, h: Complex64, step_tol: f64) -> Option<(Mat, f64)> {
        let n = self.n;
        let q: Vec<Complex64> = self.points.iter().map(|&p| h / (center - p)).collect();
        let mut powers = q.clone();
        let y_norm = y.frobenius().max(f64::MIN_POSITIVE);

        let mut p_terms: Vec<Mat> = Vec::with_capacity(MAX_TERMS);
        let mut y_terms: Vec<Mat> = Vec::with_capacity(MAX_TERMS + 1);
        y_terms.push(y.clone());
        let mut sum = y.clone();
        let mut magnitude_sum = y_norm;
        let mut previous = f64::INFINITY;

        for m in 0..MAX_TERMS {
            let mut pk = Mat::zeros(n);
            for (i, a) in self.residues.iter().enumerate() {
                let w = powers[i];
                for (dst, src) in pk.data.iter_mut().zip(&a.data) {
                    *dst += *src * w;
                }
                powers[i] = -powers[i] * q[i];
            }
            p_terms.push(pk);

            let mut next = Mat::zeros(n);
            for k in 0..=m {
                next.add_product(&p_terms[k], &y_terms[m - k]);
            }
            let inv = 1.0 / (m + 1) as f64;
            for z in next.data.iter_mut() {
                *z *= inv;
            }
            let size = next.frobenius();
            for (acc, z) in sum.data.iter_mut().zip(&next.data) {
                *acc += *z;
            }
            magnitude_sum += size;
            y_terms.push(next);

            let order = m + 1;
            if order >= MIN_ORDER && size <= step_tol * y_norm && previous <= step_tol * y_norm {
                let truncation = size / y_norm;
                let rounding = f64::EPSILON * magnitude_sum / y_norm;
                return Some((sum, truncation + rounding));
            }
            previous = size;
        }
        None
    }
}

/// Order in which the generators multiply to `T∞⁻¹`, and the direction of
/// the approach to the loop at infinity. The file order is kept when it is
/// already clockwise as seen from the basepoint; otherwise the clockwise
/// order starts after the widest angular gap, which the approach bisects.
pub fn relation_order(system: &FuchsianSystem) -> (Vec<usize>, f64) {
    let b = system.basepoint();
    let angles: Vec<f64> = system.points().map(|p| (p - b).arg()).collect();
    let dist: Vec<f64> = system.points().map(|p| (p - b).norm()).collect();
    let k = angles.len();
    if k == 0 {
        return (Vec::new(), 0.0);
    }
    if k == 1 {
        return (vec![0], angles[0] + PI);
    }
    // clockwise offset from z₀
    let offset = |i: usize| (angles[0] - angles[i]).rem_euclid(TAU);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| offset(i).total_cmp(&offset(j)).then(dist[i].total_cmp(&dist[j])));
    // clockwise gap from order[m] to the next point
    let gap_after = |m: usize| {
        let g = (angles[order[m]] - angles[order[(m + 1) % k]]).rem_euclid(TAU);
        if g == 0.0 && m == k - 1 { TAU } else { g }
    };
    let start = if order.iter().copied().eq(0..k) {
        0
    } else {
        (0..k)
            .max_by(|&a, &c| gap_after(a).total_cmp(&gap_after(c)).then(c.cmp(&a)))
            .map_or(0, |m| (m + 1) % k)
    };
    let last = (start + k - 1) % k;
    let direction = angles[order[last]] - gap_after(last) / 2.0;
    order.rotate_left(start);
    (order, direction)
}

/// Radius used for the standard loop around singularity `index`: half the
/// distance to the nearest other singular point or the basepoint.
pub fn standard_radius(system: &FuchsianSystem, index: usize) -> Result<f64> {
    let pts = system.singularities();
    let center = pts
        .get(index)
        .ok_or(Error::IndexOutOfRange {
            index,
            count: pts.len(),
        })?
        .point;
    let nearest = pts
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != index)
        .map(|(_, s)| (s.point - center).norm())
        .fold((system.basepoint() - center).norm(), f64::min);
    Ok(0.5 * nearest)
}

/// Loop from the basepoint encircling singularity `index` once.
///
/// Straight approach to the nearest point of the circle, full turn, straight
/// return. An approach segment that passes within `DETOUR_FRACTION·radius`
/// of another singularity is bent: its midpoint is pushed perpendicular to
/// the segment, away from the offending point, and the two halves are
/// checked again.
pub fn standard_loop(
    system: &FuchsianSystem,
    index: usize,
    orientation: Orientation,
) -> Result<LoopSpec> {
    let radius = standard_radius(system, index)?;
    let center = system.singularities()[index].point;
    let b = system.basepoint();
    let entry = center + (b - center) * (radius / (b - center).norm());
    let mut approach = vec![b];
    approach.extend(clear_polyline(
        system,
        b,
        entry,
        DETOUR_FRACTION * radius,
        index,
        0,
    )?);
    Ok(LoopSpec::Circle {
        around: index,
        radius,
        orientation,
        approach,
    })
}

/// Waypoints after `a` leading to `b` that keep `threshold` away from every
/// singularity except `target`.
fn clear_polyline(
    system: &FuchsianSystem,
    a: Complex64,
    b: Complex64,
    threshold: f64,
    target: usize,
    depth: usize,
) -> Result<Vec<Complex64>> {
    let offending = system
        .points()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(j, p)| (j, p, point_segment_distance(p, a, b)))
        .filter(|&(_, _, d)| d < threshold)
        .min_by(|x, y| x.2.total_cmp(&y.2));
    let Some((_, p, _)) = offending else {
        return Ok(vec![b]);
    };
    if depth >= MAX_DETOUR_DEPTH {
        return Err(Error::NoClearPath { index: target });
    }
    let d = b - a;
    let normal = Complex64::new(0.0, 1.0) * d / d.norm();
    let side = ((p - a) * d.conj()).im;
    // p to the left of a→b: push right; on the line: push left
    let push = if side > 0.0 { -normal } else { normal };
    let mid = (a + b) * 0.5;
    let mut offset = 2.0 * threshold;
    for _ in 0..40 {
        let m = mid + push * offset;
        let clear_point = system
            .points()
            .enumerate()
            .all(|(j, q)| j == target || (q - m).norm() >= threshold);
        let swept = system
            .points()
            .enumerate()
            .any(|(j, q)| j != target && in_triangle(q, a, m, b));
        let halves_clear = point_segment_distance(p, a, m) >= threshold
            && point_segment_distance(p, m, b) >= threshold;
        if clear_point && !swept && halves_clear {
            let mut out = clear_polyline(system, a, m, threshold, target, depth + 1)?;
            out.extend(clear_polyline(system, m, b, threshold, target, depth + 1)?);
            return Ok(out);
        }
        offset *= 1.5;
    }
    Err(Error::NoClearPath { index: target })
}

fn in_triangle(q: Complex64, a: Complex64, b: Complex64, c: Complex64) -> bool {
    let cross = |u: Complex64, v: Complex64| (u.conj() * v).im;
    let d1 = cross(b - a, q - a);
    let d2 = cross(c - b, q - b);
    let d3 = cross(a - c, q - c);
    (d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || (d1 < 0.0 && d2 < 0.0 && d3 < 0.0)
}

/// Route from the basepoint around every singularity clockwise (positively
/// about infinity) and back.
pub fn infinity_route(system: &FuchsianSystem) -> Result<Route> {
    let b = system.basepoint();
    let far = system
        .points()
        .map(|p| (p - b).norm())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let radius = 2.0 * far;
    let (_, direction) = relation_order(system);
    let entry = b + Complex64::from_polar(radius, direction);
    let separation = system
        .points()
        .enumerate()
        .flat_map(|(i, p)| {
            system
                .points()
                .skip(i + 1)
                .chain(std::iter::once(b))
                .map(move |q| (p - q).norm())
        })
        .fold(f64::INFINITY, f64::min);
    let threshold = DETOUR_FRACTION * 0.5 * separation.min(far);
    let mut waypoints = vec![b];
    waypoints.extend(clear_polyline(system, b, entry, threshold, usize::MAX, 0)?);
    let approach = PathSpec::new(waypoints)?.to_route();
    let arc = Route {
        segments: vec![Segment::Arc {
            center: b,
            radius,
            start: direction,
            sweep: -TAU,
        }],
    };
    let back = approach.reversed();
    Ok(approach.then(arc).then(back))
}

/// Generators along the counterclockwise standard loops (file order) and the
/// loop at infinity, transported in parallel. The product relation is
/// evaluated in `relation_order` and reported with its residual.
pub fn monodromy_generators(system: &FuchsianSystem, tol: f64) -> Result<MonodromyGroup> {
    let k = system.singularities().len();
    let loops = (0..k)
        .map(|i| standard_loop(system, i, Orientation::Counterclockwise))
        .collect::<Result<Vec<_>>>()?;
    let mut routes = loops
        .iter()
        .map(|l| l.to_route(system))
        .collect::<Result<Vec<_>>>()?;
    routes.push(infinity_route(system)?);

    let results = routes
        .par_iter()
        .map(|r| transport_route(system, r, tol))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut matrices: Vec<CMatrix> = results.iter().map(|r| r.matrix.clone()).collect();
    let error_estimates = results.iter().map(|r| r.error_estimate).collect();
    let at_infinity = matrices.pop().expect("infinity route present");
    let n = system.dimension();
    let (relation_order, _) = relation_order(system);
    let product = ordered_product(&matrices, &relation_order, n);
    let product_residual = linalg::max_abs(&(product * &at_infinity - linalg::identity(n)));
    let scale: f64 = matrices
        .iter()
        .chain(std::iter::once(&at_infinity))
        .map(|m| linalg::max_abs(m).max(1.0))
        .product();
    let product_bound = scale * (10.0 * tol + results.iter().map(|r| r.error_estimate).sum::<f64>());
    Ok(MonodromyGroup {
        generators: matrices,
        at_infinity,
        tolerance_used: tol,
        error_estimates,
        relation_order,
        product_residual,
        product_bound,
        loops,
    })
}

/// `T_{r₀}·T_{r₁}·…` for the index order `r`.
pub fn ordered_product(generators: &[CMatrix], order: &[usize], n: usize) -> CMatrix {
    order
        .iter()
        .fold(linalg::identity(n), |acc, &i| acc * &generators[i])
}

/// Inverse of the ordered product of the generators: the monodromy at
/// infinity implied by the product relation.
pub fn monodromy_at_infinity(group: &MonodromyGroup) -> Result<CMatrix> {
    let n = group.at_infinity.nrows();
    linalg::inverse(&ordered_product(&group.generators, &group.relation_order, n))
}

/// Loop file: either `{"around": i, "orientation": "ccw"|"cw"}` or
/// `{"waypoints": [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum LoopRequest {
    Around {
        around: usize,
        #[serde(default = "default_orientation")]
        orientation: Orientation,
    },
    Waypoints { waypoints: Vec<Complex64> },
}

fn default_orientation() -> Orientation {
    Orientation::Counterclockwise
}

pub fn parse_loop(text: &[u8]) -> Result<LoopRequest> {
    serde_json::from_slice(text).map_err(|e| crate::fuchsian::json_error(&e))
}

impl LoopRequest {
    pub fn to_route(&self, system: &FuchsianSystem) -> Result<Route> {
        match self {
            LoopRequest::Around { around, orientation } => {
                standard_loop(system, *around, *orientation)?.to_route(system)
            }
            LoopRequest::Waypoints { waypoints } => Ok(PathSpec::new(waypoints.clone())?.to_route()),
        }
    }
}
