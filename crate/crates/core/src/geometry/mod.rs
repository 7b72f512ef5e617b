//! Closed smooth boundary curves, arc-length-uniform sampling, rod
//! placement on a lattice inside a curve, and point-in-domain tests.
//!
//! The only curve family is a cosine-lobed polar curve ("trefoil"):
//!
//! ```text
//! r(theta) = mean_radius + lobe_amplitude * cos(lobes * theta)
//! p(theta) = center + r(theta) * (cos(theta + rotation), sin(theta + rotation))
//! ```
//!
//! With `lobe_amplitude < mean_radius` the radius stays positive, so the
//! curve is star-shaped about its center and therefore simple, and it is
//! analytic, hence C1. `lobe_amplitude = 0` degenerates to a circle.

mod rods;

pub use rods::fill_with_rods;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Oversampling factor of the dense quadrature/distance grid relative to
/// the curve's own sample count.
const DENSE_FACTOR: usize = 32;

// ---------------------------------------------------------------------
// Plane vectors
// ---------------------------------------------------------------------

/// A point or vector in the plane. Serializes as a two-element array.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector at the given polar angle.
    pub fn unit_from_angle(angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2 { x: c, y: s }
    }

    /// Rotation by `angle` about the origin.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2 {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Vec2 {
        Vec2 { x: a[0], y: a[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> [f64; 2] {
        [v.x, v.y]
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

// ---------------------------------------------------------------------
// Boundary curves
// ---------------------------------------------------------------------

/// Three-valued containment answer. Points closer to the sampled polygon
/// than one mean sample spacing are classified `NearBoundary`, because at
/// that distance the polygonal approximation cannot distinguish the two
/// sides reliably and downstream representations degrade anyway.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Outside,
    NearBoundary,
}

/// A closed smooth curve with `M` arc-length-uniform sample points.
///
/// Holds both the coarse sample set (the "boundary points" every fit works
/// with) and a dense polygon (32x oversampled) used for accurate distance
/// and containment queries during geometry construction.
#[derive(Clone, Debug)]
pub struct BoundaryCurve {
    mean_radius: f64,
    lobe_amplitude: f64,
    lobes: u32,
    center: Vec2,
    rotation: f64,
    samples: Vec<Vec2>,
    /// Cumulative arc length at each sample: m * perimeter / M.
    cumulative_arc: Vec<f64>,
    perimeter: f64,
    /// Dense polygon for distance queries (DENSE_FACTOR * M points).
    dense: Vec<Vec2>,
    /// Parameter value theta_i and cumulative arc length at each dense
    /// grid node (grid has DENSE_FACTOR * M + 1 nodes covering [0, 2pi]).
    dense_theta: Vec<f64>,
    dense_arc: Vec<f64>,
}

/// Builds the cosine-lobed curve
/// r(theta) = mean_radius + lobe_amplitude cos(lobes theta), rotated by
/// `rotation` about its center, translated to `center`, and sampled
/// arc-length-uniformly at `m` points.
pub fn make_trefoil(
    mean_radius: f64,
    lobe_amplitude: f64,
    lobes: u32,
    center: Vec2,
    rotation: f64,
    m: usize,
) -> Result<BoundaryCurve> {
    if !mean_radius.is_finite() || mean_radius <= 0.0 {
        return Err(Error::Geometry(format!(
            "mean_radius must be positive, got {mean_radius}"
        )));
    }
    if !lobe_amplitude.is_finite() || lobe_amplitude < 0.0 {
        return Err(Error::Geometry(format!(
            "lobe_amplitude must be non-negative, got {lobe_amplitude}"
        )));
    }
    if lobe_amplitude >= mean_radius {
        return Err(Error::Geometry(format!(
            "lobe_amplitude {lobe_amplitude} >= mean_radius {mean_radius}: \
             the polar radius would vanish and the curve self-intersect"
        )));
    }
    if !rotation.is_finite() || !center.is_finite() {
        return Err(Error::Geometry(
            "rotation and center must be finite".into(),
        ));
    }
    if m < 16 {
        return Err(Error::Config(format!(
            "curve sample count must be at least 16, got {m}"
        )));
    }

    // Dense parameter grid over [0, 2pi] and cumulative arc length by the
    // trapezoid rule on the analytic speed |dp/dtheta| = sqrt(r^2 + r'^2).
    let n_dense = DENSE_FACTOR * m;
    let radius_at = |theta: f64| mean_radius + lobe_amplitude * (lobes as f64 * theta).cos();
    let speed_at = |theta: f64| {
        let r = radius_at(theta);
        let dr = -lobe_amplitude * lobes as f64 * (lobes as f64 * theta).sin();
        (r * r + dr * dr).sqrt()
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let dtheta = two_pi / n_dense as f64;
    let mut dense_theta = Vec::with_capacity(n_dense + 1);
    let mut dense_arc = Vec::with_capacity(n_dense + 1);
    let mut acc = 0.0;
    let mut prev_speed = speed_at(0.0);
    dense_theta.push(0.0);
    dense_arc.push(0.0);
    for i in 1..=n_dense {
        let theta = two_pi * i as f64 / n_dense as f64;
        let speed = speed_at(theta);
        acc += 0.5 * dtheta * (prev_speed + speed);
        dense_theta.push(theta);
        dense_arc.push(acc);
        prev_speed = speed;
    }
    let perimeter = acc;

    let point_at = |theta: f64| {
        center + Vec2::unit_from_angle(theta + rotation) * radius_at(theta)
    };

    // Invert s(theta) at the M uniform arc targets by monotone linear
    // interpolation on the dense table.
    let mut samples = Vec::with_capacity(m);
    let mut cumulative_arc = Vec::with_capacity(m);
    let mut segment = 0usize;
    for i in 0..m {
        let target = perimeter * i as f64 / m as f64;
        while segment + 1 < dense_arc.len() && dense_arc[segment + 1] < target {
            segment += 1;
        }
        let (s0, s1) = (dense_arc[segment], dense_arc[segment + 1]);
        let (t0, t1) = (dense_theta[segment], dense_theta[segment + 1]);
        let frac = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
        let theta = t0 + frac * (t1 - t0);
        samples.push(point_at(theta));
        cumulative_arc.push(target);
    }

    let dense = dense_theta[..n_dense]
        .iter()
        .map(|&theta| point_at(theta))
        .collect();

    Ok(BoundaryCurve {
        mean_radius,
        lobe_amplitude,
        lobes,
        center,
        rotation,
        samples,
        cumulative_arc,
        perimeter,
        dense,
        dense_theta,
        dense_arc,
    })
}

/// Scales a curve about its own center by `ratio`. Sample count and
/// parametrization are preserved; for a polar curve the scaling is exact
/// (every stored point moves radially), so homothety(homothety(c, a), 1/a)
/// reproduces the samples to rounding.
pub fn homothety(curve: &BoundaryCurve, ratio: f64) -> Result<BoundaryCurve> {
    if !ratio.is_finite() || ratio <= 0.0 {
        return Err(Error::Geometry(format!(
            "homothety ratio must be positive, got {ratio}"
        )));
    }
    let scale_point = |p: &Vec2| curve.center + (*p - curve.center) * ratio;
    Ok(BoundaryCurve {
        mean_radius: curve.mean_radius * ratio,
        lobe_amplitude: curve.lobe_amplitude * ratio,
        lobes: curve.lobes,
        center: curve.center,
        rotation: curve.rotation,
        samples: curve.samples.iter().map(scale_point).collect(),
        cumulative_arc: curve.cumulative_arc.iter().map(|s| s * ratio).collect(),
        perimeter: curve.perimeter * ratio,
        dense: curve.dense.iter().map(scale_point).collect(),
        dense_theta: curve.dense_theta.clone(),
        dense_arc: curve.dense_arc.iter().map(|s| s * ratio).collect(),
    })
}

impl BoundaryCurve {
    /// The M arc-length-uniform boundary points.
    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    /// Cumulative arc length at each sample (starting at 0).
    pub fn cumulative_arc(&self) -> &[f64] {
        &self.cumulative_arc
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    pub fn mean_radius(&self) -> f64 {
        self.mean_radius
    }

    pub fn lobe_amplitude(&self) -> f64 {
        self.lobe_amplitude
    }

    pub fn lobes(&self) -> u32 {
        self.lobes
    }

    /// Mean arc spacing between consecutive samples.
    pub fn mean_spacing(&self) -> f64 {
        self.perimeter / self.samples.len() as f64
    }

    /// Point at arc-length position `s` (wrapped modulo the perimeter),
    /// measured from sample 0.
    pub fn point_at_arc_length(&self, s: f64) -> Vec2 {
        let s = s.rem_euclid(self.perimeter);
        // Binary search the dense cumulative table.
        let idx = match self
            .dense_arc
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let idx = idx.min(self.dense_arc.len() - 2);
        let (s0, s1) = (self.dense_arc[idx], self.dense_arc[idx + 1]);
        let (t0, t1) = (self.dense_theta[idx], self.dense_theta[idx + 1]);
        let frac = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        let theta = t0 + frac * (t1 - t0);
        let r = self.mean_radius + self.lobe_amplitude * (self.lobes as f64 * theta).cos();
        self.center + Vec2::unit_from_angle(theta + self.rotation) * r
    }

    /// Distance from `p` to the densely sampled boundary polygon.
    /// Accurate to O((dense spacing)^2 * curvature), far below any margin
    /// used in this crate.
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        polygon_distance(p, &self.dense)
    }

    /// True if `p` is strictly inside the densely sampled boundary.
    pub(crate) fn inside_dense(&self, p: Vec2) -> bool {
        point_in_polygon(p, &self.dense)
    }

    /// True if the whole disk of the given radius around `center` lies
    /// strictly inside the curve (dense-polygon accuracy).
    pub fn encloses_disk(&self, center: Vec2, radius: f64) -> bool {
        self.inside_dense(center) && self.distance_to_boundary(center) > radius
    }

    /// Three-valued containment test against the M-sample polygon.
    /// Points within one mean sample spacing of the polygon are reported
    /// as `NearBoundary`.
    pub fn contains(&self, p: Vec2) -> Containment {
        if polygon_distance(p, &self.samples) < self.mean_spacing() {
            return Containment::NearBoundary;
        }
        if point_in_polygon(p, &self.samples) {
            Containment::Inside
        } else {
            Containment::Outside
        }
    }
}

/// Distance from a point to a closed polygon (minimum over edges).
fn polygon_distance(p: Vec2, polygon: &[Vec2]) -> f64 {
    let mut best = f64::INFINITY;
    let n = polygon.len();
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        let ab = b - a;
        let len_sqr = ab.norm_sqr();
        let t = if len_sqr > 0.0 {
            ((p - a).dot(ab) / len_sqr).clamp(0.0, 1.0)
        } else {
            0.0
        };
        best = best.min(p.dist(a + ab * t));
    }
    best
}

/// Even-odd ray-crossing test against a closed polygon.
fn point_in_polygon(p: Vec2, polygon: &[Vec2]) -> bool {
    let n = polygon.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (polygon[i], polygon[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x_cross = pi.x + (p.y - pi.y) * (pj.x - pi.x) / (pj.y - pi.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

// ---------------------------------------------------------------------
// Scatterers and clusters
// ---------------------------------------------------------------------

/// One small dielectric rod: a disk with position, radius, and relative
/// permittivity (epsilon = nu^2 >= 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Vec2,
    pub radius: f64,
    pub permittivity: f64,
}

impl Scatterer {
    pub fn new(position: Vec2, radius: f64, permittivity: f64) -> Result<Scatterer> {
        if !position.is_finite() {
            return Err(Error::Geometry("scatterer position must be finite".into()));
        }
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::Geometry(format!(
                "scatterer radius must be positive, got {radius}"
            )));
        }
        if !permittivity.is_finite() || permittivity < 1.0 {
            return Err(Error::Domain(format!(
                "relative permittivity must be >= 1, got {permittivity}"
            )));
        }
        Ok(Scatterer {
            position,
            radius,
            permittivity,
        })
    }
}

/// Errors unless all pairs of scatterer disks are disjoint.
pub fn validate_non_overlap(scatterers: &[Scatterer]) -> Result<()> {
    for i in 0..scatterers.len() {
        for j in (i + 1)..scatterers.len() {
            let d = scatterers[i].position.dist(scatterers[j].position);
            if d <= scatterers[i].radius + scatterers[j].radius {
                return Err(Error::Geometry(format!(
                    "scatterers {i} and {j} overlap: centers {d:.6e} apart, \
                     radii sum {:.6e}",
                    scatterers[i].radius + scatterers[j].radius
                )));
            }
        }
    }
    Ok(())
}

/// A set of rods together with the closed curve that encloses them.
#[derive(Clone, Debug)]
pub struct Cluster {
    scatterers: Vec<Scatterer>,
    enclosure: BoundaryCurve,
}

impl Cluster {
    /// Validates the cluster invariants: scatterers pairwise disjoint and
    /// every rod disk strictly inside the enclosure with clearance of at
    /// least one rod radius (i.e. center at distance >= 2 radius from the
    /// boundary).
    pub fn new(scatterers: Vec<Scatterer>, enclosure: BoundaryCurve) -> Result<Cluster> {
        if scatterers.is_empty() {
            return Err(Error::Degenerate("cluster has no scatterers".into()));
        }
        validate_non_overlap(&scatterers)?;
        for (q, rod) in scatterers.iter().enumerate() {
            if !enclosure.inside_dense(rod.position) {
                return Err(Error::Geometry(format!(
                    "rod {q} at ({}, {}) is not inside the enclosure",
                    rod.position.x, rod.position.y
                )));
            }
            let clearance = enclosure.distance_to_boundary(rod.position);
            if clearance < 2.0 * rod.radius {
                return Err(Error::Geometry(format!(
                    "rod {q} is too close to the enclosure: clearance \
                     {clearance:.6e} < 2 x radius {:.6e}",
                    rod.radius
                )));
            }
        }
        Ok(Cluster {
            scatterers,
            enclosure,
        })
    }

    pub fn scatterers(&self) -> &[Scatterer] {
        &self.scatterers
    }

    pub fn enclosure(&self) -> &BoundaryCurve {
        &self.enclosure
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_samples_are_equally_spaced_in_angle() {
        let c = make_trefoil(2.0, 0.0, 3, Vec2::ZERO, 0.0, 64).unwrap();
        for (i, p) in c.samples().iter().enumerate() {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
            let expect = Vec2::unit_from_angle(angle) * 2.0;
            assert!(p.dist(expect) < 1e-9, "sample {i}");
        }
        assert!((c.perimeter() - 4.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn rotation_equivariance() {
        let rotation = 2.0 * std::f64::consts::PI / 5.0;
        let base = make_trefoil(1.0, 0.3, 3, Vec2::ZERO, 0.0, 48).unwrap();
        let turned = make_trefoil(1.0, 0.3, 3, Vec2::ZERO, rotation, 48).unwrap();
        for (p, q) in base.samples().iter().zip(turned.samples()) {
            assert!(p.rotated(rotation).dist(*q) < 1e-12);
        }
    }

    #[test]
    fn homothety_identity_and_round_trip() {
        let c = make_trefoil(1.0, 0.25, 3, Vec2::new(0.5, -0.25), 0.7, 48).unwrap();
        let same = homothety(&c, 1.0).unwrap();
        for (p, q) in c.samples().iter().zip(same.samples()) {
            assert_eq!(p, q);
        }
        let back = homothety(&homothety(&c, 1.3).unwrap(), 1.0 / 1.3).unwrap();
        for (p, q) in c.samples().iter().zip(back.samples()) {
            assert!(p.dist(*q) < 1e-12 * (1.0 + p.norm()));
        }
        let doubled = homothety(&c, 2.0).unwrap();
        assert!((doubled.perimeter() - 2.0 * c.perimeter()).abs() < 1e-12 * c.perimeter());
    }

    #[test]
    fn containment_trivials() {
        let c = make_trefoil(1.0, 0.0, 3, Vec2::new(1.0, 2.0), 0.0, 64).unwrap();
        assert_eq!(c.contains(Vec2::new(1.0, 2.0)), Containment::Inside);
        assert_eq!(c.contains(Vec2::new(3.0, 2.0)), Containment::Outside);
        assert_eq!(c.contains(Vec2::new(2.0, 2.0)), Containment::NearBoundary);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(make_trefoil(1.0, 1.0, 3, Vec2::ZERO, 0.0, 64).is_err());
        assert!(make_trefoil(1.0, 1.5, 3, Vec2::ZERO, 0.0, 64).is_err());
        assert!(make_trefoil(-1.0, 0.0, 3, Vec2::ZERO, 0.0, 64).is_err());
        assert!(make_trefoil(1.0, 0.1, 3, Vec2::ZERO, 0.0, 8).is_err());
        let c = make_trefoil(1.0, 0.1, 3, Vec2::ZERO, 0.0, 64).unwrap();
        assert!(homothety(&c, 0.0).is_err());
        assert!(homothety(&c, -2.0).is_err());
        assert!(Scatterer::new(Vec2::ZERO, 0.0, 12.0).is_err());
        assert!(Scatterer::new(Vec2::ZERO, 0.01, 0.5).is_err());
    }

    #[test]
    fn overlapping_scatterers_rejected() {
        let a = Scatterer::new(Vec2::ZERO, 0.1, 4.0).unwrap();
        let b = Scatterer::new(Vec2::new(0.15, 0.0), 0.1, 4.0).unwrap();
        assert!(validate_non_overlap(&[a, b]).is_err());
        let c = Scatterer::new(Vec2::new(0.25, 0.0), 0.1, 4.0).unwrap();
        assert!(validate_non_overlap(&[a, c]).is_ok());
    }

    #[test]
    fn cluster_rejects_rod_outside_enclosure() {
        let curve = make_trefoil(1.0, 0.0, 3, Vec2::ZERO, 0.0, 64).unwrap();
        let inside = Scatterer::new(Vec2::new(0.2, 0.1), 0.02, 12.0).unwrap();
        let outside = Scatterer::new(Vec2::new(1.5, 0.0), 0.02, 12.0).unwrap();
        assert!(Cluster::new(vec![inside], curve.clone()).is_ok());
        assert!(Cluster::new(vec![inside, outside], curve).is_err());
    }

    #[test]
    fn point_at_arc_length_wraps_and_matches_samples() {
        let c = make_trefoil(1.2, 0.36, 3, Vec2::new(0.3, 0.1), 0.4, 66).unwrap();
        for (i, p) in c.samples().iter().enumerate() {
            let s = c.perimeter() * i as f64 / 66.0;
            assert!(c.point_at_arc_length(s).dist(*p) < 1e-9, "sample {i}");
            assert!(
                c.point_at_arc_length(s + c.perimeter()).dist(*p) < 1e-9,
                "wrapped sample {i}"
            );
        }
    }
}
