//! Exact Riemannian primitives for the two model manifolds.
//!
//! The circle S¹ (unit radius, flat, diameter π) and the unit sphere S²
//! (constant Ricci 1, injectivity radius π). Both have closed-form
//! geodesics, parallel transport and curvature, which keeps every
//! downstream estimator oracle-checkable. S¹ fails the positive-Ricci
//! hypothesis and serves as the negative control.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

const UNIT_TOL: f64 = 1e-12;

/// One of the two model manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldId {
    Circle,
    Sphere2,
}

impl ManifoldId {
    pub fn dim(self) -> usize {
        match self {
            ManifoldId::Circle => 1,
            ManifoldId::Sphere2 => 2,
        }
    }

    pub fn diameter(self) -> f64 {
        PI
    }

    pub fn injectivity_radius(self) -> f64 {
        PI
    }

    /// Constant of the Ricci quadratic form: Ric(v,v) = c·|v|².
    pub fn ricci_constant(self) -> f64 {
        match self {
            ManifoldId::Circle => 0.0,
            ManifoldId::Sphere2 => 1.0,
        }
    }

    /// Total Riemannian volume (length 2π resp. area 4π).
    pub fn volume(self) -> f64 {
        match self {
            ManifoldId::Circle => TAU,
            ManifoldId::Sphere2 => 4.0 * PI,
        }
    }
}

/// A point on a model manifold: an angle in [0,2π) on S¹, a unit 3-vector on S².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Point {
    Circle(f64),
    Sphere([f64; 3]),
}

impl Point {
    pub fn circle(theta: f64) -> Point {
        Point::Circle(theta.rem_euclid(TAU))
    }

    pub fn sphere(v: [f64; 3]) -> Result<Point> {
        let n = norm3(&v);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("sphere point norm {n} != 1")));
        }
        Ok(Point::Sphere(v))
    }

    /// Normalizes an arbitrary nonzero 3-vector onto S².
    pub fn sphere_normalized(v: [f64; 3]) -> Result<Point> {
        let n = norm3(&v);
        if n < 1e-300 {
            return Err(Error::Domain("cannot normalize zero vector".into()));
        }
        Ok(Point::Sphere([v[0] / n, v[1] / n, v[2] / n]))
    }

    pub fn manifold(&self) -> ManifoldId {
        match self {
            Point::Circle(_) => ManifoldId::Circle,
            Point::Sphere(_) => ManifoldId::Sphere2,
        }
    }

    pub fn angle(&self) -> f64 {
        match self {
            Point::Circle(t) => *t,
            Point::Sphere(_) => panic!("angle() on a sphere point"),
        }
    }

    pub fn coords3(&self) -> [f64; 3] {
        match self {
            Point::Sphere(v) => *v,
            Point::Circle(_) => panic!("coords3() on a circle point"),
        }
    }
}

/// A tangent vector at a base point. 1 component on S¹; a 3-vector
/// orthogonal to the base on S².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangent {
    pub base: Point,
    vec: TangentVec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TangentVec {
    Circle(f64),
    Sphere([f64; 3]),
}

impl Tangent {
    pub fn circle(base: Point, v: f64) -> Tangent {
        debug_assert!(matches!(base, Point::Circle(_)));
        Tangent { base, vec: TangentVec::Circle(v) }
    }

    pub fn sphere(base: Point, v: [f64; 3]) -> Result<Tangent> {
        let b = base.coords3();
        if dot3(&b, &v).abs() > UNIT_TOL * (1.0 + norm3(&v)) {
            return Err(Error::Domain(format!(
                "tangent not orthogonal to base: <v,x> = {}",
                dot3(&b, &v)
            )));
        }
        Ok(Tangent { base, vec: TangentVec::Sphere(v) })
    }

    /// Orthogonal projection of an ambient 3-vector onto the tangent plane.
    pub fn sphere_projected(base: Point, v: [f64; 3]) -> Tangent {
        let b = base.coords3();
        let c = dot3(&b, &v);
        Tangent {
            base,
            vec: TangentVec::Sphere([v[0] - c * b[0], v[1] - c * b[1], v[2] - c * b[2]]),
        }
    }

    pub fn zero(base: Point) -> Tangent {
        match base {
            Point::Circle(_) => Tangent::circle(base, 0.0),
            Point::Sphere(_) => Tangent { base, vec: TangentVec::Sphere([0.0; 3]) },
        }
    }

    pub fn norm(&self) -> f64 {
        match &self.vec {
            TangentVec::Circle(v) => v.abs(),
            TangentVec::Sphere(v) => norm3(v),
        }
    }

    pub fn dot(&self, other: &Tangent) -> f64 {
        match (&self.vec, &other.vec) {
            (TangentVec::Circle(a), TangentVec::Circle(b)) => a * b,
            (TangentVec::Sphere(a), TangentVec::Sphere(b)) => dot3(a, b),
            _ => panic!("tangent manifolds differ"),
        }
    }

    pub fn scale(&self, c: f64) -> Tangent {
        match self.vec {
            TangentVec::Circle(v) => Tangent { base: self.base, vec: TangentVec::Circle(c * v) },
            TangentVec::Sphere(v) => Tangent {
                base: self.base,
                vec: TangentVec::Sphere([c * v[0], c * v[1], c * v[2]]),
            },
        }
    }

    pub fn add(&self, other: &Tangent) -> Tangent {
        match (&self.vec, &other.vec) {
            (TangentVec::Circle(a), TangentVec::Circle(b)) => {
                Tangent { base: self.base, vec: TangentVec::Circle(a + b) }
            }
            (TangentVec::Sphere(a), TangentVec::Sphere(b)) => Tangent {
                base: self.base,
                vec: TangentVec::Sphere([a[0] + b[0], a[1] + b[1], a[2] + b[2]]),
            },
            _ => panic!("tangent manifolds differ"),
        }
    }

    pub fn component(&self) -> f64 {
        match self.vec {
            TangentVec::Circle(v) => v,
            TangentVec::Sphere(_) => panic!("component() on a sphere tangent"),
        }
    }

    pub fn components3(&self) -> [f64; 3] {
        match self.vec {
            TangentVec::Sphere(v) => v,
            TangentVec::Circle(_) => panic!("components3() on a circle tangent"),
        }
    }
}

/// Signed shortest angular difference from x to y, in (−π, π].
pub fn circle_signed_delta(x: f64, y: f64) -> f64 {
    let mut d = (y - x).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

/// Geodesic distance.
pub fn distance(m: ManifoldId, x: &Point, y: &Point) -> f64 {
    match m {
        ManifoldId::Circle => {
            // |x−y| is bitwise symmetric, so the metric is exactly symmetric
            let raw = (x.angle() - y.angle()).abs();
            raw.min(TAU - raw)
        }
        ManifoldId::Sphere2 => {
            let a = x.coords3();
            let b = y.coords3();
            let c = cross3(&a, &b);
            // atan2 form is stable both near 0 and near π.
            norm3(&c).atan2(dot3(&a, &b))
        }
    }
}

/// Riemannian exponential map.
pub fn exp_map(m: ManifoldId, base: &Point, v: &Tangent) -> Point {
    match m {
        ManifoldId::Circle => Point::circle(base.angle() + v.component()),
        ManifoldId::Sphere2 => {
            let x = base.coords3();
            let w = v.components3();
            let rho = norm3(&w);
            if rho < 1e-300 {
                return *base;
            }
            let d = [w[0] / rho, w[1] / rho, w[2] / rho];
            let (s, c) = rho.sin_cos();
            Point::Sphere(renormalize([
                c * x[0] + s * d[0],
                c * x[1] + s * d[1],
                c * x[2] + s * d[2],
            ]))
        }
    }
}

/// Riemannian logarithm; requires d(x,y) strictly below the injectivity radius.
pub fn log_map(m: ManifoldId, x: &Point, y: &Point) -> Result<Tangent> {
    let d = distance(m, x, y);
    if d >= m.injectivity_radius() - 1e-9 {
        return Err(Error::CutLocus(format!(
            "log_map at distance {d} >= injectivity radius"
        )));
    }
    match m {
        ManifoldId::Circle => Ok(Tangent::circle(*x, circle_signed_delta(x.angle(), y.angle()))),
        ManifoldId::Sphere2 => {
            if d < 1e-300 {
                return Ok(Tangent::zero(*x));
            }
            let a = x.coords3();
            let b = y.coords3();
            let c = dot3(&a, &b);
            let perp = [b[0] - c * a[0], b[1] - c * a[1], b[2] - c * a[2]];
            let n = norm3(&perp);
            Ok(Tangent {
                base: *x,
                vec: TangentVec::Sphere([d * perp[0] / n, d * perp[1] / n, d * perp[2] / n]),
            })
        }
    }
}

/// Parallel transport of v along the minimizing geodesic from x to y.
///
/// Degenerate segments (x = y) transport by the identity. On S² this is the
/// rotation about the axis x × y by the angle d(x,y).
pub fn parallel_transport(m: ManifoldId, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
    let d = distance(m, x, y);
    if d >= m.injectivity_radius() - 1e-9 {
        return Err(Error::CutLocus(format!(
            "transport at distance {d} >= injectivity radius"
        )));
    }
    match m {
        ManifoldId::Circle => Ok(Tangent::circle(*y, v.component())),
        ManifoldId::Sphere2 => {
            if d < 1e-300 {
                return Ok(Tangent { base: *y, vec: v.vec });
            }
            let r = segment_rotation(x, y);
            let w = v.components3();
            Ok(Tangent { base: *y, vec: TangentVec::Sphere(mat_vec(&r, &w)) })
        }
    }
}

/// Rotation matrix realizing geodesic parallel transport x → y on S².
pub fn segment_rotation(x: &Point, y: &Point) -> [[f64; 3]; 3] {
    let a = x.coords3();
    let b = y.coords3();
    let axis_raw = cross3(&a, &b);
    let s = norm3(&axis_raw);
    let c = dot3(&a, &b);
    if s < 1e-300 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let k = [axis_raw[0] / s, axis_raw[1] / s, axis_raw[2] / s];
    // Rodrigues with cos = a·b, sin = |a×b| (exact for the segment angle).
    let vx = skew(&k);
    let vx2 = mat_mul(&vx, &vx);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let eye = if i == j { 1.0 } else { 0.0 };
            r[i][j] = eye + s * vx[i][j] + (1.0 - c) * vx2[i][j];
        }
    }
    r
}

/// A measurable orthonormal frame at z.
///
/// S¹: the unit vector ∂/∂θ. S²: Gram–Schmidt of the north-pole reference
/// against z, smooth away from the poles; at the poles the convention is
/// e₁ = x̂ and e₂ = z × e₁.
pub fn frame_field(m: ManifoldId, z: &Point) -> Vec<Tangent> {
    match m {
        ManifoldId::Circle => vec![Tangent::circle(*z, 1.0)],
        ManifoldId::Sphere2 => {
            let p = z.coords3();
            let e1 = if p[2].abs() > 1.0 - 1e-9 {
                [1.0, 0.0, 0.0]
            } else {
                // project ẑ onto the tangent plane and normalize
                let raw = [-p[2] * p[0], -p[2] * p[1], 1.0 - p[2] * p[2]];
                let n = norm3(&raw);
                [raw[0] / n, raw[1] / n, raw[2] / n]
            };
            let e2 = cross3(&p, &e1);
            vec![
                Tangent { base: *z, vec: TangentVec::Sphere(e1) },
                Tangent { base: *z, vec: TangentVec::Sphere(e2) },
            ]
        }
    }
}

/// Ricci quadratic form Ric(v,v).
pub fn ricci(m: ManifoldId, v: &Tangent) -> f64 {
    let n = v.norm();
    m.ricci_constant() * n * n
}

fn renormalize(v: [f64; 3]) -> [f64; 3] {
    let n = norm3(&v);
    [v[0] / n, v[1] / n, v[2] / n]
}

pub(crate) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    dot3(v, v).sqrt()
}

pub(crate) fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn skew(v: &[f64; 3]) -> [[f64; 3]; 3] {
    [
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for (k, bk) in b.iter().enumerate() {
                c[i][j] += a[i][k] * bk[j];
            }
        }
    }
    c
}

pub(crate) fn mat_vec(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [dot3(&a[0], v), dot3(&a[1], v), dot3(&a[2], v)]
}

pub(crate) fn mat_transpose(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub(crate) fn mat_mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    mat_mul(a, b)
}
