//! Discretized pinned Wiener measures.
//!
//! Exact finite-dimensional densities, sequential exact samplers, the
//! sub-path / concatenation algebra, and tube events with Monte Carlo tail
//! estimates.
//!
//! Sampling is sequential: x_i given x_{i-1} has density proportional to
//! p_{τ}(x_{i-1}, ·) · p_{(N-i)τ}(·, b) with τ = T/N. On the circle this
//! conditional is sampled exactly by first drawing the winding image and
//! then an unwrapped Gaussian (no rejection). On the sphere it is sampled
//! by rejection against a mixture of a tangent-space Gaussian centered on
//! the geodesic interpolant toward b and a small uniform component, with a
//! precomputed envelope that is re-verified on every accepted draw.

use crate::geometry::{
    self, circle_signed_delta, distance, exp_map, frame_field, log_map, mat_mul3, mat_transpose,
    mat_vec, segment_rotation, ManifoldId, Point, Tangent,
};
use crate::heat::{composite_gauss, HeatKernelSeries, KernelTable};
use crate::rng::SeedTree;
use crate::stats::wilson_interval;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

/// Parameters of a discretized bridge: endpoints, total time, segment count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub manifold: ManifoldId,
    pub a: Point,
    pub b: Point,
    pub t_total: f64,
    pub segments: usize,
}

impl BridgeSpec {
    pub fn new(manifold: ManifoldId, a: Point, b: Point, t_total: f64, segments: usize) -> Result<BridgeSpec> {
        if segments < 2 {
            return Err(Error::Domain("segments must be >= 2".into()));
        }
        if t_total <= 0.0 {
            return Err(Error::Domain("t_total must be positive".into()));
        }
        Ok(BridgeSpec { manifold, a, b, t_total, segments })
    }

    /// Step time τ = T/N.
    pub fn step_time(&self) -> f64 {
        self.t_total / self.segments as f64
    }

    fn validate_against(&self, series: &HeatKernelSeries) -> Result<()> {
        if series.manifold != self.manifold {
            return Err(Error::Domain("kernel series manifold mismatch".into()));
        }
        if self.step_time() < series.t_min {
            return Err(Error::Truncation { t: self.step_time(), t_min: series.t_min });
        }
        Ok(())
    }
}

/// A tube constraint: all consecutive gaps strictly below r.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TubeSpec {
    pub r: f64,
    pub segments: usize,
}

/// A sampled discretization of ω: grid points plus chained per-segment
/// geodesic parallel transports (absent when a step reaches the cut locus).
#[derive(Debug, Clone)]
pub struct DiscreteLoop {
    pub spec: BridgeSpec,
    pub points: Vec<Point>,
    transports: Option<LoopTransports>,
}

#[derive(Debug, Clone)]
enum LoopTransports {
    /// S¹ is flat: every transport is the identity on the ∂θ component.
    Circle,
    /// Cumulative rotations Q_i = R_{i-1,i} ... R_{0,1}; Q_0 = I.
    Sphere(Vec<[[f64; 3]; 3]>),
}

impl DiscreteLoop {
    /// Assembles a loop from grid points, computing transports when every
    /// step is below the injectivity radius.
    pub fn from_points(spec: BridgeSpec, points: Vec<Point>) -> Result<DiscreteLoop> {
        if points.len() != spec.segments + 1 {
            return Err(Error::Domain(format!(
                "expected {} points, got {}",
                spec.segments + 1,
                points.len()
            )));
        }
        if distance(spec.manifold, &points[0], &spec.a) > 1e-12
            || distance(spec.manifold, &points[spec.segments], &spec.b) > 1e-12
        {
            return Err(Error::Domain("endpoints do not match the spec".into()));
        }
        let transports = match spec.manifold {
            ManifoldId::Circle => Some(LoopTransports::Circle),
            ManifoldId::Sphere2 => {
                let inj = spec.manifold.injectivity_radius();
                let mut cum = Vec::with_capacity(points.len());
                let mut q = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                cum.push(q);
                let mut ok = true;
                for w in points.windows(2) {
                    if distance(spec.manifold, &w[0], &w[1]) >= inj - 1e-9 {
                        ok = false;
                        break;
                    }
                    q = mat_mul3(&segment_rotation(&w[0], &w[1]), &q);
                    cum.push(q);
                }
                if ok {
                    Some(LoopTransports::Sphere(cum))
                } else {
                    None
                }
            }
        };
        Ok(DiscreteLoop { spec, points, transports })
    }

    pub fn has_transports(&self) -> bool {
        self.transports.is_some()
    }

    /// Grid time of index i, rescaled to [0,1].
    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.spec.segments as f64
    }

    /// Grid index of a time s ∈ [0,1]; s must sit on the grid.
    pub fn index_of(&self, s: f64) -> Result<usize> {
        let x = s * self.spec.segments as f64;
        let i = x.round();
        if (x - i).abs() > 1e-9 || !(0.0..=self.spec.segments as f64).contains(&i) {
            return Err(Error::NonDyadic(format!("time {s} not on the {}-grid", self.spec.segments)));
        }
        Ok(i as usize)
    }

    /// Chained geodesic transport of a tangent at x_i to x_j (either order).
    pub fn transport(&self, i: usize, j: usize, v: &Tangent) -> Result<Tangent> {
        let tr = self
            .transports
            .as_ref()
            .ok_or_else(|| Error::CutLocus("loop has no transports".into()))?;
        match tr {
            LoopTransports::Circle => Ok(Tangent::circle(self.points[j], v.component())),
            LoopTransports::Sphere(cum) => {
                let r = mat_mul3(&cum[j], &mat_transpose(&cum[i]));
                let w = mat_vec(&r, &v.components3());
                Tangent::sphere(self.points[j], w)
            }
        }
    }

    /// Midpoint ω(1/2); requires an even segment count.
    pub fn midpoint(&self) -> Result<&Point> {
        if self.spec.segments % 2 != 0 {
            return Err(Error::Domain("midpoint needs an even segment count".into()));
        }
        Ok(&self.points[self.spec.segments / 2])
    }

    /// Largest consecutive gap.
    pub fn max_step(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| distance(self.spec.manifold, &w[0], &w[1]))
            .fold(0.0, f64::max)
    }

    /// All consecutive gaps strictly inside the tube radius.
    pub fn in_tube(&self, r: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| distance(self.spec.manifold, &w[0], &w[1]) < r)
    }
}

/// log density of μ^{N,T}_{a,b} at interior points x ∈ M^{N−1}:
/// Σ log p_{T/N}(x_i, x_{i+1}) − log p_T(a,b).
pub fn marginal_log_density(
    series: &HeatKernelSeries,
    spec: &BridgeSpec,
    interior: &[Point],
) -> Result<f64> {
    coarse_marginal_log_density(series, spec, 1, interior)
}

/// log density of the coarse marginal μ^{N,l,T}_{a,b} on M^{N−l}; the final
/// factor toward b carries time l·T/N, the rest T/N.
pub fn coarse_marginal_log_density(
    series: &HeatKernelSeries,
    spec: &BridgeSpec,
    l: usize,
    coarse: &[Point],
) -> Result<f64> {
    spec.validate_against(series)?;
    let n = spec.segments;
    if l < 1 || l >= n {
        return Err(Error::Domain(format!("need 1 <= l < N, got l = {l}")));
    }
    if coarse.len() != n - l {
        return Err(Error::Domain(format!(
            "expected {} coarse points, got {}",
            n - l,
            coarse.len()
        )));
    }
    let tau = spec.step_time();
    let mut acc = 0.0;
    let mut prev = spec.a;
    for x in coarse {
        acc += series.density(tau, &prev, x)?.ln();
        prev = *x;
    }
    acc += series.density(l as f64 * tau, &prev, &spec.b)?.ln();
    acc -= series.density(spec.t_total, &spec.a, &spec.b)?.ln();
    Ok(acc)
}

/// Concatenation of two bridges sharing a junction point and step time.
pub fn concat(left: &DiscreteLoop, right: &DiscreteLoop) -> Result<DiscreteLoop> {
    let (ls, rs) = (&left.spec, &right.spec);
    if ls.manifold != rs.manifold {
        return Err(Error::Junction("manifold mismatch".into()));
    }
    if distance(ls.manifold, &ls.b, &rs.a) > 1e-12 {
        return Err(Error::Junction("junction points differ".into()));
    }
    if (ls.step_time() - rs.step_time()).abs() > 1e-12 {
        return Err(Error::Junction("step times differ".into()));
    }
    let spec = BridgeSpec::new(
        ls.manifold,
        ls.a,
        rs.b,
        ls.t_total + rs.t_total,
        ls.segments + rs.segments,
    )?;
    let mut points = left.points.clone();
    points.extend_from_slice(&right.points[1..]);
    DiscreteLoop::from_points(spec, points)
}

/// Splits ω into 2^k sub-paths of N/2^k segments; each sub-path keeps its
/// share T/2^k of the physical time and a [0,1] grid of its own.
pub fn split(omega: &DiscreteLoop, k: u32) -> Result<Vec<DiscreteLoop>> {
    let pieces = 1usize << k;
    let n = omega.spec.segments;
    if n % pieces != 0 {
        return Err(Error::Domain(format!("N = {n} not divisible by 2^{k}")));
    }
    let seg = n / pieces;
    if seg < 1 {
        return Err(Error::Domain("sub-paths need at least one segment".into()));
    }
    let mut out = Vec::with_capacity(pieces);
    for p in 0..pieces {
        let points: Vec<Point> = omega.points[p * seg..=(p + 1) * seg].to_vec();
        let spec = BridgeSpec::new(
            omega.spec.manifold,
            points[0],
            points[seg],
            omega.spec.t_total / pieces as f64,
            seg,
        )?;
        out.push(DiscreteLoop::from_points(spec, points)?);
    }
    Ok(out)
}

// ─── Exact samplers ──────────────────────────────────────────────────────

const UNIFORM_MIX: f64 = 0.05;
const ENVELOPE_MARGIN: f64 = 1.3;
const RHO_GRID: usize = 33;
const MAX_ATTEMPTS: u64 = 10_000;

/// Sequential exact sampler for one BridgeSpec. Construction precomputes
/// kernel tables and, on the sphere, rejection envelopes per step.
pub struct BridgeSampler {
    pub spec: BridgeSpec,
    sphere: Option<SphereSampler>,
}

struct SphereSampler {
    table_step: Arc<KernelTable>,
    steps: Vec<SphereStep>,
}

struct SphereStep {
    v: f64,
    lambda: f64,
    log_z_v: f64,
    table_u: Arc<KernelTable>,
    /// log envelope per ρ-grid cell, margin included.
    log_env: Vec<f64>,
}

impl BridgeSampler {
    pub fn new(series: &HeatKernelSeries, spec: BridgeSpec) -> Result<BridgeSampler> {
        spec.validate_against(series)?;
        let sphere = match spec.manifold {
            ManifoldId::Circle => None,
            ManifoldId::Sphere2 => Some(build_sphere_sampler(series, &spec)),
        };
        Ok(BridgeSampler { spec, sphere })
    }

    /// Draws `count` loops; bit-identical for fixed (seed, count) and
    /// independent of the worker count (one RNG stream per sample index).
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<DiscreteLoop>> {
        let tree = SeedTree::new(seed);
        (0..count)
            .into_par_iter()
            .map(|i| self.sample_one(&mut tree.sample_rng(i as u64)))
            .collect()
    }

    pub fn sample_one(&self, rng: &mut ChaCha8Rng) -> Result<DiscreteLoop> {
        let n = self.spec.segments;
        let mut points = Vec::with_capacity(n + 1);
        points.push(self.spec.a);
        for i in 1..n {
            let prev = points[i - 1];
            let next = match self.spec.manifold {
                ManifoldId::Circle => self.sample_circle_step(rng, &prev, i),
                ManifoldId::Sphere2 => self.sample_sphere_step(rng, &prev, i)?,
            };
            points.push(next);
        }
        points.push(self.spec.b);
        DiscreteLoop::from_points(self.spec, points)
    }

    /// Circle conditional via the winding-image decomposition: the target
    /// Σ_{j,k} exp(−(ψ+2πj)²/2s − (Δ−ψ+2πk)²/2u) splits, for fixed total
    /// image w = j+k, into a Gaussian in the unwrapped increment whose
    /// wrapped position does not depend on j. Exact, no rejection.
    fn sample_circle_step(&self, rng: &mut ChaCha8Rng, prev: &Point, i: usize) -> Point {
        let tau = self.spec.step_time();
        let s = tau;
        let u = (self.spec.segments - i) as f64 * tau;
        let su = s + u;
        let lambda = s / su;
        let v = s * u / su;
        let delta = circle_signed_delta(prev.angle(), self.spec.b.angle());
        // winding weights ∝ exp(−(Δ+2πw)²/(2(s+u))); truncation below
        // 1e−18 relative mass is beyond f64 CDF resolution
        let w_max = (((2.0 * su * 42.0).sqrt() + PI) / TAU).ceil() as i64 + 1;
        let mut weights = Vec::with_capacity((2 * w_max + 1) as usize);
        let mut total = 0.0;
        for w in -w_max..=w_max {
            let r = delta + TAU * w as f64;
            let wt = (-r * r / (2.0 * su)).exp();
            weights.push(wt);
            total += wt;
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = 0i64;
        for (idx, wt) in weights.iter().enumerate() {
            pick -= wt;
            if pick <= 0.0 {
                chosen = idx as i64 - w_max;
                break;
            }
        }
        let r = delta + TAU * chosen as f64;
        let g: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
        let increment = lambda * r + v.sqrt() * g;
        Point::circle(prev.angle() + increment)
    }

    fn sample_sphere_step(&self, rng: &mut ChaCha8Rng, prev: &Point, i: usize) -> Result<Point> {
        let sphere = self.sphere.as_ref().expect("sphere sampler present");
        let step = &sphere.steps[i - 1];
        let b = &self.spec.b;
        let rho = distance(ManifoldId::Sphere2, prev, b);
        // geodesic interpolant toward b; for (numerically) antipodal
        // endpoints fall back to the current point
        let mu = if rho < PI - 1e-9 {
            let v = log_map(ManifoldId::Sphere2, prev, b)?;
            exp_map(ManifoldId::Sphere2, prev, &v.scale(step.lambda))
        } else {
            *prev
        };
        let frame = frame_field(ManifoldId::Sphere2, &mu);
        let cell = ((rho / PI) * (RHO_GRID - 1) as f64) as usize;
        let log_m = step.log_env[cell.min(RHO_GRID - 2)]
            .max(step.log_env[(cell + 1).min(RHO_GRID - 1)]);

        for _attempt in 0..MAX_ATTEMPTS {
            let y = if rng.gen::<f64>() < UNIFORM_MIX {
                uniform_sphere(rng)
            } else {
                // tangent Gaussian: Rayleigh radius thinned by sin ρ/ρ gives
                // density ∝ exp(−d²/2v) per unit area
                let radius = loop {
                    let u1: f64 = rng.gen();
                    let r = (-2.0 * step.v * (1.0 - u1).ln()).sqrt();
                    if r <= PI {
                        let u2: f64 = rng.gen();
                        if r < 1e-12 || u2 <= r.sin() / r {
                            break r;
                        }
                    }
                };
                let phi = rng.gen::<f64>() * TAU;
                let dir = frame[0].scale(radius * phi.cos()).add(&frame[1].scale(radius * phi.sin()));
                exp_map(ManifoldId::Sphere2, &mu, &dir)
            };
            let d1 = distance(ManifoldId::Sphere2, prev, &y);
            let d2 = distance(ManifoldId::Sphere2, &y, b);
            let alpha = distance(ManifoldId::Sphere2, &mu, &y);
            let log_target = sphere.table_step.eval(d1).max(0.0).ln() + step.table_u.eval(d2).max(0.0).ln();
            let log_q = log_mix_proposal(alpha, step.v, step.log_z_v);
            let log_ratio = log_target - log_q;
            if log_ratio > log_m + 1e-9 {
                return Err(Error::Sampler(format!(
                    "envelope violated at step {i}: log_ratio {log_ratio} > log_M {log_m} (rho = {rho})"
                )));
            }
            if rng.gen::<f64>().ln() <= log_ratio - log_m {
                return Ok(y);
            }
        }
        Err(Error::Sampler(format!(
            "acceptance below 1e-4 at step {i} (rho = {rho}, T = {}, N = {})",
            self.spec.t_total, self.spec.segments
        )))
    }
}

fn uniform_sphere(rng: &mut ChaCha8Rng) -> Point {
    let z = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = rng.gen::<f64>() * TAU;
    let r = (1.0 - z * z).max(0.0).sqrt();
    Point::sphere_normalized([r * phi.cos(), r * phi.sin(), z]).unwrap()
}

/// log of the mixture proposal density per unit area (unnormalized mix of
/// the tangent Gaussian and the uniform component).
fn log_mix_proposal(alpha: f64, v: f64, log_z_v: f64) -> f64 {
    // (1−ε)·e^{−α²/2v}/(2π Z_v) + ε/(4π), evaluated stably in log space
    let log_gauss = (1.0 - UNIFORM_MIX).ln() - alpha * alpha / (2.0 * v) - (TAU.ln() + log_z_v);
    let log_unif = (UNIFORM_MIX / (4.0 * PI)).ln();
    let hi = log_gauss.max(log_unif);
    hi + ((log_gauss - hi).exp() + (log_unif - hi).exp()).ln()
}

fn build_sphere_sampler(series: &HeatKernelSeries, spec: &BridgeSpec) -> SphereSampler {
    let tau = spec.step_time();
    let table_step = Arc::new(KernelTable::build(series, tau));
    let mut steps = Vec::with_capacity(spec.segments - 1);
    for i in 1..spec.segments {
        let u = (spec.segments - i) as f64 * tau;
        // reuse the step table when u == tau (final interior point)
        let table_u = if spec.segments - i == 1 {
            table_step.clone()
        } else {
            Arc::new(KernelTable::build(series, u))
        };
        let v = tau * u / (tau + u);
        let z_v = composite_gauss(
            &|r: f64| (-r * r / (2.0 * v)).exp() * r.sin(),
            0.0,
            PI,
            256,
        );
        let lambda = tau / (tau + u);
        let mut log_env = Vec::with_capacity(RHO_GRID);
        for j in 0..RHO_GRID {
            let rho = PI * j as f64 / (RHO_GRID - 1) as f64;
            let raw = scan_log_envelope(&table_step, &table_u, lambda, rho, v, z_v.ln());
            log_env.push(raw + ENVELOPE_MARGIN.ln());
        }
        steps.push(SphereStep { v, lambda, log_z_v: z_v.ln(), table_u, log_env });
    }
    SphereSampler { table_step, steps }
}

/// Dense (α,β) scan of log target/proposal with two local refinement
/// passes; the runtime accept path re-checks every draw against the
/// returned bound.
fn scan_log_envelope(
    table_s: &KernelTable,
    table_u: &KernelTable,
    lambda: f64,
    rho: f64,
    v: f64,
    log_z_v: f64,
) -> f64 {
    let d_to_x = lambda * rho;
    let d_to_b = (1.0 - lambda) * rho;
    let eval = |alpha: f64, beta: f64| -> f64 {
        let (sa, ca) = alpha.sin_cos();
        let cb = beta.cos();
        let cos_d1 = (ca * d_to_x.cos() - sa * d_to_x.sin() * cb).clamp(-1.0, 1.0);
        let cos_d2 = (ca * d_to_b.cos() + sa * d_to_b.sin() * cb).clamp(-1.0, 1.0);
        let t = table_s.eval(cos_d1.acos()).max(0.0).ln() + table_u.eval(cos_d2.acos()).max(0.0).ln();
        t - log_mix_proposal(alpha, v, log_z_v)
    };
    let (mut best, mut best_a, mut best_b) = (f64::NEG_INFINITY, 0.0, 0.0);
    let (na, nb) = (192usize, 48usize);
    for ia in 0..=na {
        let alpha = PI * ia as f64 / na as f64;
        for ib in 0..=nb {
            let beta = PI * ib as f64 / nb as f64;
            let r = eval(alpha, beta);
            if r > best {
                best = r;
                best_a = alpha;
                best_b = beta;
            }
        }
    }
    let mut span_a = PI / na as f64;
    let mut span_b = PI / nb as f64;
    for _ in 0..2 {
        let (ca, cb) = (best_a, best_b);
        for ia in -8i32..=8 {
            for ib in -8i32..=8 {
                let alpha = (ca + span_a * ia as f64 / 4.0).clamp(0.0, PI);
                let beta = (cb + span_b * ib as f64 / 4.0).clamp(0.0, PI);
                let r = eval(alpha, beta);
                if r > best {
                    best = r;
                    best_a = alpha;
                    best_b = beta;
                }
            }
        }
        span_a /= 4.0;
        span_b /= 4.0;
    }
    best
}

/// Convenience wrapper: build a sampler and draw `count` loops.
pub fn sample(
    series: &HeatKernelSeries,
    spec: &BridgeSpec,
    seed: u64,
    count: usize,
) -> Result<Vec<DiscreteLoop>> {
    BridgeSampler::new(series, *spec)?.sample(seed, count)
}

// ─── Tube events ─────────────────────────────────────────────────────────

/// 1 iff every consecutive gap of (a, x₁, …, x_{N−1}, b) is below r.
pub fn tube_indicator(spec: &BridgeSpec, tube: &TubeSpec, interior: &[Point]) -> u8 {
    let mut prev = spec.a;
    for x in interior.iter().chain(std::iter::once(&spec.b)) {
        if distance(spec.manifold, &prev, x) >= tube.r {
            return 0;
        }
        prev = *x;
    }
    1
}

/// Monte Carlo escape-probability estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

pub fn tube_escape_probability(
    series: &HeatKernelSeries,
    spec: &BridgeSpec,
    tube: &TubeSpec,
    seed: u64,
    n: usize,
) -> Result<EscapeEstimate> {
    let sampler = BridgeSampler::new(series, *spec)?;
    let loops = sampler.sample(seed, n)?;
    let escapes = loops.iter().filter(|l| !l.in_tube(tube.r)).count() as u64;
    let (ci_low, ci_high) = wilson_interval(escapes, n as u64, 0.95);
    Ok(EscapeEstimate {
        estimate: escapes as f64 / n as f64,
        ci_low,
        ci_high,
        samples: n,
    })
}

/// Paper-shaped escape envelope
/// N·exp(−(1−4η)·r²·N/(2T) + N·(η²r² + D²)/(2lT)).
pub fn escape_envelope(spec: &BridgeSpec, tube: &TubeSpec, eta: f64, l: usize) -> f64 {
    let n = spec.segments as f64;
    let t = spec.t_total;
    let d = spec.manifold.diameter();
    let r = tube.r;
    n * (-(1.0 - 4.0 * eta) * r * r * n / (2.0 * t)
        + n * (eta * eta * r * r + d * d) / (2.0 * l as f64 * t))
        .exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::HeatKernelSeries;

    fn circle_series() -> HeatKernelSeries {
        HeatKernelSeries::default_for(ManifoldId::Circle)
    }

    fn sphere_series() -> HeatKernelSeries {
        HeatKernelSeries::default_for(ManifoldId::Sphere2)
    }

    #[test]
    fn midpoint_density_matches_two_factor_form() {
        let series = circle_series();
        let spec = BridgeSpec::new(ManifoldId::Circle, Point::circle(0.0), Point::circle(1.0), 0.4, 2).unwrap();
        let x = Point::circle(0.7);
        let ld = marginal_log_density(&series, &spec, &[x]).unwrap();
        let direct = (series.density(0.2, &spec.a, &x).unwrap()
            * series.density(0.2, &x, &spec.b).unwrap()
            / series.density(0.4, &spec.a, &spec.b).unwrap())
        .ln();
        assert!((ld - direct).abs() < 1e-12);
    }

    #[test]
    fn midpoint_density_reflection_symmetric_when_pinned() {
        let series = circle_series();
        let a = Point::circle(1.0);
        let spec = BridgeSpec::new(ManifoldId::Circle, a, a, 0.4, 2).unwrap();
        for dx in [0.2, 0.5, 1.1] {
            let up = marginal_log_density(&series, &spec, &[Point::circle(1.0 + dx)]).unwrap();
            let dn = marginal_log_density(&series, &spec, &[Point::circle(1.0 - dx)]).unwrap();
            assert!((up - dn).abs() < 1e-12);
        }
    }

    #[test]
    fn n3_density_integrates_to_one() {
        // 2-dim trapezoid over the torus; periodic smooth integrand
        let series = circle_series();
        let spec = BridgeSpec::new(ManifoldId::Circle, Point::circle(0.2), Point::circle(0.9), 0.3, 3).unwrap();
        let n = 256;
        let h = TAU / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [Point::circle(i as f64 * h), Point::circle(j as f64 * h)];
                total += marginal_log_density(&series, &spec, &x).unwrap().exp();
            }
        }
        total *= h * h;
        assert!((total - 1.0).abs() < 1e-6, "integral = {total}");
    }

    #[test]
    fn coarse_marginal_l1_equals_full_and_two_factor_case() {
        let series = circle_series();
        let spec = BridgeSpec::new(ManifoldId::Circle, Point::circle(0.0), Point::circle(0.8), 0.4, 4).unwrap();
        let x = [Point::circle(0.3), Point::circle(0.5), Point::circle(0.6)];
        let full = marginal_log_density(&series, &spec, &x).unwrap();
        let coarse1 = coarse_marginal_log_density(&series, &spec, 1, &x).unwrap();
        assert_eq!(full, coarse1);
        // l = N−1: single point, p_{T/N}(a,x)·p_{(N−1)T/N}(x,b)/p_T
        let single = [Point::circle(0.1)];
        let c = coarse_marginal_log_density(&series, &spec, 3, &single).unwrap();
        let direct = (series.density(0.1, &spec.a, &single[0]).unwrap()
            * series.density(0.3, &single[0], &spec.b).unwrap()
            / series.density(0.4, &spec.a, &spec.b).unwrap())
        .ln();
        assert!((c - direct).abs() < 1e-12);
    }

    #[test]
    fn coarse_marginal_matches_quadrature_marginalization() {
        // integrate μ^{4,T} over x₃ and compare against μ^{4,2,T} on (x₁,x₂)
        let series = circle_series();
        let spec = BridgeSpec::new(ManifoldId::Circle, Point::circle(0.0), Point::circle(0.5), 0.4, 4).unwrap();
        let x1 = Point::circle(0.2);
        let x2 = Point::circle(0.35);
        let n = 2048;
        let h = TAU / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let x3 = Point::circle(k as f64 * h);
            total += marginal_log_density(&series, &spec, &[x1, x2, x3]).unwrap().exp();
        }
        total *= h;
        let coarse = coarse_marginal_log_density(&series, &spec, 2, &[x1, x2])
            .unwrap()
            .exp();
        assert!(
            (total - coarse).abs() < 1e-6,
            "marginalized {total} vs coarse {coarse}"
        );
    }

    #[test]
    fn split_then_concat_roundtrip() {
        let series = circle_series();
        let spec = BridgeSpec::new(ManifoldId::Circle, Point::circle(0.0), Point::circle(0.0), 0.8, 8).unwrap();
        let sampler = BridgeSampler::new(&series, spec).unwrap();
        let omega = sampler.sample(5, 1).unwrap().pop().unwrap();
        let parts = split(&omega, 2).unwrap();
        assert_eq!(parts.len(), 4);
        for p in &parts {
            assert_eq!(p.spec.segments, 2);
            assert!((p.spec.t_total - 0.2).abs() < 1e-15);
        }
        let glued = parts
            .iter()
            .skip(1)
            .fold(parts[0].clone(), |acc, p| concat(&acc, p).unwrap());
        assert_eq!(glued.points, omega.points);
        // split(ω,1) midpoint = ω(1/2)
        let halves = split(&omega, 1).unwrap();
        assert_eq!(&halves[1].points[0], omega.midpoint().unwrap());
    }

    #[test]
    fn concat_rejects_junction_mismatch() {
        let spec1 = BridgeSpec::new(ManifoldId::Circle, Point::circle(0.0), Point::circle(1.0), 0.2, 2).unwrap();
        let spec2 = BridgeSpec::new(ManifoldId::Circle, Point::circle(1.5), Point::circle(2.0), 0.2, 2).unwrap();
        let l1 = DiscreteLoop::from_points(spec1, vec![Point::circle(0.0), Point::circle(0.5), Point::circle(1.0)]).unwrap();
        let l2 = DiscreteLoop::from_points(spec2, vec![Point::circle(1.5), Point::circle(1.7), Point::circle(2.0)]).unwrap();
        assert!(matches!(concat(&l1, &l2), Err(Error::Junction(_))));
    }

    #[test]
    fn sampler_deterministic_and_endpoints_fixed() {
        for (series, spec) in [
            (
                circle_series(),
                BridgeSpec::new(ManifoldId::Circle, Point::circle(0.3), Point::circle(1.0), 0.5, 4).unwrap(),
            ),
            (
                sphere_series(),
                BridgeSpec::new(
                    ManifoldId::Sphere2,
                    Point::sphere([0.0, 0.0, 1.0]).unwrap(),
                    Point::sphere([0.0, 0.0, 1.0]).unwrap(),
                    0.5,
                    4,
                )
                .unwrap(),
            ),
        ] {
            let sampler = BridgeSampler::new(&series, spec).unwrap();
            let a = sampler.sample(99, 16).unwrap();
            let b = sampler.sample(99, 16).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.points, y.points);
                assert_eq!(x.points[0], spec.a);
                assert_eq!(x.points[spec.segments], spec.b);
            }
        }
    }

    #[test]
    fn circle_midpoint_law_matches_quadrature_cdf() {
        // KS against the closed-form midpoint CDF by 1-dim quadrature
        let series = circle_series();
        let a = Point::circle(0.0);
        let b = Point::circle(1.0);
        let spec = BridgeSpec::new(ManifoldId::Circle, a, b, 0.5, 2).unwrap();
        let sampler = BridgeSampler::new(&series, spec).unwrap();
        let n = 20_000;
        let loops = sampler.sample(7, n).unwrap();
        let mut ds: Vec<f64> = loops
            .iter()
            .map(|l| distance(ManifoldId::Circle, &a, &l.points[1]))
            .collect();
        ds.sort_by(|x, y| x.partial_cmp(y).unwrap());
        // oracle CDF of d(a, x₁): accumulate grid masses sorted by distance
        let grid = 200_000;
        let h = TAU / grid as f64;
        let mut mass_by_dist: Vec<(f64, f64)> = (0..grid)
            .map(|i| {
                let theta = i as f64 * h;
                let x = Point::circle(theta);
                let dist = circle_signed_delta(0.0, theta).abs();
                (dist, marginal_log_density(&series, &spec, &[x]).unwrap().exp() * h)
            })
            .collect();
        mass_by_dist.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        let dists: Vec<f64> = mass_by_dist.iter().map(|p| p.0).collect();
        let mut cum = 0.0;
        let cumulative: Vec<f64> = mass_by_dist
            .iter()
            .map(|p| {
                cum += p.1;
                cum
            })
            .collect();
        let cdf = |d: f64| -> f64 {
            match dists.binary_search_by(|x| x.partial_cmp(&d).unwrap()) {
                Ok(i) => cumulative[i],
                Err(0) => 0.0,
                Err(i) => cumulative[i - 1],
            }
        };
        let ks = crate::stats::ks_statistic(&ds, &cdf);
        let crit = 1.63 / (n as f64).sqrt();
        assert!(ks < crit, "KS = {ks}, crit = {crit}");
    }

    #[test]
    fn time_reversal_symmetry_of_pinned_loops() {
        let series = circle_series();
        let a = Point::circle(0.5);
        let spec = BridgeSpec::new(ManifoldId::Circle, a, a, 0.6, 6).unwrap();
        let sampler = BridgeSampler::new(&series, spec).unwrap();
        let n = 20_000;
        let loops = sampler.sample(21, n).unwrap();
        // mean of d(a, x_i) vs d(a, x_{N−i}) within 3 combined SE
        for i in 1..3 {
            let fwd: Vec<f64> = loops
                .iter()
                .map(|l| distance(ManifoldId::Circle, &a, &l.points[i]))
                .collect();
            let bwd: Vec<f64> = loops
                .iter()
                .map(|l| distance(ManifoldId::Circle, &a, &l.points[6 - i]))
                .collect();
            let diff: Vec<f64> = fwd.iter().zip(bwd.iter()).map(|(f, b)| f - b).collect();
            let m = crate::stats::mean(&diff);
            let se = (crate::stats::sample_variance(&diff) / n as f64).sqrt();
            assert!(m.abs() < 3.0 * se.max(1e-12), "i = {i}: |{m}| vs 3·{se}");
        }
    }

    #[test]
    fn sphere_long_time_midpoint_approaches_uniform() {
        // chi-square on 50 equal-probability colatitude bins at the 1% level
        let series = sphere_series();
        let a = Point::sphere([0.0, 0.0, 1.0]).unwrap();
        let b = Point::sphere([1.0, 0.0, 0.0]).unwrap();
        let spec = BridgeSpec::new(ManifoldId::Sphere2, a, b, 60.0, 2).unwrap();
        let sampler = BridgeSampler::new(&series, spec).unwrap();
        let n = 20_000usize;
        let loops = sampler.sample(3, n).unwrap();
        // uniform law: z-coordinate uniform on [−1,1]
        let bins = 50usize;
        let mut counts = vec![0usize; bins];
        for l in &loops {
            let z = l.points[1].coords3()[2];
            let idx = (((z + 1.0) / 2.0) * bins as f64).min(bins as f64 - 1.0) as usize;
            counts[idx] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 1% critical value for df = 49
        assert!(chi2 < 74.92, "chi2 = {chi2}");
    }

    #[test]
    fn sphere_transports_are_chained_isometries() {
        let series = sphere_series();
        let a = Point::sphere([0.0, 0.0, 1.0]).unwrap();
        let spec = BridgeSpec::new(ManifoldId::Sphere2, a, a, 0.4, 4).unwrap();
        let sampler = BridgeSampler::new(&series, spec).unwrap();
        let omega = sampler.sample(11, 1).unwrap().pop().unwrap();
        assert!(omega.has_transports());
        let v = Tangent::sphere_projected(omega.points[1], [0.3, -0.2, 0.9]);
        let w = omega.transport(1, 3, &v).unwrap();
        assert!((w.norm() - v.norm()).abs() < 1e-12);
        // same as composing the two segment transports directly
        let step = geometry::parallel_transport(ManifoldId::Sphere2, &omega.points[1], &omega.points[2], &v).unwrap();
        let step = geometry::parallel_transport(ManifoldId::Sphere2, &omega.points[2], &omega.points[3], &step).unwrap();
        assert!(w.add(&step.scale(-1.0)).norm() < 1e-12);
        // inverse direction composes back
        let back = omega.transport(3, 1, &w).unwrap();
        assert!(back.add(&v.scale(-1.0)).norm() < 1e-12);
    }

    #[test]
    fn tube_indicator_and_escape() {
        let series = circle_series();
        let spec = BridgeSpec::new(ManifoldId::Circle, Point::circle(0.0), Point::circle(0.0), 0.05, 4).unwrap();
        // r at the diameter: escape impossible
        let tube_wide = TubeSpec { r: PI + 0.1, segments: 4 };
        let est = tube_escape_probability(&series, &spec, &tube_wide, 1, 2_000).unwrap();
        assert_eq!(est.estimate, 0.0);
        // moderate tube: estimate below the paper-shaped envelope
        let tube = TubeSpec { r: 0.8, segments: 4 };
        let est = tube_escape_probability(&series, &spec, &tube, 1, 2_000).unwrap();
        let env = escape_envelope(&spec, &tube, 0.1, 4);
        assert!(est.estimate <= env, "estimate {} vs envelope {env}", est.estimate);
    }

    #[test]
    fn n2_escape_matches_quadrature_mass() {
        // N = 2: escape = midpoint-measure mass outside U^r, by quadrature
        let series = circle_series();
        let a = Point::circle(0.0);
        let b = Point::circle(0.4);
        let spec = BridgeSpec::new(ManifoldId::Circle, a, b, 0.08, 2).unwrap();
        let tube = TubeSpec { r: 0.5, segments: 2 };
        let grid = 40_000;
        let h = TAU / grid as f64;
        let mut outside = 0.0;
        for i in 0..grid {
            let x = Point::circle(i as f64 * h);
            if tube_indicator(&spec, &tube, &[x]) == 0 {
                outside += marginal_log_density(&series, &spec, &[x]).unwrap().exp();
            }
        }
        outside *= h;
        let est = tube_escape_probability(&series, &spec, &tube, 5, 100_000).unwrap();
        assert!(
            (est.ci_low..=est.ci_high).contains(&outside),
            "quadrature {outside} outside CI [{}, {}]",
            est.ci_low,
            est.ci_high
        );
    }
}
