//! Spectral heat kernels on the model manifolds.
//!
//! Generator convention ∂ₜp = ½Δp, so eigencomponents decay as exp(−k²t/2)
//! on S¹ and exp(−ℓ(ℓ+1)t/2) on S². The small-time limit t·log pₜ → −d²/2
//! fixes this normalization. The circle additionally carries the
//! wrapped-Gaussian dual representation, used below `t_min` and as a
//! cross-check.

use crate::geometry::{distance, log_map, ManifoldId, Point, Tangent};
use crate::{Error, Result};
use std::f64::consts::{PI, TAU};

/// Truncated spectral expansion of p_t(x,y) for one model manifold.
///
/// The truncation index is chosen so that the dropped tail is below
/// `tail_tol` for every t ≥ `t_min`.
#[derive(Debug, Clone)]
pub struct HeatKernelSeries {
    pub manifold: ManifoldId,
    pub max_index: usize,
    pub tail_tol: f64,
    pub t_min: f64,
}

impl HeatKernelSeries {
    /// Builds a series valid down to `t_min` with tail below `tail_tol`.
    pub fn new(manifold: ManifoldId, t_min: f64, tail_tol: f64) -> Result<HeatKernelSeries> {
        if t_min <= 0.0 || tail_tol <= 0.0 {
            return Err(Error::Domain("t_min and tail_tol must be positive".into()));
        }
        let max_index = match manifold {
            // |2·e^{-k²t/2}·cos| summed beyond K is ≤ 2∑_{k>K} e^{-k²t/2}
            // ≤ 2e^{-K²t/2}/(1 - e^{-Kt}); walk K up until that is small.
            ManifoldId::Circle => {
                let mut k = 4usize;
                while circle_tail_bound(k, t_min) > tail_tol * (1.0 / TAU) {
                    k += 1;
                    if k > 100_000 {
                        return Err(Error::Domain("circle truncation did not converge".into()));
                    }
                }
                k
            }
            ManifoldId::Sphere2 => {
                let mut l = 4usize;
                while sphere_tail_bound(l, t_min) > tail_tol {
                    l += 1;
                    if l > 100_000 {
                        return Err(Error::Domain("sphere truncation did not converge".into()));
                    }
                }
                l
            }
        };
        Ok(HeatKernelSeries { manifold, max_index, tail_tol, t_min })
    }

    /// Series with library defaults: t_min = 1e-3, tail_tol = 1e-12.
    pub fn default_for(manifold: ManifoldId) -> HeatKernelSeries {
        HeatKernelSeries::new(manifold, 1e-3, 1e-12).expect("default parameters are valid")
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if t < self.t_min {
            return Err(Error::Truncation { t, t_min: self.t_min });
        }
        Ok(())
    }

    /// p_t(x,y); a function of d(x,y) only.
    pub fn density(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        self.check_t(t)?;
        // positive by clamping the S² dead zone (see density_at_distance)
        Ok(self
            .density_at_distance(t, distance(self.manifold, x, y))
            .max(1e-300))
    }

    /// Kernel value at geodesic distance d (no t_min gate; internal and
    /// used by samplers that certify their own step times).
    ///
    /// On S¹ the Poisson-dual wrapped-Gaussian form takes over below a
    /// crossover time where the Fourier sum would cancel catastrophically;
    /// the two representations agree to 1e−10 in the overlap. On S² the
    /// Legendre sum has an f64 cancellation floor; values in the dead zone
    /// (true magnitude far below that floor) come back as noise of order
    /// 1e−15·‖series‖ and are clamped to a positive floor by `density`.
    pub fn density_at_distance(&self, t: f64, d: f64) -> f64 {
        match self.manifold {
            ManifoldId::Circle => {
                if t < CIRCLE_CROSSOVER_T {
                    circle_wrapped_gaussian(t, d)
                } else {
                    circle_fourier(t, d, self.max_index)
                }
            }
            ManifoldId::Sphere2 => sphere_density(t, d, self.max_index),
        }
    }

    /// Radial derivative ∂_d p_t at distance d.
    pub fn density_dd(&self, t: f64, d: f64) -> f64 {
        match self.manifold {
            ManifoldId::Circle => {
                if t < CIRCLE_CROSSOVER_T {
                    circle_wrapped_gaussian_dd(t, d)
                } else {
                    circle_fourier_dd(t, d, self.max_index)
                }
            }
            ManifoldId::Sphere2 => sphere_density_dd(t, d, self.max_index),
        }
    }

    /// ∇ₓ log p_t(x,a) by term-wise differentiation, with the scalar
    /// ratio |∇log p| / (d/t + 1/√t) reported alongside.
    pub fn grad_log_density(&self, t: f64, x: &Point, a: &Point) -> Result<(Tangent, f64)> {
        self.check_t(t)?;
        let d = distance(self.manifold, x, a);
        if d < 1e-14 {
            return Ok((Tangent::zero(*x), 0.0));
        }
        if d >= self.manifold.injectivity_radius() - 1e-9 {
            return Err(Error::CutLocus("grad_log_density at the cut locus".into()));
        }
        let p = self.density_at_distance(t, d);
        let dp = self.density_dd(t, d);
        let radial = dp / p;
        // ∇_x d(x,a) is the unit vector pointing away from a.
        let away = log_map(self.manifold, x, a)?.scale(-1.0 / d);
        let grad = away.scale(radial);
        let ratio = grad.norm() / (d / t + 1.0 / t.sqrt());
        Ok((grad, ratio))
    }

    /// Varadhan residual t·log p_t(x,y) + d(x,y)²/2.
    pub fn varadhan_residual(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        self.check_t(t)?;
        let d = distance(self.manifold, x, y);
        Ok(t * self.density_at_distance(t, d).max(1e-300).ln() + d * d / 2.0)
    }

    /// sup_x p_t(a,x) / inf_x p_t(a,x) by dense scan over distance.
    pub fn osc_over(&self, t: f64, _a: &Point) -> Result<f64> {
        self.check_t(t)?;
        let n = 4096;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=n {
            let d = PI * i as f64 / n as f64;
            let p = self.density_at_distance(t, d);
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if lo <= 0.0 {
            return Err(Error::Domain(format!("non-positive kernel value at t = {t}")));
        }
        Ok(hi / lo)
    }

    /// ∫ p_t(x,y) dy over the manifold by quadrature.
    pub fn normalization(&self, t: f64, x: &Point) -> Result<f64> {
        self.check_t(t)?;
        match self.manifold {
            ManifoldId::Circle => {
                let f = |theta: f64| {
                    self.density_at_distance(t, distance(ManifoldId::Circle, x, &Point::circle(theta)))
                };
                Ok(composite_gauss(&f, 0.0, TAU, panels_for(t)))
            }
            ManifoldId::Sphere2 => {
                // product rule: colatitude Gauss x uniform longitude; the
                // integrand is rotation invariant so the longitude factor
                // integrates exactly to 2π.
                let f = |colat: f64| self.density_at_distance(t, colat) * colat.sin();
                Ok(TAU * composite_gauss(&f, 0.0, PI, panels_for(t)))
            }
        }
    }

    /// ∫ p_s(x,z) p_t(z,y) dz − p_{s+t}(x,y), the Chapman–Kolmogorov defect.
    pub fn chapman_kolmogorov_defect(&self, s: f64, t: f64, x: &Point, y: &Point) -> Result<f64> {
        self.check_t(s)?;
        self.check_t(t)?;
        let lhs = match self.manifold {
            ManifoldId::Circle => {
                let f = |theta: f64| {
                    let z = Point::circle(theta);
                    self.density_at_distance(s, distance(ManifoldId::Circle, x, &z))
                        * self.density_at_distance(t, distance(ManifoldId::Circle, &z, y))
                };
                composite_gauss(&f, 0.0, TAU, panels_for(s.min(t)))
            }
            ManifoldId::Sphere2 => {
                let panels = panels_for(s.min(t));
                let f = |colat: f64, lon: f64| {
                    let z = Point::sphere_normalized([
                        colat.sin() * lon.cos(),
                        colat.sin() * lon.sin(),
                        colat.cos(),
                    ])
                    .unwrap();
                    self.density_at_distance(s, distance(ManifoldId::Sphere2, x, &z))
                        * self.density_at_distance(t, distance(ManifoldId::Sphere2, &z, y))
                        * colat.sin()
                };
                // longitude by trapezoid (periodic smooth integrand)
                let n_lon = 8 * panels;
                let mut total = 0.0;
                for j in 0..n_lon {
                    let lon = TAU * j as f64 / n_lon as f64;
                    total += composite_gauss(&|c| f(c, lon), 0.0, PI, panels);
                }
                total * TAU / n_lon as f64
            }
        };
        let rhs = self.density(s + t, x, y)?;
        Ok(lhs - rhs)
    }
}

fn circle_tail_bound(k: usize, t: f64) -> f64 {
    let kf = k as f64;
    let head = (-kf * kf * t / 2.0).exp();
    2.0 * head / (1.0 - (-kf * t).exp()).max(1e-300)
}

fn sphere_tail_bound(l: usize, t: f64) -> f64 {
    // ∑_{ℓ>L} (2ℓ+1)e^{-ℓ(ℓ+1)t/2} ≤ (2/t)·e^{-L(L+1)t/2} by comparison
    // with the integral of (2u+1)e^{-u(u+1)t/2}.
    let lf = l as f64;
    (2.0 / t) * (-lf * (lf + 1.0) * t / 2.0).exp() / (4.0 * PI)
        * (4.0 * PI)
}

/// Below this time the circle switches to the wrapped-Gaussian dual; the
/// Fourier sum loses the deep tail to f64 cancellation there.
const CIRCLE_CROSSOVER_T: f64 = 0.5;

/// Fourier form on S¹: (1/2π)(1 + 2Σ e^{-k²t/2} cos(kd)).
pub fn circle_fourier(t: f64, d: f64, max_index: usize) -> f64 {
    let mut acc = 1.0;
    for k in 1..=max_index {
        let kf = k as f64;
        let w = (-kf * kf * t / 2.0).exp();
        if w < 1e-18 {
            break;
        }
        acc += 2.0 * w * (kf * d).cos();
    }
    acc / TAU
}

fn circle_fourier_dd(t: f64, d: f64, max_index: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=max_index {
        let kf = k as f64;
        let w = (-kf * kf * t / 2.0).exp();
        if w < 1e-18 {
            break;
        }
        acc -= 2.0 * kf * w * (kf * d).sin();
    }
    acc / TAU
}

/// Wrapped-Gaussian form on S¹: (1/√(2πt)) Σ_k exp(−(d+2πk)²/(2t)).
///
/// Dual to the Fourier form by Poisson summation; valid for all t > 0 and
/// positive term by term.
pub fn circle_wrapped_gaussian(t: f64, d: f64) -> f64 {
    let mut acc = 0.0;
    let k_max = (3 + (8.0 * t.sqrt() / TAU).ceil() as i64).max(3);
    for k in -k_max..=k_max {
        let u = d + TAU * k as f64;
        acc += (-u * u / (2.0 * t)).exp();
    }
    acc / (TAU * t).sqrt()
}

fn circle_wrapped_gaussian_dd(t: f64, d: f64) -> f64 {
    let mut acc = 0.0;
    let k_max = (3 + (8.0 * t.sqrt() / TAU).ceil() as i64).max(3);
    for k in -k_max..=k_max {
        let u = d + TAU * k as f64;
        acc += -(u / t) * (-u * u / (2.0 * t)).exp();
    }
    acc / (TAU * t).sqrt()
}

/// Legendre form on S²: Σ (2ℓ+1)/(4π) e^{-ℓ(ℓ+1)t/2} P_ℓ(cos d).
fn sphere_density(t: f64, d: f64, max_index: usize) -> f64 {
    let x = d.cos();
    let mut p_prev = 1.0; // P_0
    let mut p_curr = x; // P_1
    let mut acc = 1.0 / (4.0 * PI);
    for l in 1..=max_index {
        let lf = l as f64;
        let w = (-lf * (lf + 1.0) * t / 2.0).exp();
        acc += (2.0 * lf + 1.0) / (4.0 * PI) * w * p_curr;
        if w * (2.0 * lf + 1.0) < 1e-18 {
            break;
        }
        let p_next = ((2.0 * lf + 1.0) * x * p_curr - lf * p_prev) / (lf + 1.0);
        p_prev = p_curr;
        p_curr = p_next;
    }
    acc
}

fn sphere_density_dd(t: f64, d: f64, max_index: usize) -> f64 {
    let x = d.cos();
    let sin_d = d.sin();
    if sin_d.abs() < 1e-14 {
        return 0.0;
    }
    let mut p_prev = 1.0;
    let mut p_curr = x;
    let mut acc = 0.0;
    for l in 1..=max_index {
        let lf = l as f64;
        let w = (-lf * (lf + 1.0) * t / 2.0).exp();
        // d/dd P_ℓ(cos d) = −ℓ(P_{ℓ-1}(x) − x·P_ℓ(x))/sin d
        let dd = -lf * (p_prev - x * p_curr) / sin_d;
        acc += (2.0 * lf + 1.0) / (4.0 * PI) * w * dd;
        if w * (2.0 * lf + 1.0) * lf < 1e-18 {
            break;
        }
        let p_next = ((2.0 * lf + 1.0) * x * p_curr - lf * p_prev) / (lf + 1.0);
        p_prev = p_curr;
        p_curr = p_next;
    }
    acc
}

fn panels_for(t: f64) -> usize {
    // enough panels that the 8-node Gauss rule resolves a kernel of width √t
    ((8.0 * TAU / t.sqrt()).ceil() as usize).clamp(32, 4096)
}

const GAUSS8_X: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GAUSS8_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Composite 8-node Gauss–Legendre rule on [a,b].
pub fn composite_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + h / 2.0;
        let half = h / 2.0;
        for i in 0..8 {
            total += GAUSS8_W[i] * f(mid + half * GAUSS8_X[i]);
        }
    }
    total * (b - a) / (2.0 * panels as f64)
}

/// Dense lookup table of d ↦ p_t(d) for fast repeated evaluation at fixed t.
///
/// Catmull–Rom interpolation on a uniform grid over [0, π]; relative error
/// is far below Monte Carlo resolution for all step times used by the
/// samplers.
#[derive(Debug, Clone)]
pub struct KernelTable {
    values: Vec<f64>,
    step: f64,
}

impl KernelTable {
    pub fn build(series: &HeatKernelSeries, t: f64) -> KernelTable {
        let n = if t < 0.01 { 16_384 } else { 8_192 };
        let step = PI / n as f64;
        let values = (0..=n)
            .map(|i| series.density_at_distance(t, i as f64 * step))
            .collect();
        KernelTable { values, step }
    }

    pub fn eval(&self, d: f64) -> f64 {
        let n = self.values.len() - 1;
        let x = (d / self.step).clamp(0.0, n as f64);
        let i = (x as usize).min(n - 1);
        let u = x - i as f64;
        let p0 = self.values[i.saturating_sub(1).max(0)];
        let p1 = self.values[i];
        let p2 = self.values[i + 1];
        let p3 = self.values[(i + 2).min(n)];
        let a = (-p0 + 3.0 * p1 - 3.0 * p2 + p3) / 2.0;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - p3 / 2.0;
        let c = (p2 - p0) / 2.0;
        ((a * u + b) * u + c) * u + p1
    }
}
