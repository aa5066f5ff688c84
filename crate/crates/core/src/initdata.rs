//! Compactly supported smooth initial data built from mollifier bumps.
//!
//! A bump with center `c`, support radius `ρ` and amplitude `a` is
//! `a · ρ̃(2(y − c)/ρ)` with `ρ̃(z) = exp(−1/(4 − |z|²))` for `|z| < 2`.

use crate::quadrature::{
    compensated_sum, integrate_ball, AxisBox, FixedRule, Grading, QuadSpec, Supported,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

pub type Point = Vec<f64>;

/// Largest dimension accepted for heat-part-only computations.
pub const MAX_DIM: usize = 7;
/// `ρ̃(0)`.
pub fn bump_peak() -> f64 {
    (-0.25f64).exp()
}

/// Surface measure of the unit sphere `S^{n-1}`.
pub fn unit_sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / statrs::function::gamma::gamma(n as f64 / 2.0)
}

/// `∫_0^2 ρ̃(z) z^{n-1} dz` for `n = 1..=MAX_DIM`.
fn radial_moments() -> &'static [f64; MAX_DIM + 1] {
    static TABLE: OnceLock<[f64; MAX_DIM + 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let rule = FixedRule::graded(0.0, 2.0, 12, 10, Grading::Right);
        let mut out = [0.0; MAX_DIM + 1];
        for (n, slot) in out.iter_mut().enumerate().skip(1) {
            *slot = rule.integrate(|z| unit_profile(z) * z.powi(n as i32 - 1));
        }
        out
    })
}

/// `ρ̃(z)` as a function of `|z|`.
pub fn unit_profile(z: f64) -> f64 {
    let w = 4.0 - z * z;
    if w <= 0.0 {
        0.0
    } else {
        (-1.0 / w).exp()
    }
}

/// `∫_{R^n} ρ̃(z) dz`.
pub fn unit_bump_mass(n: usize) -> f64 {
    unit_sphere_area(n) * radial_moments()[n]
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Radial profile derivatives at one distance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProfileJet {
    pub value: f64,
    pub d1_over_q: f64,
    pub hess_coef: f64,
}

/// One mollifier bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Point,
    /// Support radius.
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: Point, radius: f64, amplitude: f64) -> Self {
        Bump {
            center,
            radius,
            amplitude,
        }
    }

    /// `ρ(y/ε)/ε^n` with `ρ = ρ̃/‖ρ̃‖_{L¹}`, supported in `B_{2ε}`, unit mass.
    pub fn mollifier(center: Point, eps: f64) -> Self {
        let n = center.len();
        let amplitude = 1.0 / (eps.powi(n as i32) * unit_bump_mass(n));
        Bump {
            center,
            radius: 2.0 * eps,
            amplitude,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Radial profile `P(q)` at distance `q` from the center.
    #[inline]
    pub fn profile(&self, q: f64) -> f64 {
        let z = 2.0 * q / self.radius;
        self.amplitude * unit_profile(z)
    }

    /// `P'(q)/q`, smooth through the center.
    #[inline]
    pub fn profile_d1_over_q(&self, q: f64) -> f64 {
        let z = 2.0 * q / self.radius;
        let w = 4.0 - z * z;
        if w <= 0.0 {
            return 0.0;
        }
        -8.0 * self.amplitude / (self.radius * self.radius) * (-1.0 / w).exp() / (w * w)
    }

    /// `P''(q)`.
    #[inline]
    pub fn profile_d2(&self, q: f64) -> f64 {
        let z = 2.0 * q / self.radius;
        let w = 4.0 - z * z;
        if w <= 0.0 {
            return 0.0;
        }
        let r2 = self.radius * self.radius;
        let e = (-1.0 / w).exp();
        let g = -8.0 * self.amplitude / r2 * e / (w * w);
        let dg_dw = -8.0 * self.amplitude / r2 * e * (1.0 / w.powi(4) - 2.0 / w.powi(3));
        g + q * dg_dw * (-8.0 * q / r2)
    }

    /// `(P, P'/q, (P'' − P'/q)/q²)` from a single exponential.
    #[inline]
    pub fn profile_jet(&self, q: f64) -> ProfileJet {
        let z = 2.0 * q / self.radius;
        let w = 4.0 - z * z;
        if w <= 0.0 {
            return ProfileJet::default();
        }
        let r2 = self.radius * self.radius;
        let e = self.amplitude * (-1.0 / w).exp();
        let w2 = w * w;
        ProfileJet {
            value: e,
            d1_over_q: -8.0 / r2 * e / w2,
            hess_coef: 64.0 / (r2 * r2) * e * (1.0 - 2.0 * w) / (w2 * w2),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.profile(distance(x, &self.center))
    }

    /// `∫ bump`.
    pub fn mass(&self) -> f64 {
        let n = self.dim();
        self.amplitude * (0.5 * self.radius).powi(n as i32) * unit_bump_mass(n)
    }

    pub fn support_box(&self) -> AxisBox {
        AxisBox {
            lo: self.center.iter().map(|c| c - self.radius).collect(),
            hi: self.center.iter().map(|c| c + self.radius).collect(),
        }
    }
}

/// A finite sum of bumps in a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSum {
    pub dim: usize,
    pub bumps: Vec<Bump>,
    /// Factor already applied to the amplitudes by [`BumpSum::normalized_l1`].
    pub normalization: f64,
}

/// L¹ and L^∞ norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l1: f64,
    pub linf: f64,
}

impl BumpSum {
    pub fn new(dim: usize, bumps: Vec<Bump>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::invalid(
                "BumpSum",
                format!("dimension {dim} outside 1..={MAX_DIM}"),
            ));
        }
        for (i, b) in bumps.iter().enumerate() {
            if b.center.len() != dim {
                return Err(Error::invalid(
                    "BumpSum",
                    format!("bump {i} has a {}-dimensional center", b.center.len()),
                ));
            }
            if !(b.radius > 0.0) || !b.radius.is_finite() {
                return Err(Error::invalid(
                    "BumpSum",
                    format!("bump {i} radius {} is not positive", b.radius),
                ));
            }
            if !b.amplitude.is_finite() || b.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid(
                    "BumpSum",
                    format!("bump {i} has non-finite data"),
                ));
            }
        }
        Ok(BumpSum {
            dim,
            bumps,
            normalization: 1.0,
        })
    }

    pub fn zero(dim: usize) -> Self {
        BumpSum {
            dim,
            bumps: Vec::new(),
            normalization: 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bumps.iter().all(|b| b.amplitude == 0.0)
    }

    /// Sum of two data in the same dimension.
    pub fn plus(&self, other: &BumpSum) -> Result<BumpSum> {
        if self.dim != other.dim {
            return Err(Error::invalid("BumpSum::plus", "dimension mismatch"));
        }
        let mut bumps = self.bumps.clone();
        bumps.extend(other.bumps.iter().cloned());
        Ok(BumpSum {
            dim: self.dim,
            bumps,
            normalization: 1.0,
        })
    }

    /// Copy with amplitudes multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> BumpSum {
        BumpSum {
            dim: self.dim,
            bumps: self
                .bumps
                .iter()
                .map(|b| Bump {
                    amplitude: b.amplitude * factor,
                    ..b.clone()
                })
                .collect(),
            normalization: self.normalization * factor,
        }
    }

    /// Copy rescaled so that the L¹ norm equals `target`.
    pub fn normalized_l1(&self, target: f64) -> Result<BumpSum> {
        let l1 = self.norms()?.l1;
        if !(l1 > 0.0) {
            return Err(Error::invalid("normalize_l1", "datum has zero L1 norm"));
        }
        Ok(self.scaled(target / l1))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.bumps.iter().map(|b| b.eval(x)).sum()
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for b in &self.bumps {
            let q = distance(x, &b.center);
            let d = b.profile_d1_over_q(q);
            if d != 0.0 {
                for i in 0..self.dim {
                    g[i] += d * (x[i] - b.center[i]);
                }
            }
        }
        g
    }

    /// Hessian, row-major `dim × dim`.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        for b in &self.bumps {
            let q = distance(x, &b.center);
            let g = b.profile_d1_over_q(q);
            if g == 0.0 && q >= b.radius {
                continue;
            }
            let d2 = b.profile_d2(q);
            for i in 0..n {
                h[i * n + i] += g;
            }
            if q > 0.0 {
                let coef = (d2 - g) / (q * q);
                for i in 0..n {
                    for j in 0..n {
                        h[i * n + j] += coef * (x[i] - b.center[i]) * (x[j] - b.center[j]);
                    }
                }
            }
        }
        h
    }

    pub fn bounding_box(&self) -> Option<AxisBox> {
        let mut it = self.bumps.iter().filter(|b| b.amplitude != 0.0);
        let first = it.next()?.support_box();
        Some(it.fold(first, |acc, b| {
            let bb = b.support_box();
            AxisBox {
                lo: acc.lo.iter().zip(&bb.lo).map(|(a, b)| a.min(*b)).collect(),
                hi: acc.hi.iter().zip(&bb.hi).map(|(a, b)| a.max(*b)).collect(),
            }
        }))
    }

    /// Whether `x` lies in the union of the closed support balls.
    pub fn in_support(&self, x: &[f64]) -> bool {
        self.bumps
            .iter()
            .any(|b| b.amplitude != 0.0 && distance(x, &b.center) <= b.radius)
    }

    /// Distance from `x` to the union of support balls (0 inside).
    pub fn distance_to_support(&self, x: &[f64]) -> f64 {
        self.bumps
            .iter()
            .filter(|b| b.amplitude != 0.0)
            .map(|b| (distance(x, &b.center) - b.radius).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// `∫ h(y) dy`.
    pub fn mass(&self) -> f64 {
        compensated_sum(self.bumps.iter().map(Bump::mass))
    }

    /// Mass-weighted mean of bump centers.
    pub fn centroid(&self) -> Result<Point> {
        let total = self.mass();
        if !(total > 0.0) {
            return Err(Error::invalid(
                "centroid",
                format!("total mass {total} is not positive"),
            ));
        }
        let mut m = vec![0.0; self.dim];
        for i in 0..self.dim {
            m[i] = compensated_sum(self.bumps.iter().map(|b| b.mass() * b.center[i])) / total;
        }
        Ok(m)
    }

    fn overlapping_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.bumps.len() {
            for j in i + 1..self.bumps.len() {
                let (a, b) = (&self.bumps[i], &self.bumps[j]);
                if a.amplitude != 0.0
                    && b.amplitude != 0.0
                    && distance(&a.center, &b.center) < a.radius + b.radius
                {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// L¹ and L^∞ norms.
    ///
    /// Exact per-bump sums when no bumps of opposite sign overlap; otherwise
    /// adaptive quadrature of `|h|` and a multistart local search.
    pub fn norms(&self) -> Result<Norms> {
        let overlaps = self.overlapping_pairs();
        let mixed = overlaps
            .iter()
            .any(|&(i, j)| self.bumps[i].amplitude * self.bumps[j].amplitude < 0.0);
        // Without opposite-sign overlaps, |h| is the sum of the |bumps|.
        let l1 = if mixed {
            self.l1_by_quadrature()?
        } else {
            compensated_sum(self.bumps.iter().map(|b| b.mass().abs()))
        };
        let linf = if overlaps.is_empty() {
            self.bumps
                .iter()
                .map(|b| b.amplitude.abs() * bump_peak())
                .fold(0.0, f64::max)
        } else {
            self.linf_by_search()
        };
        Ok(Norms { l1, linf })
    }

    fn l1_by_quadrature(&self) -> Result<f64> {
        let Some(bbox) = self.bounding_box() else {
            return Ok(0.0);
        };
        let center: Vec<f64> = bbox
            .lo
            .iter()
            .zip(&bbox.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let radius = bbox
            .lo
            .iter()
            .zip(&bbox.hi)
            .map(|(a, b)| 0.25 * (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
            * 1.0001;
        if self.dim > 3 {
            return Err(Error::invalid(
                "norms",
                "overlapping mixed-sign bumps need dimension ≤ 3",
            ));
        }
        let abs = Supported {
            f: |y: &[f64]| self.eval(y).abs(),
            support: bbox,
        };
        let spec = QuadSpec {
            target_abs_tol: 1e-10,
            target_rel_tol: 1e-10,
            max_refinement_depth: 18,
            base_order: 16,
        };
        integrate_ball(self.dim, &center, radius, &abs, &spec)
    }

    fn linf_by_search(&self) -> f64 {
        let mut best = 0.0f64;
        for b in &self.bumps {
            for sign in [1.0, -1.0] {
                let mut x = b.center.clone();
                let mut fx = sign * self.eval(&x);
                let mut step = 0.25 * b.radius;
                for _ in 0..200 {
                    let g = self.grad(&x);
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if gn < 1e-14 || step < 1e-12 {
                        break;
                    }
                    let cand: Vec<f64> = x
                        .iter()
                        .zip(&g)
                        .map(|(xi, gi)| xi + sign * step * gi / gn)
                        .collect();
                    let fc = sign * self.eval(&cand);
                    if fc > fx {
                        x = cand;
                        fx = fc;
                        step *= 1.5;
                    } else {
                        step *= 0.5;
                    }
                }
                best = best.max(fx);
            }
        }
        best
    }

    /// Diameter of the support (union of bump balls).
    pub fn support_diameter(&self) -> f64 {
        let active: Vec<&Bump> = self.bumps.iter().filter(|b| b.amplitude != 0.0).collect();
        let mut d = 0.0f64;
        for a in &active {
            for b in &active {
                d = d.max(distance(&a.center, &b.center) + a.radius + b.radius);
            }
        }
        d
    }

    /// Convex hull of the support.
    pub fn support_hull(&self) -> SupportHull {
        SupportHull::new(
            self.dim,
            self.bumps
                .iter()
                .filter(|b| b.amplitude != 0.0)
                .map(|b| (b.center.clone(), b.radius))
                .collect(),
        )
    }
}

/// Unit probe directions: 720 on the circle, 1200 on the sphere.
fn probe_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..720)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 720.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let m = 1200;
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut out: Vec<Vec<f64>> = (0..m)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    let mut v = vec![rho * phi.cos(), rho * phi.sin(), z];
                    v.resize(dim, 0.0);
                    v
                })
                .collect();
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; dim];
                    e[i] = s;
                    out.push(e);
                }
            }
            out
        }
    }
}

/// Convex hull of a union of balls, represented by its support function
/// `H(ω) = max_i (c_i·ω + ρ_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportHull {
    pub dim: usize,
    pub balls: Vec<(Point, f64)>,
    #[serde(skip)]
    directions: Vec<Vec<f64>>,
}

impl SupportHull {
    pub fn new(dim: usize, balls: Vec<(Point, f64)>) -> Self {
        SupportHull {
            dim,
            balls,
            directions: probe_directions(dim),
        }
    }

    /// Support function value in direction `omega` (unit vector).
    pub fn support_function(&self, omega: &[f64]) -> f64 {
        self.balls
            .iter()
            .map(|(c, r)| c.iter().zip(omega).map(|(a, b)| a * b).sum::<f64>() + r)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    /// Membership in the hull: exact inside any ball, otherwise checked
    /// against the support function on the probe directions.
    pub fn contains(&self, x: &[f64]) -> bool {
        if self.balls.is_empty() {
            return false;
        }
        if self.balls.iter().any(|(c, r)| distance(x, c) <= *r) {
            return true;
        }
        self.directions.iter().all(|w| {
            let xw: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            xw <= self.support_function(w)
        })
    }

    /// Smallest `ε` with `x ∈ hull + εB` on the probe directions (0 inside).
    pub fn excess(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            return 0.0;
        }
        self.directions
            .iter()
            .map(|w| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - self.support_function(w))
            .fold(0.0, f64::max)
    }

    /// `sup_{η ∈ other} dist(η, self)`, from support functions.
    pub fn deviation_of(&self, other: &SupportHull) -> f64 {
        if other.balls.is_empty() {
            return 0.0;
        }
        if self.balls.is_empty() {
            return f64::INFINITY;
        }
        self.directions
            .iter()
            .map(|w| other.support_function(w) - self.support_function(w))
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounding box of the hull enlarged by `margin`.
    pub fn bounding_box(&self, margin: f64) -> AxisBox {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for (c, r) in &self.balls {
            for i in 0..self.dim {
                lo[i] = lo[i].min(c[i] - r - margin);
                hi[i] = hi[i].max(c[i] + r + margin);
            }
        }
        AxisBox { lo, hi }
    }
}

/// Initial data `(f, g)` with derived quantities for `h = f + g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSetup {
    pub f: BumpSum,
    pub g: BumpSum,
    pub h: BumpSum,
    pub m_h: Point,
    pub hull_h: SupportHull,
    pub hull_f: SupportHull,
    pub d_h: f64,
    pub d_f: f64,
    pub delta_fh: f64,
}

/// Geometric constants of a setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub d_h: f64,
    pub d_f: f64,
    pub delta_fh: f64,
    /// Smallest `t` with `t ≥ φ(t) + max{d_h, δ + d_f}`.
    pub t0: f64,
}

impl ProblemSetup {
    /// Validates `h = f + g ≥ 0`, `h ≢ 0`, and that `m_h` lies in `CS(h)`.
    pub fn new(f: BumpSum, g: BumpSum) -> Result<Self> {
        if f.dim != g.dim {
            return Err(Error::invalid(
                "ProblemSetup",
                format!("f has dimension {}, g has {}", f.dim, g.dim),
            ));
        }
        let h = f.plus(&g)?;
        if h.is_zero() {
            return Err(Error::invalid(
                "ProblemSetup",
                "h = f + g vanishes identically",
            ));
        }
        if let Some(y) = negative_sample(&h) {
            return Err(Error::invalid(
                "ProblemSetup",
                format!("h = f + g is negative at {y:?}"),
            ));
        }
        let m_h = h.centroid()?;
        let hull_h = h.support_hull();
        let hull_f = f.support_hull();
        if !hull_h.contains(&m_h) {
            return Err(Error::invalid(
                "ProblemSetup",
                "centroid of h lies outside CS(h)",
            ));
        }
        let d_h = h.support_diameter();
        let d_f = f.support_diameter();
        let delta_fh = if f.is_zero() {
            0.0
        } else {
            hull_f.deviation_of(&hull_h)
        };
        Ok(ProblemSetup {
            f,
            g,
            h,
            m_h,
            hull_h,
            hull_f,
            d_h,
            d_f,
            delta_fh,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.dim
    }

    /// Geometric constants; `phi_exponent = None` means `φ ≡ 0`.
    pub fn geometry(&self, phi_exponent: Option<f64>) -> Geometry {
        let k = self.d_h.max(self.delta_fh + self.d_f);
        let phi = |t: f64| phi_exponent.map_or(0.0, |e| t.powf(e));
        let excess = |t: f64| t - phi(t) - k;
        let t0 = if excess(k) >= 0.0 {
            // φ ≥ 0, so t ≥ k is necessary; bisect below only if φ vanishes there.
            k
        } else {
            let mut lo = k;
            let mut hi = k.max(1.0) * 2.0;
            while excess(hi) < 0.0 {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if excess(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        Geometry {
            d_h: self.d_h,
            d_f: self.d_f,
            delta_fh: self.delta_fh,
            t0,
        }
    }
}

/// A point of the support where `h < 0`, found on a dense polar sample of
/// each bump ball.
fn negative_sample(h: &BumpSum) -> Option<Point> {
    let n = h.dim;
    let dirs: Vec<Vec<f64>> = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..48)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / 48.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => probe_directions(n).into_iter().step_by(8).collect(),
    };
    let floor = -1e-12
        * h.bumps
            .iter()
            .map(|b| b.amplitude.abs())
            .fold(0.0, f64::max);
    for b in h.bumps.iter().filter(|b| b.amplitude < 0.0) {
        for k in 0..=16 {
            let r = b.radius * k as f64 / 16.0;
            for d in &dirs {
                let y: Vec<f64> = b.center.iter().zip(d).map(|(c, di)| c + r * di).collect();
                if h.eval(&y) < floor {
                    return Some(y);
                }
            }
        }
    }
    None
}

/// JSON description of initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitDataSpec {
    pub dim: usize,
    #[serde(default)]
    pub f: Vec<Bump>,
    #[serde(default)]
    pub g: Vec<Bump>,
    /// Scale `f` and `g` by a common factor so that `‖f + g‖_{L¹}` equals this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_l1: Option<f64>,
}

impl InitDataSpec {
    pub fn build(&self) -> Result<ProblemSetup> {
        let f = BumpSum::new(self.dim, self.f.clone())?;
        let g = BumpSum::new(self.dim, self.g.clone())?;
        match self.normalize_l1 {
            None => ProblemSetup::new(f, g),
            Some(target) => {
                if !(target > 0.0) {
                    return Err(Error::invalid(
                        "normalize_l1",
                        format!("target {target} must be positive"),
                    ));
                }
                let l1 = f.plus(&g)?.norms()?.l1;
                if !(l1 > 0.0) {
                    return Err(Error::invalid("normalize_l1", "h = f + g has zero L1 norm"));
                }
                let k = target / l1;
                ProblemSetup::new(f.scaled(k), g.scaled(k))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// `∫_{-2}^{2} ρ̃`, from 50-digit quadrature.
    const UNIT_MASS_1D: f64 = 2.481_250_006_189_24;

    fn two_bump_2d() -> BumpSum {
        BumpSum::new(
            2,
            vec![
                Bump::new(vec![0.0, 0.0], 0.5, 1.0),
                Bump::new(vec![0.8, 0.3], 0.4, 0.6),
            ],
        )
        .unwrap()
    }

    #[test]
    fn unit_masses() {
        assert_relative_eq!(unit_bump_mass(1), UNIT_MASS_1D, max_relative = 1e-13);
        assert_relative_eq!(unit_sphere_area(3), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(1), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn eval_examples() {
        let b = BumpSum::new(2, vec![Bump::new(vec![1.0, 2.0], 0.5, 3.0)]).unwrap();
        assert_relative_eq!(b.eval(&[1.0, 2.0]), 3.0 * bump_peak(), max_relative = 1e-15);
        assert_eq!(b.eval(&[1.6, 2.0]), 0.0);
        let twice = BumpSum::new(2, vec![Bump::new(vec![1.0, 2.0], 0.5, 3.0); 2]).unwrap();
        assert_relative_eq!(
            twice.eval(&[1.1, 2.1]),
            2.0 * b.eval(&[1.1, 2.1]),
            max_relative = 1e-15
        );
    }

    #[test]
    fn grad_examples() {
        let b = two_bump_2d();
        // Only the first bump reaches the origin, and it is flat at its center.
        assert!(b.grad(&[0.0, 0.0]).iter().all(|v| *v == 0.0));
        assert!(b.grad(&[5.0, 5.0]).iter().all(|v| *v == 0.0));
        let g = b.grad(&[0.2, 0.0]);
        assert!(g[0] < 0.0 && g[1] == 0.0);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let b = two_bump_2d();
        let x = [0.55, 0.2];
        let h = b.hessian(&x);
        let step = 1e-6;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += step;
            xm[j] -= step;
            let gp = b.grad(&xp);
            let gm = b.grad(&xm);
            for i in 0..2 {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!(
                    (fd - h[i * 2 + j]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "({i},{j})"
                );
            }
        }
    }

    #[test]
    fn profile_jet_consistent() {
        let b = Bump::new(vec![0.0, 0.0], 0.7, 1.3);
        for q in [0.0, 0.1, 0.3, 0.5, 0.69] {
            let j = b.profile_jet(q);
            assert_relative_eq!(j.value, b.profile(q), max_relative = 1e-14);
            assert_relative_eq!(j.d1_over_q, b.profile_d1_over_q(q), max_relative = 1e-14);
            if q > 0.0 {
                let expect = (b.profile_d2(q) - b.profile_d1_over_q(q)) / (q * q);
                assert!((j.hess_coef - expect).abs() <= 1e-8 * (1.0 + expect.abs()));
            }
        }
        assert_eq!(b.profile_jet(0.7), ProfileJet::default());
    }

    #[test]
    fn centroid_examples() {
        let one = BumpSum::new(2, vec![Bump::new(vec![1.0, -1.0], 0.3, 2.0)]).unwrap();
        let c = one.centroid().unwrap();
        assert_relative_eq!(c[0], 1.0);
        assert_relative_eq!(c[1], -1.0);
        let pair = BumpSum::new(
            2,
            vec![
                Bump::new(vec![1.0, 1.0], 0.3, 2.0),
                Bump::new(vec![-1.0, -1.0], 0.3, 2.0),
            ],
        )
        .unwrap();
        let c = pair.centroid().unwrap();
        assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15);
        let r = 0.5;
        let unit = Bump::new(vec![0.0, 0.0], r, 1.0).mass();
        let weighted = BumpSum::new(
            2,
            vec![
                Bump::new(vec![0.0, 0.0], r, 1.0 / unit),
                Bump::new(vec![4.0, 0.0], r, 3.0 / unit),
            ],
        )
        .unwrap();
        let c = weighted.centroid().unwrap();
        assert_relative_eq!(c[0], 3.0, max_relative = 1e-14);
        assert!(BumpSum::zero(2).centroid().is_err());
    }

    #[test]
    fn centroid_defining_identity() {
        let b = two_bump_2d();
        let m = b.centroid().unwrap();
        let spec = QuadSpec::default();
        let bbox = b.bounding_box().unwrap();
        for i in 0..2 {
            let moment = Supported {
                f: |y: &[f64]| b.eval(y) * (y[i] - m[i]),
                support: bbox.clone(),
            };
            let v = integrate_ball(2, &[0.4, 0.15], 1.5, &moment, &spec).unwrap();
            assert!(
                v.abs() <= 1e-8 * b.mass() * b.support_diameter(),
                "component {i}: {v}"
            );
        }
    }

    #[test]
    fn hull_examples() {
        let one = BumpSum::new(2, vec![Bump::new(vec![0.0, 0.0], 1.0, 1.0)])
            .unwrap()
            .support_hull();
        assert!(one.contains(&[0.99, 0.0]));
        assert!(!one.contains(&[1.01, 0.0]));
        let two = BumpSum::new(
            2,
            vec![
                Bump::new(vec![2.0, 0.0], 1.0, 1.0),
                Bump::new(vec![-2.0, 0.0], 1.0, 1.0),
            ],
        )
        .unwrap()
        .support_hull();
        assert!(two.contains(&[0.0, 0.0]));
        assert!(two.contains(&[0.0, 0.99]));
        assert!(!two.contains(&[0.0, 1.01]));
        let line = BumpSum::new(
            1,
            vec![
                Bump::new(vec![0.0], 0.5, 1.0),
                Bump::new(vec![3.0], 0.5, 1.0),
            ],
        )
        .unwrap();
        let hull = line.support_hull();
        assert!(hull.contains(&[3.4]) && hull.contains(&[-0.5]) && !hull.contains(&[3.6]));
        let ball3 = BumpSum::new(3, vec![Bump::new(vec![0.0; 3], 1.0, 1.0)])
            .unwrap()
            .support_hull();
        assert!(ball3.contains(&[0.0, 0.0, 0.99]) && !ball3.contains(&[0.0, 0.0, 1.01]));
    }

    #[test]
    fn norms_examples() {
        let eps = 0.02;
        let f = BumpSum::new(1, vec![Bump::mollifier(vec![0.0], eps)]).unwrap();
        let n = f.norms().unwrap();
        assert_relative_eq!(n.l1, 1.0, max_relative = 1e-12);
        let half = BumpSum::new(1, vec![Bump::mollifier(vec![0.0], eps / 2.0)]).unwrap();
        assert_relative_eq!(
            n.linf / half.norms().unwrap().linf,
            0.5,
            max_relative = 1e-14
        );
        let b = two_bump_2d();
        let parts: f64 = b.bumps.iter().map(|x| x.mass()).sum();
        let apart = BumpSum::new(
            2,
            vec![
                Bump::new(vec![0.0, 0.0], 0.5, 1.0),
                Bump::new(vec![3.0, 0.0], 0.4, 0.6),
            ],
        )
        .unwrap();
        let apart_parts: f64 = apart.bumps.iter().map(|x| x.mass()).sum();
        assert_relative_eq!(apart.norms().unwrap().l1, apart_parts, max_relative = 1e-14);
        assert_relative_eq!(b.norms().unwrap().l1, parts, max_relative = 1e-14);
    }

    #[test]
    fn norms_with_cancellation() {
        let b = BumpSum::new(
            1,
            vec![
                Bump::new(vec![0.0], 1.0, 1.0),
                Bump::new(vec![0.3], 0.5, -0.5),
            ],
        )
        .unwrap();
        let n = b.norms().unwrap();
        let spec = QuadSpec {
            target_abs_tol: 1e-12,
            target_rel_tol: 1e-12,
            max_refinement_depth: 20,
            base_order: 16,
        };
        let direct =
            crate::quadrature::integrate_interval(&|y| b.eval(&[y]).abs(), -1.0, 1.0, &spec)
                .unwrap();
        assert_relative_eq!(n.l1, direct, max_relative = 1e-8);
        let grid_max = (0..20001)
            .map(|k| b.eval(&[-1.0 + 2.0 * k as f64 / 20000.0]).abs())
            .fold(0.0, f64::max);
        assert!(n.linf >= grid_max - 1e-12 && n.linf <= grid_max + 1e-6);
    }

    #[test]
    fn geometry_examples() {
        let one = BumpSum::new(2, vec![Bump::new(vec![0.0, 0.0], 1.0, 1.0)]).unwrap();
        let s = ProblemSetup::new(BumpSum::zero(2), one.clone()).unwrap();
        let geo = s.geometry(None);
        assert_relative_eq!(geo.d_h, 2.0);
        assert_relative_eq!(geo.t0, 2.0);
        let same = ProblemSetup::new(one.scaled(0.5), one.scaled(0.5)).unwrap();
        assert!(same.delta_fh.abs() < 1e-12);
        let geo = same.geometry(Some(2.0 / 3.0));
        assert!((geo.t0 - geo.t0.powf(2.0 / 3.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn setup_rejects_negative_h() {
        let f = BumpSum::new(1, vec![Bump::new(vec![0.0], 1.0, -1.0)]).unwrap();
        let g = BumpSum::new(1, vec![Bump::new(vec![0.0], 1.0, 0.5)]).unwrap();
        assert!(ProblemSetup::new(f, g).is_err());
        assert!(ProblemSetup::new(BumpSum::zero(2), BumpSum::zero(2)).is_err());
    }

    #[test]
    fn json_round_trip_rejects_unknown() {
        let spec: InitDataSpec = serde_json::from_str(
            r#"{"dim":2,"f":[{"center":[0,0],"radius":0.5,"amplitude":1.0}],"g":[],"normalize_l1":1.0}"#,
        )
        .unwrap();
        let setup = spec.build().unwrap();
        assert_relative_eq!(setup.h.norms().unwrap().l1, 1.0, max_relative = 1e-12);
        assert!(serde_json::from_str::<InitDataSpec>(r#"{"dim":2,"extra":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn grad_matches_differences(x in -0.6f64..1.3, y in -0.6f64..0.8) {
            let b = two_bump_2d();
            let p = [x, y];
            prop_assume!(b.in_support(&p));
            let g = b.grad(&p);
            let step = 1e-5 * 0.4;
            for i in 0..2 {
                let mut a = p;
                let mut c = p;
                a[i] += step;
                c[i] -= step;
                let fd = (b.eval(&a) - b.eval(&c)) / (2.0 * step);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()));
            }
        }

        #[test]
        fn zero_outside_hull_box(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let b = two_bump_2d();
            let bbox = b.bounding_box().unwrap();
            let inside = (0..2).all(|i| [x, y][i] >= bbox.lo[i] && [x, y][i] <= bbox.hi[i]);
            if !inside {
                prop_assert_eq!(b.eval(&[x, y]), 0.0);
            }
            prop_assert!(b.eval(&[x, y]) >= 0.0);
        }

        #[test]
        fn hull_monotone_under_enlargement(x in -2.0f64..2.0, y in -2.0f64..2.0, eps in 1e-4f64..1.0) {
            let b = two_bump_2d();
            let hull = b.support_hull();
            let grown = SupportHull::new(2, hull.balls.iter().map(|(c, r)| (c.clone(), r + eps)).collect());
            if hull.contains(&[x, y]) {
                prop_assert!(grown.contains(&[x, y]));
            }
        }
    }
}
