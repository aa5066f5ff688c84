//! Gauss–Legendre rules, fixed composite rules graded toward flat endpoints,
//! and adaptive integrators over intervals, balls, spheres and the
//! rim-singular weight `1/√(t² − r²)`.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Accuracy controls for the adaptive integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    pub target_abs_tol: f64,
    pub target_rel_tol: f64,
    pub max_refinement_depth: u32,
    /// Gauss nodes per panel.
    pub base_order: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            target_abs_tol: 1e-9,
            target_rel_tol: 1e-9,
            max_refinement_depth: 14,
            base_order: 16,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_abs_tol > 0.0) || !(self.target_rel_tol > 0.0) {
            return Err(Error::invalid("QuadSpec", "tolerances must be positive"));
        }
        if self.max_refinement_depth > 20 {
            return Err(Error::invalid(
                "QuadSpec",
                "max_refinement_depth must be at most 20",
            ));
        }
        if self.base_order == 0 || self.base_order > 128 {
            return Err(Error::invalid("QuadSpec", "base_order must be in 1..=128"));
        }
        Ok(())
    }

    /// Same spec with both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        QuadSpec {
            target_abs_tol: self.target_abs_tol * factor,
            target_rel_tol: self.target_rel_tol * factor,
            ..*self
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `order` nodes, cached per order.
    pub fn get(order: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<Vec<Option<Arc<GaussLegendre>>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(vec![None; 257]));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        if order < guard.len() {
            if let Some(rule) = &guard[order] {
                return rule.clone();
            }
            let rule = Arc::new(GaussLegendre::compute(order));
            guard[order] = Some(rule.clone());
            rule
        } else {
            Arc::new(GaussLegendre::compute(order))
        }
    }

    fn compute(order: usize) -> GaussLegendre {
        assert!(order >= 1, "Gauss rule needs at least one node");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integral of `f` over `[a, b]` with this rule.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Which endpoints of an interval a composite rule refines toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grading {
    Left,
    Right,
    Both,
}

/// A fixed quadrature rule on a concrete interval.
#[derive(Debug, Clone, Default)]
pub struct FixedRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FixedRule {
    /// Composite Gauss rule whose panels shrink geometrically (ratio ½)
    /// toward the selected endpoints. Suited to integrands that are flat,
    /// but not analytic, at an endpoint, such as mollifier bumps.
    pub fn graded(a: f64, b: f64, order: usize, panels: usize, grading: Grading) -> FixedRule {
        let mut rule = FixedRule::default();
        if !(b > a) {
            return rule;
        }
        let gl = GaussLegendre::get(order);
        let mut edges = Vec::new();
        match grading {
            Grading::Left | Grading::Right => {
                let len = b - a;
                let mut frac = vec![0.0];
                for k in (1..panels).rev() {
                    frac.push(0.5f64.powi(k as i32));
                }
                frac.push(1.0);
                for f in frac {
                    edges.push(if grading == Grading::Left {
                        a + len * f
                    } else {
                        b - len * f
                    });
                }
                if grading == Grading::Right {
                    edges.reverse();
                }
            }
            Grading::Both => {
                let mid = 0.5 * (a + b);
                let left = FixedRule::graded(a, mid, order, panels, Grading::Left);
                let right = FixedRule::graded(mid, b, order, panels, Grading::Right);
                rule.nodes.extend(left.nodes);
                rule.weights.extend(left.weights);
                rule.nodes.extend(right.nodes);
                rule.weights.extend(right.weights);
                return rule;
            }
        }
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
                rule.nodes.push(mid + half * x);
                rule.weights.push(wt * half);
            }
        }
        rule
    }

    /// Composite Gauss rule with `panels` equal panels.
    pub fn uniform(a: f64, b: f64, order: usize, panels: usize) -> FixedRule {
        let gl = GaussLegendre::get(order);
        let mut rule = FixedRule::default();
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
                rule.nodes.push(lo + 0.5 * h * (1.0 + x));
                rule.weights.push(0.5 * h * wt);
            }
        }
        rule
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(*x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Neumaier-compensated sum; the result does not depend on thread count.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Axis-aligned box, used to clip integration to a known support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    /// Smallest and largest distance from `p` to points of the box.
    pub fn distance_range(&self, p: &[f64]) -> (f64, f64) {
        let mut near = 0.0;
        let mut far = 0.0;
        for i in 0..p.len() {
            let d_near = if p[i] < self.lo[i] {
                self.lo[i] - p[i]
            } else if p[i] > self.hi[i] {
                p[i] - self.hi[i]
            } else {
                0.0
            };
            let d_far = (p[i] - self.lo[i]).abs().max((p[i] - self.hi[i]).abs());
            near += d_near * d_near;
            far += d_far * d_far;
        }
        (near.sqrt(), far.sqrt())
    }
}

/// A function on `R^n`, optionally with a bounding box of its support.
pub trait Integrand {
    fn eval(&self, y: &[f64]) -> f64;
    fn support(&self) -> Option<AxisBox> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> Integrand for F {
    fn eval(&self, y: &[f64]) -> f64 {
        self(y)
    }
}

/// An integrand that vanishes outside `support`.
pub struct Supported<F> {
    pub f: F,
    pub support: AxisBox,
}

impl<F: Fn(&[f64]) -> f64> Integrand for Supported<F> {
    fn eval(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }
    fn support(&self) -> Option<AxisBox> {
        Some(self.support.clone())
    }
}

/// Adaptive Gauss–Legendre integration of `f` over `[a, b]` by panel bisection.
pub fn integrate_interval(f: &dyn Fn(f64) -> f64, a: f64, b: f64, spec: &QuadSpec) -> Result<f64> {
    spec.validate()?;
    if !(a <= b) {
        return Err(Error::domain(
            "integrate_interval",
            format!("need a <= b, got [{a}, {b}]"),
        ));
    }
    if a == b {
        return Ok(0.0);
    }
    let gl = GaussLegendre::get(spec.base_order);
    let whole = gl.integrate(a, b, f);
    let mut failed = false;
    let value = adapt(
        &gl,
        f,
        a,
        b,
        whole,
        spec,
        b - a,
        whole.abs(),
        0,
        &mut failed,
    );
    if failed {
        return Err(Error::tolerance(
            "integrate_interval",
            format!("depth {} reached on [{a}, {b}]", spec.max_refinement_depth),
        ));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    gl: &GaussLegendre,
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    spec: &QuadSpec,
    total_len: f64,
    scale: f64,
    depth: u32,
    failed: &mut bool,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gl.integrate(a, mid, f);
    let right = gl.integrate(mid, b, f);
    let refined = left + right;
    let scale = scale.max(refined.abs());
    let tol =
        spec.target_abs_tol.max(spec.target_rel_tol * scale) * ((b - a) / total_len).max(1e-3);
    if (refined - whole).abs() <= tol {
        return refined;
    }
    if depth >= spec.max_refinement_depth {
        *failed = true;
        return refined;
    }
    adapt(
        gl,
        f,
        a,
        mid,
        left,
        spec,
        total_len,
        scale,
        depth + 1,
        failed,
    ) + adapt(
        gl,
        f,
        mid,
        b,
        right,
        spec,
        total_len,
        scale,
        depth + 1,
        failed,
    )
}

/// Periodic trapezoid rule on `[0, 2π)` with doubling until two successive
/// estimates agree.
fn trapezoid_periodic(f: &dyn Fn(f64) -> f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut n = 16usize;
    let mut sum: f64 = (0..n).map(|k| f(2.0 * PI * k as f64 / n as f64)).sum();
    let mut est = sum * 2.0 * PI / n as f64;
    while n < 1 << 16 {
        let extra: f64 = (0..n)
            .map(|k| f(2.0 * PI * (k as f64 + 0.5) / n as f64))
            .sum();
        sum += extra;
        n *= 2;
        let next = sum * 2.0 * PI / n as f64;
        if (next - est).abs() <= abs_tol.max(rel_tol * next.abs()) && n >= 32 {
            return Ok(next);
        }
        est = next;
    }
    Err(Error::tolerance(
        "trapezoid",
        "angular rule did not converge",
    ))
}

/// Runs a nested integration whose inner calls may fail, surfacing the
/// first inner failure after the outer pass.
fn nested<T>(run: impl FnOnce(&dyn Fn(&Result<f64>) -> f64) -> Result<T>) -> Result<T> {
    let first_err: Mutex<Option<Error>> = Mutex::new(None);
    let unwrap = |r: &Result<f64>| -> f64 {
        match r {
            Ok(v) => *v,
            Err(e) => {
                let mut slot = first_err.lock().expect("error slot poisoned");
                if slot.is_none() {
                    *slot = Some(e.clone());
                }
                0.0
            }
        }
    };
    let out = run(&unwrap);
    if let Some(e) = first_err.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    out
}

fn radial_window(center: &[f64], radius: f64, integrand: &dyn Integrand) -> Option<(f64, f64)> {
    match integrand.support() {
        Some(b) => {
            let (near, far) = b.distance_range(center);
            let lo = near.min(radius);
            let hi = far.min(radius);
            if hi <= lo {
                None
            } else {
                Some((lo, hi))
            }
        }
        None => Some((0.0, radius)),
    }
}

/// Integral over the ball `B_radius(center)` in dimension 1, 2 or 3.
pub fn integrate_ball(
    n: usize,
    center: &[f64],
    radius: f64,
    integrand: &dyn Integrand,
    spec: &QuadSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(radius > 0.0) {
        return Err(Error::domain(
            "integrate_ball",
            format!("radius {radius} is not positive"),
        ));
    }
    if center.len() != n || !(1..=3).contains(&n) {
        return Err(Error::invalid(
            "integrate_ball",
            format!("dimension {n} with a {}-point", center.len()),
        ));
    }
    if n == 1 {
        let (mut lo, mut hi) = (center[0] - radius, center[0] + radius);
        if let Some(b) = integrand.support() {
            lo = lo.max(b.lo[0]);
            hi = hi.min(b.hi[0]);
        }
        if hi <= lo {
            return Ok(0.0);
        }
        return integrate_interval(&|y| integrand.eval(&[y]), lo, hi, spec);
    }
    let Some((r_lo, r_hi)) = radial_window(center, radius, integrand) else {
        return Ok(0.0);
    };
    let inner = spec.scaled(0.1);
    nested(|unwrap| {
        let shell = |r: f64| -> f64 {
            if r == 0.0 {
                return 0.0;
            }
            let m = sphere_mean_sum(n, center, r, integrand, &inner);
            unwrap(&m) * r.powi(n as i32 - 1)
        };
        integrate_interval(&shell, r_lo, r_hi, spec)
    })
}

/// Polar axis and smallest axis cosine of the spherical cap of `S_r(center)`
/// that can meet the integrand's support; `None` when the sphere misses it.
fn support_cap(
    n: usize,
    center: &[f64],
    r: f64,
    integrand: &dyn Integrand,
) -> Option<(Vec<f64>, f64)> {
    let mut axis = vec![0.0; n];
    axis[n - 1] = 1.0;
    let Some(b) = integrand.support() else {
        return Some((axis, -1.0));
    };
    let mid: Vec<f64> = (0..n).map(|i| 0.5 * (b.lo[i] + b.hi[i])).collect();
    let half_diag = (0..n)
        .map(|i| 0.25 * (b.hi[i] - b.lo[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let dist = (0..n)
        .map(|i| (mid[i] - center[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    if dist <= half_diag {
        return Some((axis, -1.0));
    }
    if (r - dist).abs() > half_diag {
        return None;
    }
    let cosmin =
        ((r * r + dist * dist - half_diag * half_diag) / (2.0 * r * dist)).clamp(-1.0, 1.0);
    let axis = (0..n).map(|i| (mid[i] - center[i]) / dist).collect();
    Some((axis, cosmin))
}

/// Angular arcs `[a, b]` (with `b − a ≤ 2π`) on which the circle
/// `S_r(center)` lies inside `b`. Grazing arcs are resolved exactly, which a
/// node-based search over the whole circle can miss.
fn circle_box_arcs(center: &[f64], r: f64, b: &AxisBox) -> Vec<(f64, f64)> {
    let two_pi = 2.0 * PI;
    let mut cuts = Vec::new();
    for i in 0..2 {
        for edge in [b.lo[i], b.hi[i]] {
            let c = (edge - center[i]) / r;
            if c.abs() < 1.0 {
                let base = if i == 0 { c.acos() } else { c.asin() };
                let other = if i == 0 { two_pi - base } else { PI - base };
                cuts.push(base.rem_euclid(two_pi));
                cuts.push(other.rem_euclid(two_pi));
            }
        }
    }
    let inside = |th: f64| {
        let (sn, cs) = th.sin_cos();
        let p = [center[0] + r * cs, center[1] + r * sn];
        (0..2).all(|i| b.lo[i] <= p[i] && p[i] <= b.hi[i])
    };
    if cuts.is_empty() {
        return if inside(0.0) {
            vec![(0.0, two_pi)]
        } else {
            Vec::new()
        };
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let m = cuts.len();
    let mut arcs: Vec<(f64, f64)> = Vec::new();
    for k in 0..m {
        let a = cuts[k];
        let b = if k + 1 < m {
            cuts[k + 1]
        } else {
            cuts[0] + two_pi
        };
        if b > a && inside(0.5 * (a + b)) {
            match arcs.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => arcs.push((a, b)),
            }
        }
    }
    // Join an arc that wraps past 2π onto the first one.
    if arcs.len() > 1 {
        let first = arcs[0];
        let last = arcs[arcs.len() - 1];
        if (last.1 - (first.0 + two_pi)).abs() < 1e-15 {
            arcs.pop();
            arcs[0] = (last.0 - two_pi, first.1);
        }
    }
    arcs
}

/// Two unit vectors completing `a` to an orthonormal frame of `R^3`.
fn complete_frame(a: &[f64]) -> ([f64; 3], [f64; 3]) {
    let helper = if a[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let dot = helper[0] * a[0] + helper[1] * a[1] + helper[2] * a[2];
    let mut e1 = [
        helper[0] - dot * a[0],
        helper[1] - dot * a[1],
        helper[2] - dot * a[2],
    ];
    let norm = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|v| *v /= norm);
    let e2 = [
        a[1] * e1[2] - a[2] * e1[1],
        a[2] * e1[0] - a[0] * e1[2],
        a[0] * e1[1] - a[1] * e1[0],
    ];
    (e1, e2)
}

/// `∫_{S^{n-1}} F(center + r θ) dθ` over unit directions (not scaled by `r^{n-1}`).
fn sphere_mean_sum(
    n: usize,
    center: &[f64],
    r: f64,
    integrand: &dyn Integrand,
    spec: &QuadSpec,
) -> Result<f64> {
    let Some((axis, cosmin)) = support_cap(n, center, r, integrand) else {
        return Ok(0.0);
    };
    match n {
        2 => {
            let at = |th: f64| {
                let (sn, cs) = th.sin_cos();
                integrand.eval(&[center[0] + r * cs, center[1] + r * sn])
            };
            let arcs = match integrand.support() {
                Some(b) => circle_box_arcs(center, r, &b),
                None => vec![(0.0, 2.0 * PI)],
            };
            if arcs.len() == 1 && arcs[0].1 - arcs[0].0 >= 2.0 * PI {
                return trapezoid_periodic(&at, spec.target_abs_tol, spec.target_rel_tol);
            }
            let mut sum = 0.0;
            for (a, b) in arcs {
                sum += integrate_interval(&at, a, b, spec)?;
            }
            Ok(sum)
        }
        3 => {
            let (e1, e2) = complete_frame(&axis);
            let inner = spec.scaled(0.1);
            nested(|unwrap| {
                let ring = |mu: f64| -> f64 {
                    let rho = (1.0 - mu * mu).max(0.0).sqrt();
                    let v = trapezoid_periodic(
                        &|phi| {
                            let (sn, cs) = phi.sin_cos();
                            let y: Vec<f64> = (0..3)
                                .map(|i| {
                                    center[i] + r * (mu * axis[i] + rho * (cs * e1[i] + sn * e2[i]))
                                })
                                .collect();
                            integrand.eval(&y)
                        },
                        inner.target_abs_tol,
                        inner.target_rel_tol,
                    );
                    unwrap(&v)
                };
                integrate_interval(&ring, cosmin, 1.0, spec)
            })
        }
        _ => Err(Error::invalid(
            "integrate_sphere",
            format!("dimension {n} not supported"),
        )),
    }
}

/// Surface integral over the sphere `S_radius(center)` in dimension 2 or 3.
pub fn integrate_sphere(
    n: usize,
    center: &[f64],
    radius: f64,
    integrand: &dyn Integrand,
    spec: &QuadSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(radius > 0.0) {
        return Err(Error::domain(
            "integrate_sphere",
            format!("radius {radius} is not positive"),
        ));
    }
    if center.len() != n || !(2..=3).contains(&n) {
        return Err(Error::invalid(
            "integrate_sphere",
            format!("dimension {n} with a {}-point", center.len()),
        ));
    }
    Ok(sphere_mean_sum(n, center, radius, integrand, spec)? * radius.powi(n as i32 - 1))
}

/// `∫_{B_t(center)} G(y)/√(t² − |y − center|²) dy` in two dimensions, via
/// `r = t sin u`, which removes the rim singularity.
pub fn integrate_ball_chebweight(
    n: usize,
    center: &[f64],
    t: f64,
    g: &dyn Integrand,
    spec: &QuadSpec,
) -> Result<f64> {
    spec.validate()?;
    if n != 2 || center.len() != 2 {
        return Err(Error::invalid(
            "integrate_ball_chebweight",
            "only dimension 2 is supported",
        ));
    }
    if !(t > 0.0) {
        return Err(Error::domain(
            "integrate_ball_chebweight",
            format!("radius {t} is not positive"),
        ));
    }
    let Some((r_lo, r_hi)) = radial_window(center, t, g) else {
        return Ok(0.0);
    };
    let u_lo = (r_lo / t).min(1.0).asin();
    let u_hi = (r_hi / t).min(1.0).asin();
    let inner = spec.scaled(0.1);
    nested(|unwrap| {
        let f = |u: f64| -> f64 {
            let r = t * u.sin();
            if r == 0.0 {
                return 0.0;
            }
            let m = sphere_mean_sum(2, center, r, g, &inner);
            unwrap(&m) * r
        };
        integrate_interval(&f, u_lo, u_hi, spec)
    })
}
