//! Solution operators of the damped wave equation and their parts.
//!
//! With data `u(0) = f`, `u_t(0) = g` and `h = f + g`,
//! `u(t) = S_n(t) h + ∂_t S_n(t) f`, and `S_n = J_n + e^{-t/2} W_n`
//! splits each solution operator into a heat-like part `J_n` and a damped
//! wave part `W_n`.
//!
//! Evaluation works in polar coordinates about `x`. For each bump the
//! spherical moments of the data at radius `r` reduce to one-dimensional
//! angular integrals about the axis toward the bump center, and the radial
//! integral runs only over the shell the bump occupies. Radii are
//! parametrized as `r = t sin u`, so `½√(t² − r²) = (t/2) cos u` exactly and
//! the rim weights `1/√(t² − r²)` become bounded.

use crate::initdata::{unit_sphere_area, Bump, BumpSum, ProblemSetup};
use crate::quadrature::{
    integrate_ball_chebweight, integrate_interval, AxisBox, FixedRule, Grading, QuadSpec, Supported,
};
use crate::specfun::{
    bessel_i_scaled, c_n, e_weight, factorial, kernel_at_zero, kernel_deriv_at_zero, scaled_kernel,
    KernelId,
};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Node counts of the fixed product rules used by [`Engine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineRule {
    /// Gauss order per radial panel.
    pub radial_order: usize,
    /// Geometrically graded radial panels toward each window end.
    pub radial_panels: usize,
    /// Gauss order per angular panel.
    pub angular_order: usize,
    /// Angular panels graded toward the edge of the bump cap.
    pub angular_panels: usize,
}

impl Default for EngineRule {
    fn default() -> Self {
        EngineRule {
            radial_order: 12,
            radial_panels: 6,
            angular_order: 12,
            angular_panels: 6,
        }
    }
}

impl EngineRule {
    /// A rule expected to reach roughly `tol` relative accuracy on bump data.
    pub fn for_tolerance(tol: f64) -> Self {
        if tol >= 1e-6 {
            EngineRule {
                radial_order: 10,
                radial_panels: 4,
                angular_order: 10,
                angular_panels: 4,
            }
        } else if tol >= 1e-12 {
            EngineRule::default()
        } else {
            EngineRule {
                radial_order: 16,
                radial_panels: 8,
                angular_order: 16,
                angular_panels: 8,
            }
        }
    }

    /// Every count doubled; used for self-convergence checks.
    pub fn refined(&self) -> Self {
        EngineRule {
            radial_order: self.radial_order * 2,
            radial_panels: self.radial_panels + 2,
            angular_order: self.angular_order * 2,
            angular_panels: self.angular_panels + 2,
        }
    }
}

/// Which solution object to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// The solution `u`.
    FullU,
    /// `J_n(t) h`.
    HeatPartJ,
    /// `W_n(t) h`.
    WavePartW,
    /// `J̃_n(t) f`.
    TildeJ,
    /// `Ŵ_n(t) f`.
    HatW,
    /// `W̃_n(t; f, g)`.
    TildeW,
    /// Heat semigroup `P_n(t) h`.
    HeatSemigroupP,
    /// `u − P_n(t) h`.
    DifferenceUMinusP,
}

impl Part {
    pub const ALL: [Part; 8] = [
        Part::FullU,
        Part::HeatPartJ,
        Part::WavePartW,
        Part::TildeJ,
        Part::HatW,
        Part::TildeW,
        Part::HeatSemigroupP,
        Part::DifferenceUMinusP,
    ];

    /// Short command-line name.
    pub fn name(&self) -> &'static str {
        match self {
            Part::FullU => "u",
            Part::HeatPartJ => "j",
            Part::WavePartW => "w",
            Part::TildeJ => "tilde_j",
            Part::HatW => "hat_w",
            Part::TildeW => "tilde_w",
            Part::HeatSemigroupP => "heat",
            Part::DifferenceUMinusP => "difference",
        }
    }

    pub fn parse(s: &str) -> Option<Part> {
        Part::ALL.iter().copied().find(|p| p.name() == s)
    }
}

/// A pointwise evaluation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub setup: ProblemSetup,
    pub x: Vec<f64>,
    pub t: f64,
    pub part: Part,
}

impl SolveRequest {
    pub fn evaluate(&self, engine: &Engine) -> Result<f64> {
        if self.x.len() != self.setup.dim() {
            return Err(Error::invalid(
                "SolveRequest",
                "point dimension differs from the data dimension",
            ));
        }
        engine.part(&self.setup, self.part, &self.x, self.t)
    }
}

/// Dense samples of one part on an axis-aligned grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub bounds: AxisBox,
    pub resolution: Vec<usize>,
    /// Row-major values, last axis fastest.
    pub values: Vec<f64>,
    pub t: f64,
    pub part: Part,
    pub setup_hash: u64,
}

impl FieldGrid {
    /// Coordinates of node `index` (row-major, last axis fastest).
    pub fn node(&self, index: usize) -> Vec<f64> {
        grid_node(&self.bounds, &self.resolution, index)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest value and the node where it occurs (first on ties).
    pub fn max(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (i, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })
    }
}

pub(crate) fn grid_node(bounds: &AxisBox, resolution: &[usize], mut index: usize) -> Vec<f64> {
    let n = resolution.len();
    let mut p = vec![0.0; n];
    for k in (0..n).rev() {
        let m = resolution[k];
        let i = index % m;
        index /= m;
        p[k] = if m == 1 {
            0.5 * (bounds.lo[k] + bounds.hi[k])
        } else {
            bounds.lo[k] + (bounds.hi[k] - bounds.lo[k]) * i as f64 / (m - 1) as f64
        };
    }
    p
}

/// Stable 64-bit fingerprint of the initial data.
pub fn setup_hash(setup: &ProblemSetup) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |v: u64| {
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    feed(setup.dim() as u64);
    for (tag, datum) in [(1u64, &setup.f), (2u64, &setup.g)] {
        feed(tag);
        for b in &datum.bumps {
            b.center.iter().for_each(|c| feed(c.to_bits()));
            feed(b.radius.to_bits());
            feed(b.amplitude.to_bits());
        }
    }
    h
}

/// Angular integrals over `S^{n-1}` of the data at radius `r`, taken about
/// the unit axis `e` from `x` toward one bump center. With `μ = θ·e`,
/// `P` the bump profile, `G = P'/q` and `H = (P'' − P'/q)/q²`:
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    /// `∫ P`
    s0: f64,
    /// `∫ P μ`
    s1: f64,
    /// `∫ P μ²`
    smm: f64,
    /// `∫ P (1 − μ²)`
    sss: f64,
    /// `∫ G`
    g0: f64,
    /// `∫ G μ`
    g1: f64,
    /// `∫ G μ²`
    gmm: f64,
    /// `∫ G (1 − μ²)`
    gss: f64,
    /// `∫ H (r − dμ)(rμ − d)`
    hh: f64,
}

/// One bump seen from the evaluation point.
struct Frame<'a> {
    bump: &'a Bump,
    /// Distance from `x` to the bump center.
    d: f64,
    /// Unit axis toward the bump center (first basis vector if `d = 0`).
    e: Vec<f64>,
}

impl Frame<'_> {
    fn new<'a>(bump: &'a Bump, x: &[f64]) -> Frame<'a> {
        let diff: Vec<f64> = bump.center.iter().zip(x).map(|(c, xi)| c - xi).collect();
        let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = if d > 0.0 {
            diff.iter().map(|v| v / d).collect()
        } else {
            let mut e = vec![0.0; x.len()];
            e[0] = 1.0;
            e
        };
        Frame { bump, d, e }
    }

    /// Radial pieces in `[0, r_max]` whose spheres meet the bump, split
    /// where the sphere stops lying inside the support ball so that the
    /// moments are analytic on each piece.
    fn windows(&self, r_max: f64) -> Vec<(f64, f64)> {
        let rho = self.bump.radius;
        let mut edges = vec![(self.d - rho).max(0.0)];
        if self.d > 0.0 && self.d < rho {
            edges.push(rho - self.d);
        }
        edges.push(self.d + rho);
        edges
            .windows(2)
            .filter_map(|w| {
                let (lo, hi) = (w[0], w[1].min(r_max));
                (hi > lo).then_some((lo, hi))
            })
            .collect()
    }

    fn axis_cos(&self, omega: &[f64]) -> f64 {
        self.e.iter().zip(omega).map(|(a, b)| a * b).sum()
    }
}

/// Moments of one bump at the radial nodes `(weight in u, r, t cos u)` and on `S_t(x)`.
struct Sampled<'a> {
    fr: Frame<'a>,
    from_f: bool,
    nodes: Vec<(f64, f64, f64, Moments)>,
    rim: Moments,
}

/// `ω·T·ω` from the moments, where `T = ∫ φ θθᵀ`.
fn quad_t(n: usize, m: &Moments, c: f64) -> f64 {
    let kappa = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    m.smm * c * c + kappa * m.sss * (1.0 - c * c)
}

/// `ω·Q·ω` from the moments, where `Q = ∫ θ ⊗ ∇φ`.
fn quad_q(n: usize, m: &Moments, r: f64, d: f64, c: f64) -> f64 {
    let kappa = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    r * (m.gmm * c * c + kappa * m.gss * (1.0 - c * c)) - d * m.g1 * c * c
}

/// `a·k_{ℓ+1} + b·k_ℓ + c` for one kernel family.
#[derive(Debug, Clone, Copy)]
struct Comb {
    base: KernelId,
    a: f64,
    b: f64,
    c: f64,
}

impl Comb {
    /// `e^{-shift}` times the combination at `s`.
    fn scaled(&self, s: f64, shift: f64) -> f64 {
        let mut v = 0.0;
        if self.a != 0.0 {
            v += self.a * scaled_kernel(self.base.raised(1), s, shift);
        }
        if self.b != 0.0 {
            v += self.b * scaled_kernel(self.base, s, shift);
        }
        if self.c != 0.0 {
            v += self.c * (-shift).exp();
        }
        v
    }

    /// The combination from precomputed scaled `k_ℓ`, `k_{ℓ+1}` and `e^{-shift}`.
    fn combine(&self, k0: f64, k1: f64, decay: f64) -> f64 {
        self.a * k1 + self.b * k0 + self.c * decay
    }

    fn at_zero(&self) -> f64 {
        self.a * kernel_at_zero(self.base.raised(1)) + self.b * kernel_at_zero(self.base) + self.c
    }

    /// `L'(s)/s = R(s) + β/s`; returns `(R, β)`.
    fn over_s(&self) -> (Comb, f64) {
        let beta = self.a * kernel_deriv_at_zero(self.base.raised(1))
            + self.b * kernel_deriv_at_zero(self.base);
        (
            Comb {
                base: self.base.raised(1),
                a: self.a,
                b: self.b,
                c: 0.0,
            },
            beta,
        )
    }
}

/// Heat-part kernel `L` and prefactor `C` with `J_n h = C e^{-t/2} ∫_{B_t} L h`.
fn heat_part_kernel(n: usize) -> (Comb, f64) {
    let nu = n as u32;
    if n == 1 {
        (
            Comb {
                base: KernelId::odd(0),
                a: 0.0,
                b: 1.0,
                c: -1.0,
            },
            0.5,
        )
    } else if n % 2 == 1 {
        (
            Comb {
                base: KernelId::odd((nu - 1) / 2),
                a: 0.0,
                b: 1.0,
                c: 0.0,
            },
            c_n(nu) / 2f64.powi(nu as i32 - 1),
        )
    } else {
        (
            Comb {
                base: KernelId::even(nu / 2),
                a: 0.0,
                b: 1.0,
                c: 0.0,
            },
            c_n(nu) / 2f64.powi(nu as i32 - 2),
        )
    }
}

/// Kernel `t k_{ℓ+1} − 2k_ℓ` and prefactor of `J̃_n`.
fn tilde_kernel(n: usize, t: f64) -> (Comb, f64) {
    let (l, c) = heat_part_kernel(n);
    (
        Comb {
            base: l.base,
            a: t,
            b: -2.0,
            c: 0.0,
        },
        0.25 * c,
    )
}

/// Coefficient of `t^{n-1} M0(t)` (odd `n`) or of `t ∫_{B_t} f/√(t² − r²)`
/// (even `n`) in `Ŵ_n f`.
fn hat_w_coefficient(n: usize) -> f64 {
    let nu = n as u32;
    if n == 1 {
        0.5
    } else if n % 2 == 1 {
        let m = (nu - 1) / 2;
        c_n(nu) / (2f64.powf(1.5 * (n - 1) as f64) * factorial(m))
    } else {
        c_n(nu) / (2f64.powf((3 * n - 2) as f64 / 2.0) * factorial(nu / 2))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, xi) in acc.iter_mut().zip(x) {
        *y += a * xi;
    }
}

/// Evaluator of every solution object, with fixed product rules.
#[derive(Debug, Clone)]
pub struct Engine {
    rule: EngineRule,
    radial: FixedRule,
    cap: FixedRule,
    full: FixedRule,
    /// Tolerances for the independent adaptive routes.
    pub spec: QuadSpec,
}

impl Default for Engine {
    fn default() -> Self {
        Engine::new(EngineRule::default())
    }
}

impl Engine {
    pub fn new(rule: EngineRule) -> Self {
        Engine {
            rule,
            radial: FixedRule::graded(
                0.0,
                1.0,
                rule.radial_order,
                rule.radial_panels,
                Grading::Both,
            ),
            cap: FixedRule::graded(
                0.0,
                1.0,
                rule.angular_order,
                rule.angular_panels,
                Grading::Right,
            ),
            full: FixedRule::uniform(0.0, 1.0, rule.angular_order, 2 * rule.angular_panels),
            spec: QuadSpec::default(),
        }
    }

    /// Shared engine with the default rule.
    pub fn standard() -> &'static Engine {
        static ENGINE: OnceLock<Engine> = OnceLock::new();
        ENGINE.get_or_init(Engine::default)
    }

    pub fn rule(&self) -> EngineRule {
        self.rule
    }

    fn moments(&self, n: usize, fr: &Frame, r: f64) -> Moments {
        let b = fr.bump;
        let d = fr.d;
        if n == 1 {
            let (qp, qm) = ((r - d).abs(), r + d);
            let (p, m) = (b.profile_jet(qp), b.profile_jet(qm));
            return Moments {
                s0: p.value + m.value,
                s1: p.value - m.value,
                smm: p.value + m.value,
                sss: 0.0,
                g0: p.d1_over_q + m.d1_over_q,
                g1: p.d1_over_q - m.d1_over_q,
                gmm: p.d1_over_q + m.d1_over_q,
                gss: 0.0,
                hh: p.hess_coef * (r - d) * (r - d) - m.hess_coef * (r + d) * (r + d),
            };
        }
        let area = unit_sphere_area(n);
        let nf = n as f64;
        if d == 0.0 || r == 0.0 {
            // The sphere sits at constant distance from the bump center.
            let j = b.profile_jet(if d == 0.0 { r } else { d });
            return Moments {
                s0: area * j.value,
                s1: 0.0,
                smm: area * j.value / nf,
                sss: area * j.value * (nf - 1.0) / nf,
                g0: area * j.d1_over_q,
                g1: 0.0,
                gmm: area * j.d1_over_q / nf,
                gss: area * j.d1_over_q * (nf - 1.0) / nf,
                hh: 0.0,
            };
        }
        let rho = b.radius;
        let cos_edge = (r * r + d * d - rho * rho) / (2.0 * r * d);
        if cos_edge >= 1.0 {
            return Moments::default();
        }
        let (alpha, rule) = if cos_edge <= -1.0 {
            (PI, &self.full)
        } else {
            (cos_edge.acos(), &self.cap)
        };
        let lower = unit_sphere_area(n - 1) * alpha;
        let mut m = Moments::default();
        for (xi, wx) in rule.nodes.iter().zip(&rule.weights) {
            let theta = alpha * xi;
            let (sin, mu) = theta.sin_cos();
            let w = lower * wx * if n == 2 { 1.0 } else { sin.powi(n as i32 - 2) };
            let q = (r * r + d * d - 2.0 * r * d * mu).max(0.0).sqrt();
            let j = b.profile_jet(q);
            if j.value == 0.0 {
                continue;
            }
            let (p, g) = (w * j.value, w * j.d1_over_q);
            let mm = mu * mu;
            m.s0 += p;
            m.s1 += p * mu;
            m.smm += p * mm;
            m.sss += p * (1.0 - mm);
            m.g0 += g;
            m.g1 += g * mu;
            m.gmm += g * mm;
            m.gss += g * (1.0 - mm);
            m.hh += w * j.hess_coef * (r - d * mu) * (r * mu - d);
        }
        m
    }

    /// Sine-parametrized radial nodes `(weight in u, r, t cos u)` covering `[lo, hi] ⊆ [0, t]`.
    fn sine_nodes(&self, t: f64, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let ua = (lo / t).min(1.0).asin();
        let ub = (hi / t).min(1.0).asin();
        let len = ub - ua;
        self.radial
            .nodes
            .iter()
            .zip(&self.radial.weights)
            .map(move |(xi, w)| {
                let u = ua + len * xi;
                let (s, c) = u.sin_cos();
                (w * len, t * s, t * c)
            })
    }

    fn plain_nodes(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let len = hi - lo;
        self.radial
            .nodes
            .iter()
            .zip(&self.radial.weights)
            .map(move |(xi, w)| (w * len, lo + len * xi))
    }

    fn frames<'a>(datum: &'a BumpSum, x: &[f64]) -> Vec<Frame<'a>> {
        datum
            .bumps
            .iter()
            .filter(|b| b.amplitude != 0.0)
            .map(|b| Frame::new(b, x))
            .collect()
    }

    /// `∫_{B_t(x)} e^{-t/2} L(s) φ(y) dy` with `s = ½√(t² − |x − y|²)`.
    fn ball_value(&self, datum: &BumpSum, x: &[f64], t: f64, l: &Comb) -> f64 {
        let n = datum.dim;
        let shift = 0.5 * t;
        let mut total = 0.0;
        for fr in Self::frames(datum, x) {
            for (lo, hi) in fr.windows(t) {
                for (w, r, jac) in self.sine_nodes(t, lo, hi) {
                    let m = self.moments(n, &fr, r);
                    if m.s0 != 0.0 {
                        total += w * jac * l.scaled(0.5 * jac, shift) * r.powi(n as i32 - 1) * m.s0;
                    }
                }
            }
        }
        total
    }

    /// Gradient in `x` of [`Engine::ball_value`].
    fn ball_grad(&self, datum: &BumpSum, x: &[f64], t: f64, l: &Comb, boundary: bool) -> Vec<f64> {
        let n = datum.dim;
        let shift = 0.5 * t;
        let decay = (-shift).exp();
        let (reg, beta) = l.over_s();
        let l0 = l.at_zero();
        let mut g = vec![0.0; n];
        for fr in Self::frames(datum, x) {
            let mut acc = 0.0;
            if boundary && l0 != 0.0 {
                acc += l0 * decay * t.powi(n as i32 - 1) * self.moments(n, &fr, t).s1;
            }
            for (lo, hi) in fr.windows(t) {
                let mut inner = 0.0;
                for (w, r, jac) in self.sine_nodes(t, lo, hi) {
                    let m = self.moments(n, &fr, r);
                    if m.s1 != 0.0 {
                        let k = reg.scaled(0.5 * jac, shift) * jac + 2.0 * beta * decay;
                        inner += w * k * r.powi(n as i32) * m.s1;
                    }
                }
                acc += 0.25 * inner;
            }
            axpy(&mut g, acc, &fr.e);
        }
        g
    }

    /// Second derivative along `ω` of [`Engine::ball_value`].
    fn ball_second_dir(&self, datum: &BumpSum, x: &[f64], t: f64, l: &Comb, omega: &[f64]) -> f64 {
        let n = datum.dim;
        let ni = n as i32;
        let shift = 0.5 * t;
        let decay = (-shift).exp();
        let (reg, beta) = l.over_s();
        let (reg2, beta2) = reg.over_s();
        let l0 = l.at_zero();
        let r0 = reg.at_zero();
        let mut total = 0.0;
        for fr in Self::frames(datum, x) {
            let c = fr.axis_cos(omega);
            if l0 != 0.0 || r0 != 0.0 {
                let m = self.moments(n, &fr, t);
                total += l0 * decay * t.powi(ni - 1) * quad_q(n, &m, t, fr.d, c);
                total += 0.25 * r0 * decay * t.powi(ni) * quad_t(n, &m, c);
            }
            for (lo, hi) in fr.windows(t) {
                for (w, r, jac) in self.sine_nodes(t, lo, hi) {
                    let m = self.moments(n, &fr, r);
                    if m.s0 == 0.0 && m.g0 == 0.0 {
                        continue;
                    }
                    let s = 0.5 * jac;
                    let k1 = reg.scaled(s, shift) * jac;
                    let k2 = reg2.scaled(s, shift) * jac + 2.0 * beta2 * decay;
                    let mut v = -0.25 * k1 * r.powi(ni - 1) * m.s0
                        + k2 / 16.0 * r.powi(ni + 1) * quad_t(n, &m, c);
                    if beta != 0.0 {
                        v += 0.5 * beta * decay * r.powi(ni) * quad_q(n, &m, r, fr.d, c);
                    }
                    total += w * v;
                }
            }
        }
        total
    }

    fn check(op: &'static str, datum: &BumpSum, x: &[f64], t: f64) -> Result<()> {
        if x.len() != datum.dim {
            return Err(Error::invalid(
                op,
                format!(
                    "point has {} coordinates, data has dimension {}",
                    x.len(),
                    datum.dim
                ),
            ));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(
                op,
                format!("time {t} must be positive and finite"),
            ));
        }
        Ok(())
    }

    fn check_wave(op: &'static str, datum: &BumpSum, x: &[f64], t: f64) -> Result<()> {
        Self::check(op, datum, x, t)?;
        if datum.dim > 3 {
            return Err(Error::invalid(
                op,
                format!("wave parts need dimension ≤ 3, got {}", datum.dim),
            ));
        }
        Ok(())
    }

    /// Heat semigroup `(4πt)^{-n/2} ∫ e^{-|x−y|²/4t} φ(y) dy`.
    pub fn heat(&self, phi: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Self::check("heat", phi, x, t)?;
        let n = phi.dim;
        let mut total = 0.0;
        for fr in Self::frames(phi, x) {
            for (lo, hi) in fr.windows(f64::INFINITY) {
                for (w, r) in self.plain_nodes(lo, hi) {
                    let m = self.moments(n, &fr, r);
                    total += w * (-r * r / (4.0 * t)).exp() * r.powi(n as i32 - 1) * m.s0;
                }
            }
        }
        Ok(total / (4.0 * PI * t).powf(0.5 * n as f64))
    }

    /// Gradient of the heat semigroup.
    pub fn grad_heat(&self, phi: &BumpSum, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Self::check("grad_heat", phi, x, t)?;
        let n = phi.dim;
        let mut g = vec![0.0; n];
        let norm = (4.0 * PI * t).powf(0.5 * n as f64);
        for fr in Self::frames(phi, x) {
            for (lo, hi) in fr.windows(f64::INFINITY) {
                let mut acc = 0.0;
                for (w, r) in self.plain_nodes(lo, hi) {
                    let m = self.moments(n, &fr, r);
                    acc += w * (-r * r / (4.0 * t)).exp() * r.powi(n as i32) * m.s1 / (2.0 * t);
                }
                axpy(&mut g, acc / norm, &fr.e);
            }
        }
        Ok(g)
    }

    /// Heat part `J_n(t) g(x)`, `1 ≤ n ≤ 7`.
    pub fn heat_part_j(&self, g: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Self::check("heat_part_J", g, x, t)?;
        let (l, c) = heat_part_kernel(g.dim);
        Ok(c * self.ball_value(g, x, t, &l))
    }

    /// `J̃_n(t) f(x)`.
    pub fn tilde_j(&self, f: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Self::check("tilde_J", f, x, t)?;
        let (l, c) = tilde_kernel(f.dim, t);
        Ok(c * self.ball_value(f, x, t, &l))
    }

    /// Whether the sphere `|y − x| = t` misses every support ball.
    fn sphere_misses(datum: &BumpSum, x: &[f64], t: f64) -> bool {
        Self::frames(datum, x)
            .iter()
            .all(|fr| fr.d + fr.bump.radius < t || fr.d - fr.bump.radius > t)
    }

    /// `∇J_n(t) h(x)`. For odd `n` with the sphere `S_t(x)` clear of the
    /// support this is `−∫ E_n(|x−y|, t) h(y)(x − y) dy`; otherwise the
    /// boundary terms are included.
    pub fn grad_j(&self, h: &BumpSum, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Self::check("grad_J", h, x, t)?;
        let n = h.dim;
        if n % 2 == 1 && Self::sphere_misses(h, x, t) {
            return self.grad_j_moment_form(h, x, t);
        }
        let (l, c) = heat_part_kernel(n);
        Ok(self
            .ball_grad(h, x, t, &l, true)
            .into_iter()
            .map(|v| c * v)
            .collect())
    }

    fn grad_j_moment_form(&self, h: &BumpSum, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let n = h.dim;
        let mut g = vec![0.0; n];
        for fr in Self::frames(h, x) {
            for (lo, hi) in fr.windows(t) {
                let mut acc = 0.0;
                for (w, r, jac) in self.sine_nodes(t, lo, hi) {
                    let m = self.moments(n, &fr, r);
                    if m.s1 != 0.0 && r < t {
                        acc += w * jac * e_weight(n as u32, r, t)? * r.powi(n as i32) * m.s1;
                    }
                }
                axpy(&mut g, acc, &fr.e);
            }
        }
        Ok(g)
    }

    /// `(ω·∇)² J_n(t) h(x)`.
    pub fn second_dir_j(&self, h: &BumpSum, x: &[f64], t: f64, omega: &[f64]) -> Result<f64> {
        Self::check("second_dir_J", h, x, t)?;
        check_unit(omega, h.dim)?;
        let (l, c) = heat_part_kernel(h.dim);
        Ok(c * self.ball_second_dir(h, x, t, &l, omega))
    }

    /// `∇J̃_n(t) f(x)`.
    pub fn grad_tilde_j(&self, f: &BumpSum, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Self::check("grad_tildeJ", f, x, t)?;
        let (l, c) = tilde_kernel(f.dim, t);
        Ok(self
            .ball_grad(f, x, t, &l, true)
            .into_iter()
            .map(|v| c * v)
            .collect())
    }

    /// `(ω·∇)² J̃_n(t) f(x)`.
    pub fn second_dir_tilde_j(&self, f: &BumpSum, x: &[f64], t: f64, omega: &[f64]) -> Result<f64> {
        Self::check("second_dir_tildeJ", f, x, t)?;
        check_unit(omega, f.dim)?;
        let (l, c) = tilde_kernel(f.dim, t);
        Ok(c * self.ball_second_dir(f, x, t, &l, omega))
    }

    /// Radial integral of a per-node quantity against `dr` (n = 1) or `r du` (n = 2).
    fn wave_radial(
        &self,
        datum: &BumpSum,
        x: &[f64],
        t: f64,
        mut q: impl FnMut(&Frame, &Moments, f64) -> f64,
    ) -> f64 {
        let n = datum.dim;
        let mut total = 0.0;
        for fr in Self::frames(datum, x) {
            for (lo, hi) in fr.windows(t) {
                if n == 1 {
                    for (w, r) in self.plain_nodes(lo, hi) {
                        total += w * q(&fr, &self.moments(n, &fr, r), r);
                    }
                } else {
                    for (w, r, _) in self.sine_nodes(t, lo, hi) {
                        total += w * r * q(&fr, &self.moments(n, &fr, r), r);
                    }
                }
            }
        }
        total
    }

    /// Vector version of [`Engine::wave_radial`]; `q` returns the coefficient of the bump axis.
    fn wave_radial_vec(
        &self,
        datum: &BumpSum,
        x: &[f64],
        t: f64,
        mut q: impl FnMut(&Frame, &Moments, f64) -> f64,
    ) -> Vec<f64> {
        let n = datum.dim;
        let mut g = vec![0.0; n];
        for fr in Self::frames(datum, x) {
            for (lo, hi) in fr.windows(t) {
                let mut acc = 0.0;
                if n == 1 {
                    for (w, r) in self.plain_nodes(lo, hi) {
                        acc += w * q(&fr, &self.moments(n, &fr, r), r);
                    }
                } else {
                    for (w, r, _) in self.sine_nodes(t, lo, hi) {
                        acc += w * r * q(&fr, &self.moments(n, &fr, r), r);
                    }
                }
                axpy(&mut g, acc, &fr.e);
            }
        }
        g
    }

    fn sphere_sum(
        &self,
        datum: &BumpSum,
        x: &[f64],
        r: f64,
        q: impl Fn(&Frame, &Moments) -> f64,
    ) -> f64 {
        Self::frames(datum, x)
            .iter()
            .map(|fr| q(fr, &self.moments(datum.dim, fr, r)))
            .sum()
    }

    fn sphere_sum_vec(
        &self,
        datum: &BumpSum,
        x: &[f64],
        r: f64,
        q: impl Fn(&Frame, &Moments) -> f64,
    ) -> Vec<f64> {
        let mut g = vec![0.0; datum.dim];
        for fr in Self::frames(datum, x) {
            let m = self.moments(datum.dim, &fr, r);
            axpy(&mut g, q(&fr, &m), &fr.e);
        }
        g
    }

    /// Wave part `W_n(t) g(x)`, `n ≤ 3`.
    pub fn wave_part_w(&self, g: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Self::check_wave("wave_part_W", g, x, t)?;
        Ok(match g.dim {
            1 => 0.5 * self.wave_radial(g, x, t, |_, m, _| m.s0),
            2 => self.wave_radial(g, x, t, |_, m, _| m.s0) / (2.0 * PI),
            _ => t / (4.0 * PI) * self.sphere_sum(g, x, t, |_, m| m.s0),
        })
    }

    fn grad_wave_part_w(&self, g: &BumpSum, x: &[f64], t: f64) -> Vec<f64> {
        let d_moment = |fr: &Frame, m: &Moments, r: f64| r * m.g1 - fr.d * m.g0;
        match g.dim {
            1 => self
                .wave_radial_vec(g, x, t, d_moment)
                .into_iter()
                .map(|v| 0.5 * v)
                .collect(),
            2 => self
                .wave_radial_vec(g, x, t, d_moment)
                .into_iter()
                .map(|v| v / (2.0 * PI))
                .collect(),
            _ => self.sphere_sum_vec(g, x, t, |fr, m| t / (4.0 * PI) * d_moment(fr, m, t)),
        }
    }

    /// `Ŵ_n(t) f(x)`, `n ≤ 3`.
    pub fn hat_w(&self, f: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Self::check_wave("hat_W", f, x, t)?;
        let k = hat_w_coefficient(f.dim);
        Ok(match f.dim {
            2 => k * t * self.wave_radial(f, x, t, |_, m, _| m.s0),
            n => k * t.powi(n as i32 - 1) * self.sphere_sum(f, x, t, |_, m| m.s0),
        })
    }

    fn grad_hat_w(&self, f: &BumpSum, x: &[f64], t: f64) -> Vec<f64> {
        let k = hat_w_coefficient(f.dim);
        match f.dim {
            2 => self
                .wave_radial_vec(f, x, t, |fr, m, r| r * m.g1 - fr.d * m.g0)
                .into_iter()
                .map(|v| k * t * v)
                .collect(),
            n => self.sphere_sum_vec(f, x, t, |fr, m| {
                k * t.powi(n as i32 - 1) * (t * m.g1 - fr.d * m.g0)
            }),
        }
    }

    /// `∂_t W_n(t) f(x)` for `n ∈ {2, 3}`.
    fn dt_wave_part_w(&self, f: &BumpSum, x: &[f64], t: f64) -> f64 {
        let trace_q = |fr: &Frame, m: &Moments, r: f64| r * m.g0 - fr.d * m.g1;
        match f.dim {
            2 => {
                let w = self.wave_radial(f, x, t, |_, m, _| m.s0) / (2.0 * PI);
                w / t + self.wave_radial(f, x, t, |fr, m, r| r * trace_q(fr, m, r)) / (2.0 * PI * t)
            }
            _ => self.sphere_sum(f, x, t, |fr, m| (m.s0 + t * trace_q(fr, m, t)) / (4.0 * PI)),
        }
    }

    fn grad_dt_wave_part_w(&self, f: &BumpSum, x: &[f64], t: f64) -> Vec<f64> {
        let d_moment = |fr: &Frame, m: &Moments, r: f64| r * m.g1 - fr.d * m.g0;
        let hess_moment = |m: &Moments| m.g1 + m.hh;
        match f.dim {
            2 => {
                let gw = self.grad_wave_part_w(f, x, t);
                let extra = self.wave_radial_vec(f, x, t, |_, m, r| r * hess_moment(m));
                gw.iter()
                    .zip(&extra)
                    .map(|(a, b)| a / t + b / (2.0 * PI * t))
                    .collect()
            }
            _ => self.sphere_sum_vec(f, x, t, |fr, m| {
                (d_moment(fr, m, t) + t * hess_moment(m)) / (4.0 * PI)
            }),
        }
    }

    /// `W̃_n(t; f, g)(x)`, the wave-type remainder of `u`.
    pub fn tilde_w(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<f64> {
        let (f, g) = (&setup.f, &setup.g);
        Self::check_wave("tilde_W", f, x, t)?;
        if f.dim == 1 {
            return Ok(self.wave_part_w(&setup.h, x, t)? + self.hat_w(f, x, t)?);
        }
        Ok(self.wave_part_w(g, x, t)?
            + 0.5 * self.wave_part_w(f, x, t)?
            + self.hat_w(f, x, t)?
            + self.dt_wave_part_w(f, x, t))
    }

    /// `∇W̃_n(t; f, g)(x)`, derivatives moved onto the data.
    pub fn grad_tilde_w(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let (f, g) = (&setup.f, &setup.g);
        Self::check_wave("grad_tilde_W", f, x, t)?;
        let mut out = self.grad_wave_part_w(g, x, t);
        let scale_f = if f.dim == 1 { 1.0 } else { 0.5 };
        axpy(&mut out, scale_f, &self.grad_wave_part_w(f, x, t));
        axpy(&mut out, 1.0, &self.grad_hat_w(f, x, t));
        if f.dim > 1 {
            axpy(&mut out, 1.0, &self.grad_dt_wave_part_w(f, x, t));
        }
        Ok(out)
    }

    /// `S_n(t) g(x)` from the explicit solution formulas, integrated by the
    /// adaptive routes of [`crate::quadrature`] independently of the
    /// heat/wave split.
    pub fn solution_s(&self, g: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Self::check_wave("solution_S", g, x, t)?;
        let Some(bbox) = g.bounding_box() else {
            return Ok(0.0);
        };
        let half = 0.5 * t;
        let s_of = |y: &[f64]| {
            let r2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            0.5 * (t * t - r2).max(0.0).sqrt()
        };
        match g.dim {
            1 => {
                let a = (x[0] - t).max(bbox.lo[0]);
                let b = (x[0] + t).min(bbox.hi[0]);
                if !(b > a) {
                    return Ok(0.0);
                }
                let f = |y: f64| {
                    let s = s_of(&[y]);
                    (s - half).exp() * bessel_i_scaled(0, s).unwrap_or(f64::NAN) * g.eval(&[y])
                };
                Ok(0.5 * integrate_interval(&f, a, b, &self.spec)?)
            }
            2 => {
                // One tight support box per bump.
                let mut sum = 0.0;
                for b in g.bumps.iter().filter(|b| b.amplitude != 0.0) {
                    let weighted = Supported {
                        f: |y: &[f64]| {
                            let s = s_of(y);
                            0.5 * ((s - half).exp() + (-s - half).exp()) * b.eval(y)
                        },
                        support: b.support_box(),
                    };
                    sum += integrate_ball_chebweight(2, x, t, &weighted, &self.spec)?;
                }
                Ok(sum / (2.0 * PI))
            }
            _ => {
                // Radial bumps reduce sphere integrals to one dimension:
                // ∫_{S_r(x)} φ(|y − c|) dσ = (2πr/d) ∫_{|r−d|}^{r+d} φ(q) q dq.
                let failure = std::cell::RefCell::new(None);
                let shell = |b: &Bump, d: f64, r: f64| -> f64 {
                    if r == 0.0 {
                        return 0.0;
                    }
                    if d == 0.0 {
                        return 4.0 * PI * r * r * b.profile(r);
                    }
                    let (lo, hi) = ((r - d).abs(), (r + d).min(b.radius));
                    if hi <= lo {
                        return 0.0;
                    }
                    let inner = self.spec.scaled(0.1);
                    match integrate_interval(&|q| b.profile(q) * q, lo, hi, &inner) {
                        Ok(v) => 2.0 * PI * r / d * v,
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            0.0
                        }
                    }
                };
                let (mut j, mut w) = (0.0, 0.0);
                for b in g.bumps.iter().filter(|b| b.amplitude != 0.0) {
                    let d = b
                        .center
                        .iter()
                        .zip(x)
                        .map(|(c, xi)| (c - xi) * (c - xi))
                        .sum::<f64>()
                        .sqrt();
                    let integrand = |r: f64| {
                        let s = 0.5 * (t * t - r * r).max(0.0).sqrt();
                        0.25 * scaled_kernel(KernelId::odd(1), s, half) * shell(b, d, r)
                    };
                    let mut edges = vec![(d - b.radius).max(0.0), b.radius - d, d + b.radius];
                    edges.retain(|e| *e >= 0.0);
                    edges.sort_by(f64::total_cmp);
                    for pair in edges.windows(2) {
                        let (lo, hi) = (pair[0], pair[1].min(t));
                        if hi > lo {
                            j += integrate_interval(&integrand, lo, hi, &self.spec)?;
                        }
                    }
                    w += shell(b, d, t);
                }
                if let Some(e) = failure.into_inner() {
                    return Err(e);
                }
                let (j, w) = (j / (4.0 * PI), w / (4.0 * PI * t));
                Ok(j + (-half).exp() * w)
            }
        }
    }

    /// `∂_t S_n(t) f(x)`, `n ≤ 3`.
    pub fn dt_solution_s(&self, f: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Self::check_wave("dt_solution_S", f, x, t)?;
        let decay = (-0.5 * t).exp();
        let tilde = self.tilde_j(f, x, t)?;
        if f.dim == 1 {
            return Ok(tilde + decay * self.hat_w(f, x, t)?);
        }
        let wave =
            self.hat_w(f, x, t)? - 0.5 * self.wave_part_w(f, x, t)? + self.dt_wave_part_w(f, x, t);
        Ok(tilde + decay * wave)
    }

    /// `S_n(t) g(x)` as `J_n + e^{-t/2} W_n` on the fixed rules.
    pub fn split_solution_s(&self, g: &BumpSum, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.heat_part_j(g, x, t)? + (-0.5 * t).exp() * self.wave_part_w(g, x, t)?)
    }

    /// The solution `u(x, t)`; `t = 0` returns `f(x)`.
    pub fn solve_u(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<f64> {
        if t == 0.0 {
            if x.len() != setup.dim() {
                return Err(Error::invalid(
                    "solve_u",
                    "point dimension differs from the data dimension",
                ));
            }
            return Ok(setup.f.eval(x));
        }
        Self::check_wave("solve_u", &setup.h, x, t)?;
        Ok(self.jet_u(setup, x, t, false).0)
    }

    /// `∇u(x, t)`; `t = 0` returns `∇f(x)`.
    pub fn grad_u(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.value_grad_u(setup, x, t)?.1)
    }

    /// `u(x, t)` and `∇u(x, t)` from one pass over the data.
    pub fn value_grad_u(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<(f64, Vec<f64>)> {
        if t == 0.0 {
            if x.len() != setup.dim() {
                return Err(Error::invalid(
                    "grad_u",
                    "point dimension differs from the data dimension",
                ));
            }
            return Ok((setup.f.eval(x), setup.f.grad(x)));
        }
        Self::check_wave("grad_u", &setup.h, x, t)?;
        let (v, g) = self.jet_u(setup, x, t, true);
        Ok((v, g.unwrap_or_default()))
    }

    /// `u` assembled from the separately evaluated parts.
    pub fn solve_u_by_parts(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<f64> {
        Self::check_wave("solve_u", &setup.h, x, t)?;
        Ok(self.heat_part_j(&setup.h, x, t)?
            + self.tilde_j(&setup.f, x, t)?
            + (-0.5 * t).exp() * self.tilde_w(setup, x, t)?)
    }

    /// `∇u` assembled from the separately evaluated parts.
    pub fn grad_u_by_parts(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Self::check_wave("grad_u", &setup.h, x, t)?;
        let mut g = self.grad_j(&setup.h, x, t)?;
        axpy(&mut g, 1.0, &self.grad_tilde_j(&setup.f, x, t)?);
        axpy(&mut g, (-0.5 * t).exp(), &self.grad_tilde_w(setup, x, t)?);
        Ok(g)
    }

    /// Moments of every bump of `f` and `g` at the radial nodes and on `S_t(x)`.
    fn sample<'a>(&self, setup: &'a ProblemSetup, x: &[f64], t: f64) -> Vec<Sampled<'a>> {
        let n = setup.dim();
        let mut out = Vec::new();
        for (datum, from_f) in [(&setup.f, true), (&setup.g, false)] {
            for fr in Self::frames(datum, x) {
                let mut nodes = Vec::new();
                for (lo, hi) in fr.windows(t) {
                    for (w, r, jac) in self.sine_nodes(t, lo, hi) {
                        let m = self.moments(n, &fr, r);
                        if m.s0 != 0.0 || m.g0 != 0.0 {
                            nodes.push((w, r, jac, m));
                        }
                    }
                }
                let rim = self.moments(n, &fr, t);
                out.push(Sampled {
                    fr,
                    from_f,
                    nodes,
                    rim,
                });
            }
        }
        out
    }

    /// Value and optionally gradient of `u`, sharing the sampled moments
    /// between the heat and wave parts.
    fn jet_u(
        &self,
        setup: &ProblemSetup,
        x: &[f64],
        t: f64,
        with_grad: bool,
    ) -> (f64, Option<Vec<f64>>) {
        let n = setup.dim();
        let ni = n as i32;
        let shift = 0.5 * t;
        let decay = (-shift).exp();
        let (lj, cj) = heat_part_kernel(n);
        let (lt, ct) = tilde_kernel(n, t);
        let (rj, bj) = lj.over_s();
        let (rt, bt) = lt.over_s();
        let (lj0, lt0) = (lj.at_zero(), lt.at_zero());
        let k_hat = hat_w_coefficient(n);
        let table = self.sample(setup, x, t);

        let (mut j, mut jt) = (0.0, 0.0);
        // Radial wave sums (n ≤ 2) and sphere sums (n = 3 and the 1D `Ŵ`).
        let (mut wg, mut wf, mut trq) = (0.0, 0.0, 0.0);
        let (mut rim_g, mut rim_f, mut rim_tr) = (0.0, 0.0, 0.0);
        let mut grad = vec![0.0; n];
        for sm in &table {
            let d = sm.fr.d;
            let mut axis = 0.0;
            let (mut dw, mut hw) = (0.0, 0.0);
            for &(w, r, jac, ref m) in &sm.nodes {
                let s = 0.5 * jac;
                let k0 = scaled_kernel(lj.base, s, shift);
                let need_k1 = sm.from_f || with_grad || lj.a != 0.0;
                let k1 = if need_k1 {
                    scaled_kernel(lj.base.raised(1), s, shift)
                } else {
                    0.0
                };
                let rp = r.powi(ni - 1);
                j += w * jac * lj.combine(k0, k1, decay) * rp * m.s0;
                let ww = if n == 1 { w * jac } else { w * r };
                if sm.from_f {
                    jt += w * jac * lt.combine(k0, k1, decay) * rp * m.s0;
                    wf += ww * m.s0;
                    trq += ww * r * (r * m.g0 - d * m.g1);
                } else {
                    wg += ww * m.s0;
                }
                if with_grad {
                    let rn = w * r.powi(ni) * m.s1;
                    axis += 0.25 * cj * (rj.combine(k1, 0.0, decay) * jac + 2.0 * bj * decay) * rn;
                    if sm.from_f {
                        let k2 = scaled_kernel(lj.base.raised(2), s, shift);
                        axis +=
                            0.25 * ct * (rt.combine(k1, k2, decay) * jac + 2.0 * bt * decay) * rn;
                        hw += ww * r * (m.g1 + m.hh);
                    }
                    dw += ww * (r * m.g1 - d * m.g0);
                }
            }
            let rim = &sm.rim;
            if sm.from_f {
                rim_f += rim.s0;
                rim_tr += t * (t * rim.g0 - d * rim.g1);
            } else {
                rim_g += rim.s0;
            }
            if with_grad {
                let tp = t.powi(ni - 1);
                axis += cj * lj0 * decay * tp * rim.s1;
                if sm.from_f {
                    axis += ct * lt0 * decay * tp * rim.s1;
                }
                let d_rim = t * rim.g1 - d * rim.g0;
                let wave = match (n, sm.from_f) {
                    (1, false) => 0.5 * dw,
                    (1, true) => 0.5 * dw + k_hat * d_rim,
                    (2, false) => dw / (2.0 * PI),
                    (2, true) => {
                        0.5 * dw / (2.0 * PI) + k_hat * t * dw + (dw / t + hw / t) / (2.0 * PI)
                    }
                    (_, false) => t / (4.0 * PI) * d_rim,
                    (_, true) => {
                        0.5 * t / (4.0 * PI) * d_rim
                            + k_hat * t * t * d_rim
                            + (d_rim + t * (rim.g1 + rim.hh)) / (4.0 * PI)
                    }
                };
                axis += decay * wave;
                axpy(&mut grad, axis, &sm.fr.e);
            }
        }
        let tilde_w = match n {
            1 => 0.5 * (wg + wf) + k_hat * rim_f,
            2 => {
                let (w2g, w2f) = (wg / (2.0 * PI), wf / (2.0 * PI));
                w2g + 0.5 * w2f + k_hat * t * wf + w2f / t + trq / (2.0 * PI * t)
            }
            _ => {
                let q = t / (4.0 * PI);
                q * rim_g + 0.5 * q * rim_f + k_hat * t * t * rim_f + (rim_f + rim_tr) / (4.0 * PI)
            }
        };
        let value = cj * j + ct * jt + decay * tilde_w;
        (value, with_grad.then_some(grad))
    }

    /// `(ω·∇)² u(x, t)`: analytic for the heat parts, centered differences
    /// (step `1e-5`) of the analytic `∇W̃` for the wave part.
    pub fn second_dir_u(
        &self,
        setup: &ProblemSetup,
        x: &[f64],
        t: f64,
        omega: &[f64],
    ) -> Result<f64> {
        check_unit(omega, setup.dim())?;
        let mut v = self.second_dir_j(&setup.h, x, t, omega)?
            + self.second_dir_tilde_j(&setup.f, x, t, omega)?;
        let decay = (-0.5 * t).exp();
        if decay > 0.0 {
            let step = 1e-5;
            let xp: Vec<f64> = x.iter().zip(omega).map(|(a, w)| a + step * w).collect();
            let xm: Vec<f64> = x.iter().zip(omega).map(|(a, w)| a - step * w).collect();
            let gp = self.grad_tilde_w(setup, &xp, t)?;
            let gm = self.grad_tilde_w(setup, &xm, t)?;
            v += decay * (dot(&gp, omega) - dot(&gm, omega)) / (2.0 * step);
        }
        Ok(v)
    }

    /// `u − P_n(t) h − e^{-t/2} W̃_n(t; f, g)`.
    pub fn diffusion_remainder(&self, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<f64> {
        Ok(
            self.heat_part_j(&setup.h, x, t)? + self.tilde_j(&setup.f, x, t)?
                - self.heat(&setup.h, x, t)?,
        )
    }

    /// One part at one point.
    pub fn part(&self, setup: &ProblemSetup, part: Part, x: &[f64], t: f64) -> Result<f64> {
        match part {
            Part::FullU => self.solve_u(setup, x, t),
            Part::HeatPartJ => self.heat_part_j(&setup.h, x, t),
            Part::WavePartW => self.wave_part_w(&setup.h, x, t),
            Part::TildeJ => self.tilde_j(&setup.f, x, t),
            Part::HatW => self.hat_w(&setup.f, x, t),
            Part::TildeW => self.tilde_w(setup, x, t),
            Part::HeatSemigroupP => {
                if t == 0.0 {
                    Ok(setup.h.eval(x))
                } else {
                    self.heat(&setup.h, x, t)
                }
            }
            Part::DifferenceUMinusP => {
                let p = if t == 0.0 {
                    setup.h.eval(x)
                } else {
                    self.heat(&setup.h, x, t)?
                };
                Ok(self.solve_u(setup, x, t)? - p)
            }
        }
    }

    /// Dense evaluation of `part` on a grid, parallel over nodes.
    pub fn field(
        &self,
        setup: &ProblemSetup,
        part: Part,
        t: f64,
        bounds: &AxisBox,
        resolution: &[usize],
    ) -> Result<FieldGrid> {
        let n = setup.dim();
        if bounds.lo.len() != n || bounds.hi.len() != n || resolution.len() != n {
            return Err(Error::invalid(
                "field",
                "box and resolution must match the data dimension",
            ));
        }
        if resolution.contains(&0) {
            return Err(Error::invalid(
                "field",
                "resolution entries must be positive",
            ));
        }
        if bounds.lo.iter().zip(&bounds.hi).any(|(a, b)| !(b > a)) {
            return Err(Error::invalid("field", "box is degenerate"));
        }
        let count: usize = resolution.iter().product();
        let values = (0..count)
            .into_par_iter()
            .map(|i| self.part(setup, part, &grid_node(bounds, resolution, i), t))
            .collect::<Result<Vec<f64>>>()?;
        Ok(FieldGrid {
            bounds: bounds.clone(),
            resolution: resolution.to_vec(),
            values,
            t,
            part,
            setup_hash: setup_hash(setup),
        })
    }
}

fn check_unit(omega: &[f64], n: usize) -> Result<()> {
    if omega.len() != n {
        return Err(Error::invalid(
            "direction",
            format!("direction has {} components, expected {n}", omega.len()),
        ));
    }
    let norm = dot(omega, omega).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "direction",
            format!("direction has norm {norm}, expected 1"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
