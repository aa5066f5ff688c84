//! Spatial maximizers of `u(·, t)` and their motion.
//!
//! Hot spots are located by a coarse scan of the region the solution can
//! reach, `(CS(h) + tB) ∪ (CS(f) + tB)`, followed by gradient ascent from
//! every near-maximal node and clustering of the limits.

use crate::initdata::{Bump, BumpSum, Point, ProblemSetup, SupportHull};
use crate::pde::Engine;
use crate::quadrature::AxisBox;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Knobs of [`find_hotspots`]; `None` picks a scale-aware default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchParams {
    /// Grid nodes per axis of the coarse scan.
    pub coarse_resolution: Option<usize>,
    /// Gradient norm at which ascent stops; default `1e-8·max/d_h`.
    pub refine_tol: Option<f64>,
    /// Merge radius for refined points; default `1e-3·d_h`.
    pub cluster_tol: Option<f64>,
    /// Ascent iterations per seed.
    pub max_iterations: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            coarse_resolution: None,
            refine_tol: None,
            cluster_tol: None,
            max_iterations: 20,
        }
    }
}

/// Default coarse resolution per axis for each dimension.
pub fn default_resolution(n: usize) -> usize {
    match n {
        1 => 401,
        2 => 41,
        _ => 15,
    }
}

/// The scanned region: a box filtered by distance to the two hulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub bounds: AxisBox,
    /// Points within this distance of `CS(h)` or `CS(f)` are scanned.
    pub reach: f64,
}

/// The maximizers of `u(·, t)` after clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotspotSet {
    pub t: f64,
    pub points: Vec<Point>,
    /// Common maximum value.
    pub value: f64,
    /// `|∇u|` at each point.
    pub gradient_norms: Vec<f64>,
    pub cluster_tol: f64,
    pub refine_tol: f64,
    pub search_region: SearchRegion,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn grid_points(bounds: &AxisBox, per_axis: usize) -> Vec<Point> {
    let n = bounds.lo.len();
    let count = per_axis.pow(n as u32);
    let res = vec![per_axis; n];
    (0..count)
        .map(|i| crate::pde::grid_node(bounds, &res, i))
        .collect()
}

fn clamp(x: &mut [f64], bounds: &AxisBox) {
    for ((v, lo), hi) in x.iter_mut().zip(&bounds.lo).zip(&bounds.hi) {
        *v = v.clamp(*lo, *hi);
    }
}

fn union_box(a: &AxisBox, b: &AxisBox) -> AxisBox {
    AxisBox {
        lo: a.lo.iter().zip(&b.lo).map(|(p, q)| p.min(*q)).collect(),
        hi: a.hi.iter().zip(&b.hi).map(|(p, q)| p.max(*q)).collect(),
    }
}

/// Result of one ascent run.
struct Climb {
    x: Point,
    value: f64,
    grad_norm: f64,
}

/// Value and gradient of the function being climbed.
type ValueGrad<'a> = &'a (dyn Fn(&[f64]) -> Result<(f64, Vec<f64>)> + Sync);

/// Gradient ascent with Armijo backtracking. Trial steps come from the
/// Barzilai-Borwein quotient; near the top, where value differences sink
/// below rounding, a step is also accepted if it shrinks the gradient
/// without losing value beyond that level.
fn climb(
    value_grad: ValueGrad,
    admissible: &(dyn Fn(&[f64]) -> bool + Sync),
    start: &[f64],
    first_step: f64,
    tol: f64,
    iterations: usize,
) -> Result<Climb> {
    let mut x = start.to_vec();
    let (mut v, mut g) = value_grad(&x)?;
    let mut gn = norm(&g);
    let mut alpha = if gn > 0.0 { first_step / gn } else { 0.0 };
    for _ in 0..iterations {
        if gn <= tol || gn == 0.0 {
            break;
        }
        let mut accepted = None;
        loop {
            if alpha * gn < 1e-10 {
                break;
            }
            let trial: Point = x.iter().zip(&g).map(|(a, b)| a + alpha * b).collect();
            if admissible(&trial) {
                let (vt, gt) = value_grad(&trial)?;
                let noise = 1e-13 * v.abs().max(vt.abs());
                let armijo = vt >= v + 1e-4 * alpha * gn * gn;
                if armijo || (vt >= v - noise && norm(&gt) < gn) {
                    accepted = Some((trial, vt, gt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, vn, gnew)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy < 0.0 { ss / -sy } else { 2.0 * alpha };
        x = xn;
        v = vn;
        g = gnew;
        gn = norm(&g);
    }
    Ok(Climb {
        x,
        value: v,
        grad_norm: gn,
    })
}

/// The set `H(t)` of maximizers of `u(·, t)`.
pub fn find_hotspots(
    engine: &Engine,
    setup: &ProblemSetup,
    t: f64,
    params: &SearchParams,
) -> Result<HotspotSet> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(
            "find_hotspots",
            format!("time {t} must be finite and non-negative"),
        ));
    }
    let n = setup.dim();
    let res = params.coarse_resolution.unwrap_or(default_resolution(n));
    if res < 2 {
        return Err(Error::invalid(
            "find_hotspots",
            "coarse_resolution must be at least 2",
        ));
    }
    let scale = setup.d_h.max(f64::MIN_POSITIVE);
    let cluster_tol = params.cluster_tol.unwrap_or(1e-3 * scale);
    let mut bounds = setup.hull_h.bounding_box(t);
    if !setup.f.is_zero() {
        bounds = union_box(&bounds, &setup.hull_f.bounding_box(t));
    }
    let reach = t;
    let inside = |x: &[f64]| {
        let slack = 1e-12 * (1.0 + reach);
        setup.hull_h.excess(x) <= reach + slack || setup.hull_f.excess(x) <= reach + slack
    };
    let nodes: Vec<Point> = grid_points(&bounds, res)
        .into_iter()
        .filter(|x| inside(x))
        .collect();
    let values = nodes
        .par_iter()
        .map(|x| engine.solve_u(setup, x, t))
        .collect::<Result<Vec<f64>>>()?;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    let cut = hi - 1e-3 * (hi - lo);
    let seeds: Vec<&Point> = nodes
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v >= cut)
        .map(|(x, _)| x)
        .collect();
    let refine_tol = params
        .refine_tol
        .unwrap_or(1e-8 * hi.abs().max(f64::MIN_POSITIVE) / scale);
    let spacing = bounds
        .lo
        .iter()
        .zip(&bounds.hi)
        .map(|(a, b)| (b - a) / (res - 1) as f64)
        .fold(0.0, f64::max);
    let value_grad = |x: &[f64]| engine.value_grad_u(setup, x, t);
    let admissible = |x: &[f64]| {
        let mut y = x.to_vec();
        clamp(&mut y, &bounds);
        y == x && inside(x)
    };
    let climbs = seeds
        .par_iter()
        .map(|x| {
            climb(
                &value_grad,
                &admissible,
                x,
                spacing,
                refine_tol,
                params.max_iterations,
            )
        })
        .collect::<Result<Vec<Climb>>>()?;
    Ok(cluster(climbs, t, cluster_tol, refine_tol, bounds, reach))
}

/// Keep the refined points sharing the top value, merged at `cluster_tol`.
fn cluster(
    mut climbs: Vec<Climb>,
    t: f64,
    cluster_tol: f64,
    refine_tol: f64,
    bounds: AxisBox,
    reach: f64,
) -> HotspotSet {
    climbs.sort_by(|a, b| b.value.total_cmp(&a.value));
    let top = climbs.first().map_or(0.0, |c| c.value);
    let band = 1e-9 * top.abs() + 1e-300;
    let mut kept: Vec<Climb> = Vec::new();
    for c in climbs {
        if top - c.value > band {
            break;
        }
        if kept.iter().all(|k| distance(&k.x, &c.x) >= cluster_tol) {
            kept.push(c);
        }
    }
    HotspotSet {
        t,
        value: top,
        gradient_norms: kept.iter().map(|c| c.grad_norm).collect(),
        points: kept.into_iter().map(|c| c.x).collect(),
        cluster_tol,
        refine_tol,
        search_region: SearchRegion { bounds, reach },
    }
}

/// Sample times with the neighborhood exponents `ψ(t) = t^ψ`, `φ(t) = t^φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub times: Vec<f64>,
    #[serde(default = "default_phi")]
    pub phi_exponent: f64,
    #[serde(default = "default_psi")]
    pub psi_exponent: f64,
}

fn default_phi() -> f64 {
    2.0 / 3.0
}

fn default_psi() -> f64 {
    1.0 / 3.0
}

impl Schedule {
    pub fn new(mut times: Vec<f64>) -> Result<Self> {
        times.sort_by(f64::total_cmp);
        let s = Schedule {
            times,
            phi_exponent: default_phi(),
            psi_exponent: default_psi(),
        };
        s.validate()?;
        Ok(s)
    }

    /// `count` logarithmically spaced times from `a` to `b`.
    pub fn log_range(a: f64, b: f64, count: usize) -> Result<Self> {
        if !(a > 0.0 && b > a) || count < 2 {
            return Err(Error::invalid(
                "Schedule",
                "log range needs 0 < a < b and at least two samples",
            ));
        }
        let ratio = (b / a).ln() / (count - 1) as f64;
        Schedule::new(
            (0..count)
                .map(|k| {
                    if k + 1 == count {
                        b
                    } else {
                        a * (ratio * k as f64).exp()
                    }
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::invalid("Schedule", "times must not be empty"));
        }
        if self.times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::invalid(
                "Schedule",
                "times must be finite and non-negative",
            ));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("Schedule", "times must be sorted"));
        }
        let (p, q) = (self.psi_exponent, self.phi_exponent);
        if !(0.0 < p && p < 0.5 && 0.5 < q && q < 1.0) {
            return Err(Error::invalid(
                "Schedule",
                format!("need 0 < psi_exponent < 1/2 < phi_exponent < 1, got {p} and {q}"),
            ));
        }
        Ok(())
    }

    pub fn psi(&self, t: f64) -> f64 {
        t.powf(self.psi_exponent)
    }

    pub fn phi(&self, t: f64) -> f64 {
        t.powf(self.phi_exponent)
    }
}

/// Options of [`track`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackOptions {
    #[serde(default)]
    pub search: SearchParams,
    /// Also record the minimum second directional derivative over hull probes.
    #[serde(default)]
    pub concavity: bool,
}

/// Hot-spot summary at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub t: f64,
    pub sup_dist_to_centroid: f64,
    pub inside_hull: bool,
    /// Every hot spot lies in `CS(h) + ψ(t)B`.
    pub inside_psi_neighbourhood: bool,
    pub hotspot_count: usize,
    pub max_value: f64,
    pub min_second_dir: Option<f64>,
    pub hotspots: Vec<Point>,
}

/// [`find_hotspots`] along a schedule, measured against `m_h` and `CS(h)`.
pub fn track(
    engine: &Engine,
    setup: &ProblemSetup,
    schedule: &Schedule,
    options: &TrackOptions,
) -> Result<Vec<TrackRecord>> {
    schedule.validate()?;
    let probes = options.concavity.then(|| hull_probes(&setup.hull_h, 5));
    let dirs = probe_directions(setup.dim());
    schedule
        .times
        .iter()
        .map(|&t| {
            let set = find_hotspots(engine, setup, t, &options.search)?;
            log::info!(
                "t = {t}: {} hot spot(s), max {:.6e}",
                set.points.len(),
                set.value
            );
            let sup = set
                .points
                .iter()
                .map(|p| distance(p, &setup.m_h))
                .fold(0.0, f64::max);
            let psi = schedule.psi(t);
            let min_second_dir = match &probes {
                Some(p) if t > 0.0 => Some(concavity_check(engine, setup, t, p, &dirs)?),
                _ => None,
            };
            Ok(TrackRecord {
                t,
                sup_dist_to_centroid: sup,
                inside_hull: set.points.iter().all(|p| setup.hull_h.contains(p)),
                inside_psi_neighbourhood: set.points.iter().all(|p| setup.hull_h.excess(p) <= psi),
                hotspot_count: set.points.len(),
                max_value: set.value,
                min_second_dir,
                hotspots: set.points,
            })
        })
        .collect()
}

/// Unique critical point of `cosh(s/2)/s`: the root of `(s/2) tanh(s/2) = 1`.
pub fn s_star() -> f64 {
    let f = |s: f64| 0.5 * s * (0.5 * s).tanh() - 1.0;
    let (mut lo, mut hi) = (2.0, 3.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Grid nodes (`per_axis` per axis) of the hull's bounding box that lie in the hull.
pub fn hull_probes(hull: &SupportHull, per_axis: usize) -> Vec<Point> {
    grid_points(&hull.bounding_box(0.0), per_axis.max(2))
        .into_iter()
        .filter(|x| hull.contains(x))
        .collect()
}

/// Coordinate axes and the normalized pairwise diagonals.
pub fn probe_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        out.push(e);
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; n];
                e[i] = r;
                e[j] = s * r;
                out.push(e);
            }
        }
    }
    out
}

/// Minimum of `(ω·∇)² u(x, t)` over probe points and directions.
pub fn concavity_check(
    engine: &Engine,
    setup: &ProblemSetup,
    t: f64,
    probes: &[Point],
    dirs: &[Vec<f64>],
) -> Result<f64> {
    if probes.is_empty() || dirs.is_empty() {
        return Err(Error::invalid(
            "concavity_check",
            "need at least one probe point and direction",
        ));
    }
    if let Some(p) = probes.iter().find(|p| !setup.hull_h.contains(p)) {
        return Err(Error::invalid(
            "concavity_check",
            format!("probe {p:?} lies outside CS(h)"),
        ));
    }
    let pairs: Vec<(&Point, &Vec<f64>)> = probes
        .iter()
        .flat_map(|p| dirs.iter().map(move |d| (p, d)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|(p, d)| engine.second_dir_u(setup, p, t, d))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// Lower bound of `u` on `CS(h)` against the exterior of `CS(h) + φ(t)B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorReport {
    pub t: f64,
    pub min_inside: f64,
    pub argmin: Point,
    /// `t^{n/2} · min_inside / ‖h‖_∞`.
    pub scaled_floor: f64,
    /// Whether the minimum sits on the hull boundary sample.
    pub argmin_on_boundary: bool,
    pub max_abs_outside: f64,
    pub outside_below_floor: bool,
}

/// Minimum of `u(·, t)` over a dense sample of `CS(h)`, compared with the
/// largest `|u|` sampled outside `CS(h) + t^φ B`.
pub fn floor_check(
    engine: &Engine,
    setup: &ProblemSetup,
    t: f64,
    phi_exponent: f64,
) -> Result<FloorReport> {
    if !(t > 0.0) {
        return Err(Error::domain("floor_check", "time must be positive"));
    }
    let n = setup.dim();
    let hull = &setup.hull_h;
    let per_axis = match n {
        1 => 101,
        2 => 25,
        _ => 9,
    };
    let mut inside = hull_probes(hull, per_axis);
    // Points on the hull boundary along the probe directions of its support function.
    let boundary: Vec<Point> = boundary_points(hull, n);
    inside.extend(boundary.iter().cloned());
    let values = inside
        .par_iter()
        .map(|x| engine.solve_u(setup, x, t))
        .collect::<Result<Vec<f64>>>()?;
    let (imin, min_inside) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |b, (i, v)| if v < b.1 { (i, v) } else { b },
            );
    let linf = setup.h.norms()?.linf;
    let phi = t.powf(phi_exponent);
    let outer = hull.bounding_box(t);
    let outside: Vec<Point> = grid_points(&outer, default_resolution(n))
        .into_iter()
        .filter(|x| hull.excess(x) > phi)
        .collect();
    let max_abs_outside = outside
        .par_iter()
        .map(|x| engine.solve_u(setup, x, t).map(f64::abs))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(FloorReport {
        t,
        min_inside,
        argmin: inside[imin].clone(),
        scaled_floor: t.powf(0.5 * n as f64) * min_inside / linf,
        argmin_on_boundary: imin >= inside.len() - boundary.len(),
        max_abs_outside,
        outside_below_floor: max_abs_outside < min_inside,
    })
}

/// For each probe direction `ω`, the hull point maximizing `x·ω`.
fn boundary_points(hull: &SupportHull, n: usize) -> Vec<Point> {
    let dirs: Vec<Vec<f64>> = match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..64)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 64.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => hull.directions().to_vec(),
    };
    dirs.iter()
        .map(|w| {
            let (c, r) = hull
                .balls
                .iter()
                .max_by(|a, b| {
                    let sa: f64 = a.0.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() + a.1;
                    let sb: f64 = b.0.iter().zip(w).map(|(p, q)| p * q).sum::<f64>() + b.1;
                    sa.total_cmp(&sb)
                })
                .expect("hull of a nonzero datum has balls");
            c.iter().zip(w).map(|(ci, wi)| ci + r * wi).collect()
        })
        .collect()
}

/// The four constructions in which hot spots leave the hull at small times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeExample {
    /// `n = 1`, `g = 0`, `f = f_ε` a unit-mass mollifier.
    Ex1d,
    /// `n = 2`, `f = 0`, `g` radial on `B_ε`: a critical ring outside the data.
    Ex2dCritical,
    /// `n = 2`, `f = 0`, `g` with support diameter `d_g < s_*/2`.
    Ex2dSmallSupport,
    /// `n = 3`, `f = 0`, `g = g_ε` a unit-mass mollifier.
    Ex3d,
}

impl EscapeExample {
    pub const ALL: [EscapeExample; 4] = [
        EscapeExample::Ex1d,
        EscapeExample::Ex2dCritical,
        EscapeExample::Ex2dSmallSupport,
        EscapeExample::Ex3d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EscapeExample::Ex1d => "ex1d",
            EscapeExample::Ex2dCritical => "ex2d_critical",
            EscapeExample::Ex2dSmallSupport => "ex2d_small_support",
            EscapeExample::Ex3d => "ex3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|e| e.name() == s)
    }

    /// Default size parameter: `ε`, or `d_g` for the small-support example.
    pub fn default_epsilon(&self) -> f64 {
        match self {
            EscapeExample::Ex1d | EscapeExample::Ex3d => 0.02,
            EscapeExample::Ex2dCritical => 0.25,
            EscapeExample::Ex2dSmallSupport => 0.5,
        }
    }

    /// The data of the example.
    pub fn setup(&self, epsilon: f64) -> Result<ProblemSetup> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(
                "escape_experiment",
                format!("epsilon {epsilon} must be positive"),
            ));
        }
        let (n, f, g) = match self {
            EscapeExample::Ex1d => (1, Some(Bump::mollifier(vec![0.0], epsilon)), None),
            EscapeExample::Ex2dCritical => (2, None, Some(Bump::new(vec![0.0; 2], epsilon, 1.0))),
            EscapeExample::Ex2dSmallSupport => {
                (2, None, Some(Bump::new(vec![0.0; 2], 0.5 * epsilon, 1.0)))
            }
            EscapeExample::Ex3d => (3, None, Some(Bump::mollifier(vec![0.0; 3], epsilon))),
        };
        let datum = |b: Option<Bump>| b.map_or(Ok(BumpSum::zero(n)), |b| BumpSum::new(n, vec![b]));
        ProblemSetup::new(datum(f)?, datum(g)?)
    }
}

/// Radial profile probe of the critical-ring example at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingProbe {
    pub t: f64,
    /// `√(t² − s_*²) + ε`.
    pub inner_radius: f64,
    /// Local maximizer of `ρ ↦ u(ρ e_1, t)` on `(inner_radius, t + ε)`.
    pub ring_radius: f64,
    pub ring_value: f64,
    /// `u` at `inner_radius` and at `(1 + δ)·inner_radius`.
    pub inner_value: f64,
    pub pushed_value: f64,
    /// Global maximizer of the radial profile on `[0, t + ε]`.
    pub global_radius: f64,
    pub confirmed: bool,
}

/// Outcome of one escape construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeReport {
    pub example: EscapeExample,
    pub epsilon: f64,
    pub t: f64,
    pub witness_points: Vec<Point>,
    /// Smallest `u` over the witness points.
    pub witness_min: f64,
    /// Largest `u` over `CS(h)`.
    pub hull_max: f64,
    pub hull_argmax: Point,
    pub rings: Vec<RingProbe>,
    pub escape_confirmed: bool,
}

/// Largest `u(·, t)` over `CS(h)`: dense sample, then ascent kept inside the hull.
pub fn hull_maximum(
    engine: &Engine,
    setup: &ProblemSetup,
    t: f64,
    per_axis: usize,
) -> Result<(Point, f64)> {
    let hull = &setup.hull_h;
    let mut probes = hull_probes(hull, per_axis);
    probes.extend(boundary_points(hull, setup.dim()));
    let values = probes
        .par_iter()
        .map(|x| engine.solve_u(setup, x, t))
        .collect::<Result<Vec<f64>>>()?;
    let (i, _) = values
        .iter()
        .copied()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |b, (i, v)| if v > b.1 { (i, v) } else { b },
        );
    let spacing = setup.d_h / (per_axis.max(2) - 1) as f64;
    let best = climb(
        &|x: &[f64]| engine.value_grad_u(setup, x, t),
        &|x: &[f64]| hull.contains(x),
        &probes[i],
        spacing,
        0.0,
        20,
    )?;
    Ok((best.x, best.value.max(values[i])))
}

/// Run one escape construction at `t_probe` (example default if `None`).
pub fn escape_experiment(
    engine: &Engine,
    example: EscapeExample,
    epsilon: Option<f64>,
    t_probe: Option<f64>,
) -> Result<EscapeReport> {
    let eps = epsilon.unwrap_or(example.default_epsilon());
    let setup = example.setup(eps)?;
    let s_star = s_star();
    let bad_time = |range: String| {
        Error::invalid(
            "escape_experiment",
            format!("t_probe outside the admissible range {range}"),
        )
    };
    let mut rings = Vec::new();
    let (t, witnesses): (f64, Vec<Point>) = match example {
        EscapeExample::Ex1d => {
            let t = t_probe.unwrap_or(4.0 * eps);
            if t < 4.0 * eps {
                return Err(bad_time(format!("[{}, ∞)", 4.0 * eps)));
            }
            let side = (0..=10).map(|k| t - eps + 0.2 * eps * k as f64);
            let pts = side.flat_map(|x| [vec![x], vec![-x]]).collect();
            (t, pts)
        }
        EscapeExample::Ex3d => {
            let t = t_probe.unwrap_or(4.0 * eps);
            if t <= 2.0 * eps {
                return Err(bad_time(format!("({}, ∞)", 2.0 * eps)));
            }
            let pts = probe_directions(3)
                .into_iter()
                .flat_map(|d| {
                    let neg: Point = d.iter().map(|v| -v * t).collect();
                    [d.iter().map(|v| v * t).collect(), neg]
                })
                .collect();
            (t, pts)
        }
        EscapeExample::Ex2dSmallSupport => {
            let d_g = eps;
            if 2.0 * d_g >= s_star {
                return Err(Error::invalid(
                    "escape_experiment",
                    format!("need 2 d_g < s_* = {s_star:.5}, got d_g = {d_g}"),
                ));
            }
            let t = t_probe.unwrap_or(1.5);
            if t < 2.0 * d_g || t > s_star {
                return Err(bad_time(format!("[{}, {s_star:.5}]", 2.0 * d_g)));
            }
            // Farthest support point at distance t, nearest at t − d_g.
            let r = t - 0.5 * d_g;
            let pts = (0..8)
                .map(|k| {
                    let a = std::f64::consts::TAU * k as f64 / 8.0;
                    vec![r * a.cos(), r * a.sin()]
                })
                .collect();
            (t, pts)
        }
        EscapeExample::Ex2dCritical => {
            if 2.0 * eps >= s_star {
                return Err(Error::invalid(
                    "escape_experiment",
                    format!("need 2ε < s_* = {s_star:.5}, got ε = {eps}"),
                ));
            }
            let upper = (s_star * s_star + 4.0 * eps * eps) / (4.0 * eps);
            let times: Vec<f64> = match t_probe {
                Some(t) if t < s_star || t > upper => {
                    return Err(bad_time(format!("[{s_star:.5}, {upper:.5}]")));
                }
                Some(t) => vec![t],
                None => [0.0, 0.25, 0.5, 0.75, 0.95]
                    .iter()
                    .map(|q| s_star + q * (upper - s_star))
                    .collect(),
            };
            for &t in &times {
                rings.push(ring_probe(engine, &setup, t, eps, s_star)?);
            }
            let r = rings[0].ring_radius;
            (times[0], vec![vec![r, 0.0]])
        }
    };
    let witness_values = witnesses
        .par_iter()
        .map(|x| engine.solve_u(&setup, x, t))
        .collect::<Result<Vec<f64>>>()?;
    let witness_min = witness_values.iter().copied().fold(f64::INFINITY, f64::min);
    let per_axis = match setup.dim() {
        1 => 201,
        2 => 21,
        _ => 11,
    };
    let (hull_argmax, hull_max) = hull_maximum(engine, &setup, t, per_axis)?;
    let escape_confirmed = match example {
        EscapeExample::Ex2dCritical => rings.iter().all(|r| r.confirmed),
        _ => witness_min > hull_max && witnesses.iter().all(|w| !setup.hull_h.contains(w)),
    };
    Ok(EscapeReport {
        example,
        epsilon: eps,
        t,
        witness_points: witnesses,
        witness_min,
        hull_max,
        hull_argmax,
        rings,
        escape_confirmed,
    })
}

/// Scan `ρ ↦ u(ρ e_1, t)` for a local maximum beyond `√(t² − s_*²) + ε`.
fn ring_probe(
    engine: &Engine,
    setup: &ProblemSetup,
    t: f64,
    eps: f64,
    s_star: f64,
) -> Result<RingProbe> {
    let radial = |rho: f64| engine.solve_u(setup, &[rho, 0.0], t);
    let inner = (t * t - s_star * s_star).max(0.0).sqrt() + eps;
    let outer = t + eps;
    let delta = (t - (t * t - s_star * s_star).max(0.0).sqrt() - 2.0 * eps) / 2.0 / inner;
    let samples = 240;
    let radii: Vec<f64> = (0..=samples)
        .map(|k| inner + (outer - inner) * k as f64 / samples as f64)
        .collect();
    let values = radii
        .par_iter()
        .map(|&r| radial(r))
        .collect::<Result<Vec<f64>>>()?;
    let k = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    let (ring_radius, ring_value) = if k > 0 && k < samples {
        golden_max(&radial, radii[k - 1], radii[k + 1])?
    } else {
        (radii[k], values[k])
    };
    let inner_value = values[0];
    let pushed_value = radial((1.0 + delta) * inner)?;
    // Global radial maximizer on [0, t + ε].
    let full: Vec<f64> = (0..=samples)
        .map(|k| outer * k as f64 / samples as f64)
        .collect();
    let full_values = full
        .par_iter()
        .map(|&r| radial(r))
        .collect::<Result<Vec<f64>>>()?;
    let g = full_values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > full_values[b] { i } else { b });
    let confirmed = k > 0 && k < samples && ring_radius > inner && ring_value > inner_value;
    Ok(RingProbe {
        t,
        inner_radius: inner,
        ring_radius,
        ring_value,
        inner_value,
        pushed_value,
        global_radius: full[g],
        confirmed,
    })
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
fn golden_max(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-10 * (1.0 + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

#[cfg(test)]
mod tests;
