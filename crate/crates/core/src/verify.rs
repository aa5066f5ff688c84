//! Independent checks of the solution: a finite-difference oracle, the
//! PDE residual, and decay-rate fits.

use crate::initdata::{BumpSum, Point, ProblemSetup};
use crate::pde::Engine;
use crate::quadrature::AxisBox;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Grid and time step of the leapfrog oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FDConfig {
    pub domain: AxisBox,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Extra padding beyond the light cone of the data.
    pub margin: f64,
}

/// Largest stable `dt/dx` ratio used by [`FDConfig::for_setup`].
pub const CFL: f64 = 0.9;

impl FDConfig {
    /// A domain padded past the light cone of the data and a time step at
    /// `0.9` of the stability limit that lands exactly on `t_final`.
    pub fn for_setup(setup: &ProblemSetup, dx: f64, t_final: f64) -> Result<Self> {
        let n = setup.dim();
        if !(1..=2).contains(&n) {
            return Err(Error::invalid(
                "FDConfig",
                format!("finite differences support dimensions 1 and 2, got {n}"),
            ));
        }
        if !(dx > 0.0) || !(t_final > 0.0) {
            return Err(Error::invalid(
                "FDConfig",
                "dx and t_final must be positive",
            ));
        }
        // Leapfrog signals outrun the unit speed by up to 1/CFL.
        let margin = t_final * (1.0 / CFL - 1.0) + 0.25 + 8.0 * dx;
        let mut domain = setup.hull_h.bounding_box(t_final + margin);
        for (lo, hi) in domain.lo.iter_mut().zip(domain.hi.iter_mut()) {
            *lo = (*lo / dx).floor() * dx;
            *hi = (*hi / dx).ceil() * dx;
        }
        let limit = CFL * dx / (n as f64).sqrt();
        let steps = (t_final / limit).ceil().max(1.0);
        let cfg = FDConfig {
            domain,
            dx,
            dt: t_final / steps,
            t_final,
            margin,
        };
        cfg.validate(n)?;
        Ok(cfg)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.domain.lo.len() != n || self.domain.hi.len() != n {
            return Err(Error::invalid(
                "FDConfig",
                "domain dimension differs from the data",
            ));
        }
        if !(self.dx > 0.0 && self.dt > 0.0 && self.t_final > 0.0) {
            return Err(Error::invalid(
                "FDConfig",
                "dx, dt and t_final must be positive",
            ));
        }
        let limit = CFL * self.dx / (n as f64).sqrt();
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "FDConfig",
                format!("CFL violated: dt = {} exceeds {limit}", self.dt),
            ));
        }
        Ok(())
    }

    fn shape(&self) -> Vec<usize> {
        self.domain
            .lo
            .iter()
            .zip(&self.domain.hi)
            .map(|(a, b)| ((b - a) / self.dx).round() as usize + 1)
            .collect()
    }
}

/// Snapshots of the leapfrog solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSolution {
    pub config: FDConfig,
    /// Nodes per axis, row-major with the last axis fastest.
    pub shape: Vec<usize>,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
}

impl FdSolution {
    /// Multilinear interpolation of the snapshot at `times[k]`.
    pub fn interpolate(&self, k: usize, x: &[f64]) -> Result<f64> {
        let u = &self.snapshots[k];
        let dx = self.config.dx;
        let n = self.shape.len();
        let mut base = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for i in 0..n {
            let s = (x[i] - self.config.domain.lo[i]) / dx;
            if !(s >= 0.0) || s > (self.shape[i] - 1) as f64 {
                return Err(Error::domain(
                    "fd_interpolate",
                    format!("point {x:?} outside the grid"),
                ));
            }
            let j = (s.floor() as usize).min(self.shape[i] - 2);
            base.push(j);
            frac.push(s - j as f64);
        }
        let mut v = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = 0;
            for i in 0..n {
                let bit = (corner >> i) & 1;
                w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
                idx = idx * self.shape[i] + base[i] + bit;
            }
            v += w * u[idx];
        }
        Ok(v)
    }
}

fn sample_grid(datum: &BumpSum, cfg: &FDConfig, shape: &[usize]) -> Vec<f64> {
    let count: usize = shape.iter().product();
    (0..count)
        .into_par_iter()
        .map(|i| datum.eval(&crate::pde::grid_node(&cfg.domain, shape, i)))
        .collect()
}

/// Five-point (or three-point) Laplacian; zero on the boundary layer.
fn laplacian(u: &[f64], shape: &[usize], dx: f64, out: &mut [f64]) {
    let inv = 1.0 / (dx * dx);
    match shape.len() {
        1 => {
            let m = shape[0];
            out[0] = 0.0;
            out[m - 1] = 0.0;
            for i in 1..m - 1 {
                out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv;
            }
        }
        _ => {
            let (rows, cols) = (shape[0], shape[1]);
            out.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
                if r == 0 || r == rows - 1 {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                row[0] = 0.0;
                row[cols - 1] = 0.0;
                for c in 1..cols - 1 {
                    let i = r * cols + c;
                    row[c] = (u[i - 1] + u[i + 1] + u[i - cols] + u[i + cols] - 4.0 * u[i]) * inv;
                }
            });
        }
    }
}

/// Largest `|u|` within two cells of the boundary.
fn boundary_signal(u: &[f64], shape: &[usize]) -> f64 {
    match shape.len() {
        1 => {
            let m = shape[0];
            [0, 1, m - 2, m - 1]
                .iter()
                .map(|&i| u[i].abs())
                .fold(0.0, f64::max)
        }
        _ => {
            let (rows, cols) = (shape[0], shape[1]);
            let mut m: f64 = 0.0;
            for r in 0..rows {
                for c in 0..cols {
                    if r < 2 || c < 2 || r + 2 >= rows || c + 2 >= cols {
                        m = m.max(u[r * cols + c].abs());
                    }
                }
            }
            m
        }
    }
}

/// Explicit leapfrog solution of `u_tt − Δu + u_t = 0` with `u(0) = f`,
/// `u_t(0) = g`, recorded at every step index in `record` (plus the last).
pub fn fd_solve(setup: &ProblemSetup, cfg: &FDConfig, record_every: usize) -> Result<FdSolution> {
    let n = setup.dim();
    if !(1..=2).contains(&n) {
        return Err(Error::invalid(
            "fd_solve",
            format!("finite differences support dimensions 1 and 2, got {n}"),
        ));
    }
    cfg.validate(n)?;
    let shape = cfg.shape();
    if shape.iter().any(|&m| m < 5) {
        return Err(Error::invalid(
            "fd_solve",
            "grid needs at least 5 nodes per axis",
        ));
    }
    let size: usize = shape.iter().product();
    let steps = (cfg.t_final / cfg.dt).round() as usize;
    let (dt, dx) = (cfg.dt, cfg.dx);
    let f = sample_grid(&setup.f, cfg, &shape);
    let g = sample_grid(&setup.g, cfg, &shape);
    let scale = f
        .iter()
        .chain(&g)
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut lap = vec![0.0; size];
    laplacian(&f, &shape, dx, &mut lap);
    let mut prev = f.clone();
    let mut cur: Vec<f64> = (0..size)
        .map(|i| f[i] + dt * g[i] + 0.5 * dt * dt * (lap[i] - g[i]))
        .collect();
    let mut times = vec![0.0];
    let mut snapshots = vec![f];
    let every = record_every.max(1);
    if steps == 1 || every == 1 {
        times.push(dt);
        snapshots.push(cur.clone());
    }
    let a = 1.0 / (dt * dt) + 0.5 / dt;
    let mut next = vec![0.0; size];
    for k in 1..steps {
        laplacian(&cur, &shape, dx, &mut lap);
        next.par_iter_mut().enumerate().for_each(|(i, v)| {
            *v = ((2.0 * cur[i] - prev[i]) / (dt * dt) + lap[i] + prev[i] * 0.5 / dt) / a;
        });
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        let step = k + 1;
        if boundary_signal(&cur, &shape) > 1e-12 * scale {
            return Err(Error::tolerance(
                "fd_solve",
                format!("signal reached the boundary at t = {}", step as f64 * dt),
            ));
        }
        if step % every == 0 || step == steps {
            times.push(step as f64 * dt);
            snapshots.push(cur.clone());
        }
    }
    Ok(FdSolution {
        config: cfg.clone(),
        shape,
        times,
        snapshots,
    })
}

/// Deterministic probe points in the box of `CS(h) + radius·B`.
pub fn probe_points(setup: &ProblemSetup, radius: f64, count: usize, seed: u64) -> Vec<Point> {
    let b = setup.hull_h.bounding_box(radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            b.lo.iter()
                .zip(&b.hi)
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect()
        })
        .collect()
}

/// `max |fd_solve − solve_u|` over `probes` at time `t`.
pub fn compare_oracle(
    engine: &Engine,
    setup: &ProblemSetup,
    t: f64,
    dx: f64,
    probes: &[Point],
) -> Result<f64> {
    let cfg = FDConfig::for_setup(setup, dx, t)?;
    let sol = fd_solve(setup, &cfg, usize::MAX)?;
    let last = sol.times.len() - 1;
    probes
        .par_iter()
        .map(|x| Ok((sol.interpolate(last, x)? - engine.solve_u(setup, x, t)?).abs()))
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max))
}

/// `u_tt − Δu + u_t` at `(x, t)` by central differences of step `step`.
pub fn pde_residual(
    engine: &Engine,
    setup: &ProblemSetup,
    x: &[f64],
    t: f64,
    step: f64,
) -> Result<f64> {
    if !(t > 2.0 * step) || !(step > 0.0) {
        return Err(Error::domain(
            "pde_residual",
            format!("need t > 2·step > 0, got t = {t}, step = {step}"),
        ));
    }
    let u = |y: &[f64], s: f64| engine.solve_u(setup, y, s);
    let u0 = u(x, t)?;
    let (up, um) = (u(x, t + step)?, u(x, t - step)?);
    let mut lap = 0.0;
    for i in 0..x.len() {
        let mut y = x.to_vec();
        y[i] += step;
        let a = u(&y, t)?;
        y[i] -= 2.0 * step;
        let b = u(&y, t)?;
        lap += (a - 2.0 * u0 + b) / (step * step);
    }
    Ok((up - 2.0 * u0 + um) / (step * step) - lap + (up - um) / (2.0 * step))
}

/// Norms whose large-time decay is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayQuantity {
    /// `‖J_n(t) h‖`.
    HeatPart,
    /// `‖J_n(t) h − P_n(t) h‖`.
    HeatPartMinusHeat,
    /// `‖J̃_n(t) f‖`.
    TildeHeatPart,
    /// `‖u − P_n(t) h − e^{-t/2} W̃_n(t; f, g)‖`.
    FullDifference,
}

impl DecayQuantity {
    pub const ALL: [DecayQuantity; 4] = [
        DecayQuantity::HeatPart,
        DecayQuantity::HeatPartMinusHeat,
        DecayQuantity::TildeHeatPart,
        DecayQuantity::FullDifference,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DecayQuantity::HeatPart => "heat_part",
            DecayQuantity::HeatPartMinusHeat => "heat_part_minus_heat",
            DecayQuantity::TildeHeatPart => "tilde_heat_part",
            DecayQuantity::FullDifference => "full_difference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|q| q.name() == s)
    }

    /// Expected `L^∞` decay exponent for `L¹` data in dimension `n`.
    pub fn target_slope(&self, n: usize) -> f64 {
        let half = 0.5 * n as f64;
        match self {
            DecayQuantity::HeatPart => -half,
            _ => -half - 1.0,
        }
    }

    fn eval(&self, engine: &Engine, setup: &ProblemSetup, x: &[f64], t: f64) -> Result<f64> {
        match self {
            DecayQuantity::HeatPart => engine.heat_part_j(&setup.h, x, t),
            DecayQuantity::HeatPartMinusHeat => {
                Ok(engine.heat_part_j(&setup.h, x, t)? - engine.heat(&setup.h, x, t)?)
            }
            DecayQuantity::TildeHeatPart => engine.tilde_j(&setup.f, x, t),
            DecayQuantity::FullDifference => engine.diffusion_remainder(setup, x, t),
        }
    }
}

/// Log-log least-squares fit of a norm against time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub quantity: String,
    pub dim: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest value on the boundary of the sampled box, per time. The
    /// profiles decay outward, so this bounds the exterior contribution.
    pub exterior_bounds: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub target_slope: f64,
}

/// Slope, intercept and largest residual of `log v = a + b log t`, with at
/// least four positive samples spanning a decade.
pub fn fit_log_log(times: &[f64], values: &[f64]) -> Result<(f64, f64, f64)> {
    let usable: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if usable.len() < 4 {
        return Err(Error::tolerance(
            "decay_fit",
            format!("only {} usable samples, need 4", usable.len()),
        ));
    }
    let span = usable.last().unwrap().0 - usable[0].0;
    if span < 10f64.ln() - 1e-12 {
        return Err(Error::tolerance(
            "decay_fit",
            "sample times must span at least one decade",
        ));
    }
    Ok(least_squares(&usable))
}

/// Unchecked least-squares line through `(x, y)` pairs.
pub fn least_squares(usable: &[(f64, f64)]) -> (f64, f64, f64) {
    let m = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = usable
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    (slope, intercept, max_residual)
}

/// Grid nodes per axis used for the sup-norm estimate.
pub fn decay_resolution(n: usize) -> usize {
    match n {
        1 => 201,
        2 => 31,
        _ => 9,
    }
}

/// `sup |q(·, t)|` over the box of `CS(h) + t^φ B`, polished by a pattern
/// search from the best node, together with the largest value on the box
/// boundary as evidence for the exterior contribution.
fn sup_norm(
    engine: &Engine,
    setup: &ProblemSetup,
    quantity: DecayQuantity,
    t: f64,
    phi_exponent: f64,
) -> Result<(f64, f64)> {
    let n = setup.dim();
    let reach = t.powf(phi_exponent);
    let bounds = setup.hull_h.bounding_box(reach);
    let res = decay_resolution(n);
    let count = res.pow(n as u32);
    let shape = vec![res; n];
    let values = (0..count)
        .into_par_iter()
        .map(|i| {
            let x = crate::pde::grid_node(&bounds, &shape, i);
            quantity.eval(engine, setup, &x, t).map(f64::abs)
        })
        .collect::<Result<Vec<f64>>>()?;
    let on_boundary = |mut i: usize| {
        (0..n).any(|_| {
            let k = i % res;
            i /= res;
            k == 0 || k == res - 1
        })
    };
    let edge = values
        .iter()
        .enumerate()
        .filter(|(i, _)| on_boundary(*i))
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let (best, mut top) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |b, (i, v)| if v > b.1 { (i, v) } else { b });
    let mut x = crate::pde::grid_node(&bounds, &shape, best);
    let mut h = (bounds.hi[0] - bounds.lo[0]) / (res - 1) as f64;
    for _ in 0..24 {
        let mut moved = false;
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += s * h;
                let v = quantity.eval(engine, setup, &y, t)?.abs();
                if v > top {
                    top = v;
                    x = y;
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    Ok((top, edge))
}

/// Fit the `L^∞` decay of `quantity` over `times`.
pub fn decay_fit(
    engine: &Engine,
    setup: &ProblemSetup,
    quantity: DecayQuantity,
    times: &[f64],
    phi_exponent: f64,
) -> Result<DecayFit> {
    if quantity == DecayQuantity::TildeHeatPart && setup.f.is_zero() {
        return Err(Error::invalid("decay_fit", "the J̃ norm needs f ≠ 0"));
    }
    if !(0.5 < phi_exponent && phi_exponent < 1.0) {
        return Err(Error::invalid(
            "decay_fit",
            format!("phi_exponent {phi_exponent} must lie in (1/2, 1)"),
        ));
    }
    let n = setup.dim();
    let mut values = Vec::with_capacity(times.len());
    let mut exterior_bounds = Vec::with_capacity(times.len());
    for &t in times {
        let (v, edge) = sup_norm(engine, setup, quantity, t, phi_exponent)?;
        log::debug!("{} at t = {t}: {v:.6e} (edge {edge:.3e})", quantity.name());
        values.push(v);
        exterior_bounds.push(edge);
    }
    let (slope, intercept, max_residual) = fit_log_log(times, &values)?;
    Ok(DecayFit {
        quantity: quantity.name().to_string(),
        dim: n,
        times: times.to_vec(),
        values,
        exterior_bounds,
        slope,
        intercept,
        max_residual,
        target_slope: quantity.target_slope(n),
    })
}

#[cfg(test)]
mod tests;
