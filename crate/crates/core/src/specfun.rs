//! Modified Bessel functions `I_ν`, the kernel families `k_ℓ`, and the
//! centroid-seeking weight `E_n(r, t)`.
//!
//! Two kernel families appear in the heat part of the damped wave solution:
//!
//! - odd family: `k_ℓ(s) = I_ℓ(s)/s^ℓ = 2^{-ℓ} Σ_j (s/2)^{2j} / (j! (j+ℓ)!)`
//! - even family: `k_ℓ(s) = Σ_j s^{2j+1} / ((2(j+ℓ))!! (2j+1)!!)`
//!
//! Order 0 of the even family is `sinh s`, which makes the recursion
//! `k_{ℓ+1} = (k_ℓ' − k_ℓ'(0))/s` start cleanly at `k_1 = (cosh s − 1)/s`.
//!
//! Every kernel grows like `e^s`, while callers multiply by `e^{-t/2}` with
//! `t/2 ≥ s`. [`kernel_k_scaled`] evaluates such products without forming
//! either factor on its own.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_10, PI};
use std::sync::OnceLock;

/// Argument at which scaled evaluation switches from series to expansions.
pub const SERIES_SWITCH: f64 = 30.0;
/// Largest argument for which unscaled kernels are summed as series.
const PLAIN_SERIES_MAX_S: f64 = 100.0;
const SERIES_REL_STOP: f64 = 1e-17;
const SERIES_MAX_TERMS: usize = 200;
const ASYMPTOTIC_REL_STOP: f64 = 1e-12;
const ASYMPTOTIC_MAX_TERMS: usize = 60;
const FACTORIAL_TABLE_LEN: usize = 61;
/// Orders of the even family with precomputed closed-form coefficients.
const EVEN_CLOSED_FORM_MAX_ORDER: usize = 24;

/// Selects one of the two kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// `k_ℓ(s) = I_ℓ(s)/s^ℓ`, used in odd dimensions.
    OddSeries,
    /// The cosh-derived series, used in even dimensions.
    EvenSeries,
}

/// A kernel `k_ℓ` of one family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelId {
    pub family: Family,
    pub order: u32,
}

impl KernelId {
    pub const fn odd(order: u32) -> Self {
        KernelId {
            family: Family::OddSeries,
            order,
        }
    }

    pub const fn even(order: u32) -> Self {
        KernelId {
            family: Family::EvenSeries,
            order,
        }
    }

    /// The kernel one order higher in the same family.
    pub const fn raised(self, by: u32) -> Self {
        KernelId {
            family: self.family,
            order: self.order + by,
        }
    }
}

/// A real number stored as `mantissa · exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledValue {
    pub mantissa: f64,
    pub log_scale: f64,
}

impl ScaledValue {
    /// Builds a normalized value with `0.1 ≤ |mantissa| < 10` (or zero).
    pub fn new(mantissa: f64, log_scale: f64) -> Self {
        if mantissa == 0.0 || !mantissa.is_finite() {
            return ScaledValue {
                mantissa,
                log_scale: if mantissa == 0.0 { 0.0 } else { log_scale },
            };
        }
        let k = mantissa.abs().log10().floor();
        ScaledValue {
            mantissa: mantissa / 10f64.powf(k),
            log_scale: log_scale + k * LN_10,
        }
    }

    /// The represented number; may overflow to infinity or underflow to zero.
    pub fn value(&self) -> f64 {
        self.mantissa * self.log_scale.exp()
    }

    /// Natural log of the absolute value.
    pub fn ln_abs(&self) -> f64 {
        self.mantissa.abs().ln() + self.log_scale
    }
}

fn factorial_table() -> &'static [f64; FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<[f64; FACTORIAL_TABLE_LEN]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [1.0; FACTORIAL_TABLE_LEN];
        for i in 1..FACTORIAL_TABLE_LEN {
            t[i] = t[i - 1] * i as f64;
        }
        t
    })
}

/// `n!` as a real; table lookup up to 60, log-gamma beyond.
pub fn factorial(n: u32) -> f64 {
    let n = n as usize;
    if n < FACTORIAL_TABLE_LEN {
        factorial_table()[n]
    } else {
        ln_factorial(n as u32).exp()
    }
}

/// `ln n!`.
pub fn ln_factorial(n: u32) -> f64 {
    if (n as usize) < FACTORIAL_TABLE_LEN {
        factorial_table()[n as usize].ln()
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// The constant `c_n` multiplying the heat part in dimension `n`.
pub fn c_n(n: u32) -> f64 {
    assert!(n >= 1, "dimension must be positive");
    let nf = n as f64;
    if n == 1 {
        1.0
    } else if n % 2 == 1 {
        2f64.powf(-(nf + 1.0) / 2.0) * PI.powf(-(nf - 1.0) / 2.0)
    } else {
        2f64.powf(-(nf + 2.0) / 2.0) * PI.powf(-nf / 2.0)
    }
}

/// Sums a positive series given its first term and the ratio of consecutive
/// terms, stopping once a term falls below `1e-17` of the running sum.
fn positive_series(term0: f64, ratio: impl Fn(usize) -> f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut term = term0;
    for j in 0..SERIES_MAX_TERMS {
        sum += term;
        let q = ratio(j);
        if term <= SERIES_REL_STOP * sum && q < 1.0 {
            return Some(sum);
        }
        term *= q;
        if term == 0.0 {
            return Some(sum);
        }
    }
    None
}

fn bessel_series(nu: u32, s: f64, shift: f64) -> Option<f64> {
    if s == 0.0 {
        return Some(if nu == 0 { (-shift).exp() } else { 0.0 });
    }
    let half = 0.5 * s;
    let term0 = if shift < 600.0 && nu < 60 {
        half.powi(nu as i32) / factorial(nu) * (-shift).exp()
    } else {
        (nu as f64 * half.ln() - ln_factorial(nu) - shift).exp()
    };
    let nuf = nu as f64;
    positive_series(term0, |j| {
        let j = j as f64;
        half * half / ((j + 1.0) * (j + 1.0 + nuf))
    })
}

/// `√(2πs) e^{-s} I_ν(s)` from the large-argument expansion, or `None` when
/// the expansion cannot reach the truncation target.
fn bessel_asymptotic_sum(nu: u32, s: f64) -> Option<f64> {
    let mu = 4.0 * (nu as f64).powi(2);
    let mut sum = 1.0f64;
    let mut term = 1.0f64;
    for k in 1..=ASYMPTOTIC_MAX_TERMS {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * kf * s);
        if next.abs() < ASYMPTOTIC_REL_STOP * sum.abs() {
            return Some(sum + next);
        }
        if k > 2 * nu as usize + 2 && next.abs() > term.abs() {
            return None;
        }
        sum += next;
        term = next;
    }
    None
}

fn bessel_scaled_internal(nu: u32, s: f64) -> f64 {
    if s < SERIES_SWITCH {
        if let Some(v) = bessel_series(nu, s, s) {
            return v;
        }
    } else if let Some(v) = bessel_asymptotic_sum(nu, s) {
        return v / (2.0 * PI * s).sqrt();
    }
    bessel_series(nu, s, s).unwrap_or(f64::NAN)
}

/// `I_ν(s)` by its power series.
///
/// Arguments above 700 overflow and are rejected; use [`bessel_i_scaled`].
pub fn bessel_i(nu: u32, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::domain(
            "bessel_i",
            format!("argument {s} is negative"),
        ));
    }
    if s > 700.0 {
        return Err(Error::domain(
            "bessel_i",
            format!("argument {s} overflows; use the scaled form"),
        ));
    }
    bessel_series(nu, s, 0.0)
        .ok_or_else(|| Error::tolerance("bessel_i", format!("series did not converge at s = {s}")))
}

/// `e^{-s} I_ν(s)`: scaled series below 30, large-argument expansion above.
pub fn bessel_i_scaled(nu: u32, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::domain(
            "bessel_i_scaled",
            format!("argument {s} is negative"),
        ));
    }
    let v = bessel_scaled_internal(nu, s);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::tolerance(
            "bessel_i_scaled",
            format!("no convergent representation at nu = {nu}, s = {s}"),
        ))
    }
}

/// `k_ℓ(0)`: `1/(2^ℓ ℓ!)` for the odd family, 0 for the even family.
pub fn kernel_at_zero(id: KernelId) -> f64 {
    match id.family {
        Family::OddSeries => 1.0 / (2f64.powi(id.order as i32) * factorial(id.order)),
        Family::EvenSeries => 0.0,
    }
}

/// `k_ℓ'(0)`: 0 for the odd family, `1/(2^ℓ ℓ!)` for the even family.
pub fn kernel_deriv_at_zero(id: KernelId) -> f64 {
    match id.family {
        Family::OddSeries => 0.0,
        Family::EvenSeries => 1.0 / (2f64.powi(id.order as i32) * factorial(id.order)),
    }
}

fn kernel_series(id: KernelId, s: f64) -> Option<f64> {
    let l = id.order as f64;
    match id.family {
        Family::OddSeries => {
            let q = 0.25 * s * s;
            positive_series(kernel_at_zero(id), |j| {
                let j = j as f64;
                q / ((j + 1.0) * (j + 1.0 + l))
            })
        }
        Family::EvenSeries => {
            if s == 0.0 {
                return Some(0.0);
            }
            let q = s * s;
            positive_series(s * kernel_deriv_at_zero(id), |j| {
                let j = j as f64;
                q / ((2.0 * j + 2.0 * l + 2.0) * (2.0 * j + 3.0))
            })
        }
    }
}

fn kernel_deriv_series(id: KernelId, s: f64) -> Option<f64> {
    let l = id.order as f64;
    match id.family {
        Family::OddSeries => {
            if s == 0.0 {
                return Some(0.0);
            }
            let half = 0.5 * s;
            let term0 = half / (2f64.powi(id.order as i32) * factorial(id.order + 1));
            positive_series(term0, |j| {
                let j = j as f64 + 1.0;
                half * half / (j * (j + l + 1.0))
            })
        }
        Family::EvenSeries => {
            let q = s * s;
            positive_series(kernel_deriv_at_zero(id), |j| {
                let j = j as f64;
                q / ((2.0 * j + 2.0 * l + 2.0) * (2.0 * j + 1.0))
            })
        }
    }
}

/// Coefficients of the terminating closed form
/// `k_ℓ(s) = e^s A_ℓ(s) + e^{-s} B_ℓ(s) + C_ℓ(s)` of the even family, with
/// `A_ℓ = ½ Σ_k α_k s^{-ℓ-k}`, `B_ℓ = ½ Σ_k β_k s^{-ℓ-k}`, `C_ℓ = Σ_k γ_k s^{-k}`.
#[derive(Debug, Clone)]
struct EvenClosedForm {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    gamma: Vec<f64>,
}

fn even_closed_forms() -> &'static [EvenClosedForm] {
    static TABLE: OnceLock<Vec<EvenClosedForm>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // k_0 = sinh s.
        let mut forms = vec![EvenClosedForm {
            alpha: vec![1.0],
            beta: vec![-1.0],
            gamma: vec![],
        }];
        for l in 0..EVEN_CLOSED_FORM_MAX_ORDER {
            let prev = &forms[l];
            let lf = l as f64;
            let step = |c: &[f64], sign: f64| -> Vec<f64> {
                let mut out = vec![0.0; c.len() + 1];
                for k in 0..out.len() {
                    let own = c.get(k).copied().unwrap_or(0.0);
                    let lower = if k > 0 { c[k - 1] } else { 0.0 };
                    out[k] = sign * own - (lf + k as f64 - 1.0) * lower;
                }
                out
            };
            let alpha = step(&prev.alpha, 1.0);
            let beta = step(&prev.beta, -1.0);
            let mut gamma = vec![0.0; prev.gamma.len().max(1) + 2];
            gamma[1] = -kernel_deriv_at_zero(KernelId::even(l as u32));
            for (k, g) in prev.gamma.iter().enumerate() {
                gamma[k + 2] -= k as f64 * g;
            }
            forms.push(EvenClosedForm { alpha, beta, gamma });
        }
        forms
    })
}

fn inverse_power_sum(coeffs: &[f64], inv_s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * inv_s + c)
}

/// `e^{-shift} k_ℓ(s)` for the even family from the closed form.
fn even_closed_form_scaled(order: u32, s: f64, shift: f64) -> Option<f64> {
    let form = even_closed_forms().get(order as usize)?;
    let inv = 1.0 / s;
    let lead = inv.powi(order as i32);
    let a = 0.5 * lead * inverse_power_sum(&form.alpha, inv);
    let b = 0.5 * lead * inverse_power_sum(&form.beta, inv);
    let c = inverse_power_sum(&form.gamma, inv);
    Some((s - shift).exp() * a + (-s - shift).exp() * b + (-shift).exp() * c)
}

/// Unchecked scaled kernel for inner loops; callers guarantee `0 ≤ s ≤ shift + 1e-9`.
pub(crate) fn scaled_kernel(id: KernelId, s: f64, shift: f64) -> f64 {
    if s < SERIES_SWITCH {
        let v = kernel_series(id, s).unwrap_or(f64::NAN);
        return if shift < 600.0 || v <= 0.0 {
            v * (-shift).exp()
        } else {
            (v.ln() - shift).exp()
        };
    }
    match id.family {
        Family::OddSeries => {
            (s - shift).exp() * bessel_scaled_internal(id.order, s) / s.powi(id.order as i32)
        }
        Family::EvenSeries => even_closed_form_scaled(id.order, s, shift).unwrap_or(f64::NAN),
    }
}

/// `k_ℓ(s)` by its series; large arguments go through the scaled form.
pub fn kernel_k(id: KernelId, s: f64) -> f64 {
    debug_assert!(s >= 0.0, "kernel argument must be non-negative");
    if s <= PLAIN_SERIES_MAX_S {
        if let Some(v) = kernel_series(id, s) {
            return v;
        }
    }
    scaled_kernel(id, s, s) * s.exp()
}

/// `k_ℓ'(s)` by the term-wise differentiated series.
pub fn kernel_k_deriv(id: KernelId, s: f64) -> f64 {
    debug_assert!(s >= 0.0, "kernel argument must be non-negative");
    if s <= PLAIN_SERIES_MAX_S {
        if let Some(v) = kernel_deriv_series(id, s) {
            return v;
        }
    }
    // k_ℓ' = s k_{ℓ+1} + k_ℓ'(0) in both families.
    s * kernel_k(id.raised(1), s) + kernel_deriv_at_zero(id)
}

/// `e^{-shift} k_ℓ(s)` without overflow; requires `shift ≥ s`.
pub fn kernel_k_scaled(id: KernelId, s: f64, shift: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::domain(
            "kernel_k_scaled",
            format!("argument {s} is negative"),
        ));
    }
    if shift < s - 1e-9 {
        return Err(Error::domain(
            "kernel_k_scaled",
            format!("shift {shift} is below argument {s}"),
        ));
    }
    Ok(scaled_kernel(id, s, shift))
}

/// Large-argument expansion of `k_ℓ(s)` with `terms` correction terms.
pub fn kernel_asymptotic(id: KernelId, s: f64, terms: usize) -> Result<ScaledValue> {
    if !(s >= 10.0) {
        return Err(Error::domain(
            "kernel_asymptotic",
            format!("argument {s} is below 10"),
        ));
    }
    let l = id.order as f64;
    match id.family {
        Family::OddSeries => {
            let mu = 4.0 * l * l;
            let mut sum = 1.0;
            let mut term = 1.0;
            for k in 1..=terms {
                let kf = k as f64;
                let odd = 2.0 * kf - 1.0;
                term *= -(mu - odd * odd) / (8.0 * kf * s);
                sum += term;
            }
            Ok(ScaledValue::new(
                sum,
                s - l * s.ln() - 0.5 * (2.0 * PI * s).ln(),
            ))
        }
        Family::EvenSeries => {
            let forms = even_closed_forms();
            let form = forms.get(id.order as usize).ok_or_else(|| {
                Error::domain(
                    "kernel_asymptotic",
                    format!("even order {} exceeds table", id.order),
                )
            })?;
            let inv = 1.0 / s;
            let n = (terms + 1).min(form.alpha.len());
            let sum = inverse_power_sum(&form.alpha[..n], inv);
            Ok(ScaledValue::new(sum, s - l * s.ln() - 2f64.ln()))
        }
    }
}

/// The kernel whose scaled value times the returned prefactor gives `E_n`.
fn e_weight_kernel(n: u32) -> (KernelId, f64) {
    if n == 1 {
        (KernelId::odd(1), 0.125)
    } else if n % 2 == 1 {
        (
            KernelId::odd(n.div_ceil(2)),
            c_n(n) / 2f64.powi(n as i32 + 1),
        )
    } else {
        (KernelId::even(n / 2 + 1), c_n(n) / 2f64.powi(n as i32))
    }
}

/// Weight `E_n(r, t)` representing `∇J_n h` as a moment integral.
pub fn e_weight(n: u32, r: f64, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("e_weight", "dimension must be positive"));
    }
    if !(t > 0.0) || !(r >= 0.0) || r >= t {
        return Err(Error::domain(
            "e_weight",
            format!("need 0 ≤ r < t, got r = {r}, t = {t}"),
        ));
    }
    let s = 0.5 * ((t - r) * (t + r)).sqrt();
    let (id, pref) = e_weight_kernel(n);
    Ok(pref * scaled_kernel(id, s, 0.5 * t))
}

/// Asymptotic regime for [`e_weight_asymptotic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `√(t² − φ²)` diverges.
    General,
    /// `φ = o(t)`.
    SmallOrderT,
    /// `φ = o(√t)`.
    SmallOrderSqrtT,
}

/// Leading-order large-time form of `E_n(φ, t)`.
pub fn e_weight_asymptotic(n: u32, phi_t: f64, t: f64, regime: Regime) -> Result<ScaledValue> {
    if n == 0 || !(t > 0.0) || !(phi_t >= 0.0) || phi_t >= t {
        return Err(Error::domain(
            "e_weight_asymptotic",
            format!("need n ≥ 1 and 0 ≤ φ < t, got n = {n}, φ = {phi_t}, t = {t}"),
        ));
    }
    let nf = n as f64;
    let ln_pref = -(2f64.ln() + 0.5 * nf * (4.0 * PI).ln());
    let root = ((t - phi_t) * (t + phi_t)).sqrt();
    let exp_part = 0.5 * (root - t);
    let ln = match regime {
        Regime::General => ln_pref - (nf / 4.0 + 0.5) * 2.0 * root.ln() + exp_part,
        Regime::SmallOrderT => ln_pref - (nf / 2.0 + 1.0) * t.ln() + exp_part,
        Regime::SmallOrderSqrtT => ln_pref - (nf / 2.0 + 1.0) * t.ln(),
    };
    Ok(ScaledValue::new(1.0, ln))
}
