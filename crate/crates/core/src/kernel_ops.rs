//! Exact solution operator of the one-dimensional damped Klein–Gordon equation
//!
//! ```text
//! phi_tt - phi_xx + b phi_t + m^2 phi = F(t, x),   phi(0) = f,   phi_t(0) = g
//! ```
//!
//! With `mu = sqrt(|b^2/4 - m^2|)` the solution operator is
//!
//! ```text
//! S(t) h (x) = 1/2 e^{-bt/2} int_{x-t}^{x+t} K(mu sqrt(t^2 - (x-y)^2)) h(y) dy
//! ```
//!
//! with `K = I0` (dominant damping, b^2 > 4m^2), `K = 1` (balanced) or `K = J0`
//! (dominant mass), and the solution is
//!
//! ```text
//! phi(t) = S(t)(g + b f) + d/dt S(t) f + int_0^t S(t - tau) F(tau, .) dtau.
//! ```
//!
//! All spatial integrals run over `[x - t, x + t]` intersected with the declared
//! support of the integrand and use composite Gauss–Legendre panels. The kernel
//! is analytic up to the ends of the window, so no endpoint treatment is needed.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::quadrature::GaussLegendre;
use crate::special_fn::{i0, i1_over_z_unchecked, j0, j1_over_z_unchecked};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid linear parameters: {0}")]
    InvalidParams(String),
    #[error("invalid quadrature configuration: {0}")]
    Config(String),
    #[error("invalid evaluation point: {0}")]
    Domain(String),
    #[error(
        "quadrature did not converge at t={t}, x={x}: {coarse} with {panels} panels/unit vs {fine} after refinement"
    )]
    NonConvergence {
        t: f64,
        x: f64,
        panels: usize,
        coarse: f64,
        fine: f64,
    },
}

/// Damping `b > 0` and squared mass `m2 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearParams {
    pub b: f64,
    pub m2: f64,
}

impl LinearParams {
    pub fn new(b: f64, m2: f64) -> Result<Self, KernelError> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(KernelError::InvalidParams(format!(
                "damping b must be positive, got {b}"
            )));
        }
        if !(m2 >= 0.0 && m2.is_finite()) {
            return Err(KernelError::InvalidParams(format!("m2 must be nonnegative, got {m2}")));
        }
        Ok(Self { b, m2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DampingRegime {
    /// b^2 > 4 m^2: kernel I0.
    DominantDamping,
    /// b^2 = 4 m^2: kernel 1.
    Balanced,
    /// b^2 < 4 m^2: kernel J0, changes sign.
    DominantMass,
}

/// `sqrt(|b^2/4 - m^2|)`, exactly zero in the balanced case.
pub fn mu(params: &LinearParams) -> f64 {
    if classify_regime(params) == DampingRegime::Balanced {
        return 0.0;
    }
    (0.25 * params.b * params.b - params.m2).abs().sqrt()
}

/// Exact comparison of `b^2` against `4 m^2`; no tolerance band.
pub fn classify_regime(params: &LinearParams) -> DampingRegime {
    let lhs = params.b * params.b;
    let rhs = 4.0 * params.m2;
    if lhs > rhs {
        DampingRegime::DominantDamping
    } else if lhs == rhs {
        DampingRegime::Balanced
    } else {
        DampingRegime::DominantMass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    C1,
    C2,
}

/// A function of one variable with declared compact support `[lo, hi]`.
///
/// Evaluation returns 0 outside the support regardless of the wrapped closure.
#[derive(Clone)]
pub struct Profile {
    func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    lo: f64,
    hi: f64,
    smoothness: Smoothness,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl Profile {
    pub fn new<F>(lo: f64, hi: f64, smoothness: Smoothness, func: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        assert!(lo <= hi, "profile support [{lo}, {hi}] is empty");
        Self {
            func: Arc::new(func),
            lo,
            hi,
            smoothness,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, Smoothness::C2, |_| 0.0)
    }

    /// `amplitude * (1 - ((x - center)/radius)^2)_+^power`; C^(power-1).
    pub fn poly_bump(center: f64, radius: f64, amplitude: f64, power: i32) -> Self {
        assert!(radius > 0.0 && power >= 2);
        let smoothness = if power >= 3 { Smoothness::C2 } else { Smoothness::C1 };
        Self::new(center - radius, center + radius, smoothness, move |x| {
            let s = (x - center) / radius;
            let base = 1.0 - s * s;
            if base > 0.0 {
                amplitude * base.powi(power)
            } else {
                0.0
            }
        })
    }

    /// Constant on `[lo, hi]`. Only smooth away from the support edges.
    pub fn constant(value: f64, lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, Smoothness::C2, move |_| value)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let inner = Arc::clone(&self.func);
        Self {
            func: Arc::new(move |x| factor * inner(x)),
            ..self.clone()
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            (self.func)(x)
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn is_trivial(&self) -> bool {
        self.hi <= self.lo
    }

    /// Integral over the declared support.
    pub fn integral(&self) -> f64 {
        if self.is_trivial() {
            return 0.0;
        }
        GaussLegendre::new(12).composite_density(self.lo, self.hi, 16.0, |y| self.eval(y))
    }
}

/// Source term `F(t, x)` whose support at time `t` lies in `[lo - t, hi + t]`.
#[derive(Clone)]
pub struct SourceFn {
    func: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    lo: f64,
    hi: f64,
    trivial: bool,
}

impl fmt::Debug for SourceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceFn")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .finish_non_exhaustive()
    }
}

impl SourceFn {
    pub fn new<F>(lo: f64, hi: f64, func: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        assert!(lo <= hi);
        Self {
            func: Arc::new(func),
            lo,
            hi,
            trivial: false,
        }
    }

    pub fn zero() -> Self {
        Self {
            func: Arc::new(|_, _| 0.0),
            lo: 0.0,
            hi: 0.0,
            trivial: true,
        }
    }

    /// `value` on the growing interval `[lo - t, hi + t]`.
    pub fn constant(value: f64, lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, move |_, _| value)
    }

    pub fn support_at(&self, t: f64) -> (f64, f64) {
        (self.lo - t, self.hi + t)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let (lo, hi) = self.support_at(t);
        if self.trivial || x < lo || x > hi {
            0.0
        } else {
            (self.func)(t, x)
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.trivial
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureConfig {
    /// Gauss–Legendre panels per unit length in space.
    pub panels_per_unit: usize,
    /// Nodes per panel.
    pub gl_order: usize,
    /// Panels per unit time in the Duhamel integral.
    pub duhamel_steps_per_unit: usize,
    /// Relative tolerance for the panel-doubling check on top-level spatial
    /// integrals; `None` disables the check.
    pub refine_tol: Option<f64>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            panels_per_unit: 8,
            gl_order: 8,
            duhamel_steps_per_unit: 64,
            refine_tol: Some(1e-9),
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), KernelError> {
        if self.panels_per_unit == 0 || self.gl_order == 0 || self.duhamel_steps_per_unit == 0 {
            return Err(KernelError::Config("panel counts and order must be positive".into()));
        }
        if let Some(tol) = self.refine_tol {
            if !(tol > 0.0) {
                return Err(KernelError::Config("refine_tol must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Regime-dispatched kernel. `w = t^2 - (x-y)^2 >= 0` is the squared light-cone
/// distance; the argument of the Bessel functions is `mu * sqrt(w)`.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    regime: DampingRegime,
    mu: f64,
    b: f64,
}

impl Kernel {
    fn new(params: &LinearParams) -> Self {
        Self {
            regime: classify_regime(params),
            mu: mu(params),
            b: params.b,
        }
    }

    #[inline]
    fn value(&self, w: f64) -> f64 {
        let k = match self.regime {
            DampingRegime::DominantDamping => i0(self.mu * w.max(0.0).sqrt()),
            DampingRegime::Balanced => 1.0,
            DampingRegime::DominantMass => j0(self.mu * w.max(0.0).sqrt()),
        };
        debug_assert!(
            self.regime == DampingRegime::DominantMass || k >= 1.0,
            "kernel must be >= 1 without dominant mass, got {k}"
        );
        k
    }

    /// `d/dt K = mu^2 t * ratio(w)`; `ratio` is `I1(z)/z` or `-J1(z)/z`.
    #[inline]
    fn ratio(&self, w: f64) -> f64 {
        match self.regime {
            DampingRegime::DominantDamping => i1_over_z_unchecked(self.mu * w.max(0.0).sqrt()),
            DampingRegime::Balanced => 0.0,
            DampingRegime::DominantMass => -j1_over_z_unchecked(self.mu * w.max(0.0).sqrt()),
        }
    }

    #[inline]
    fn decay(&self, t: f64) -> f64 {
        (-0.5 * self.b * t).exp()
    }
}

/// Integration window `[x - t, x + t]` intersected with `[lo, hi]`.
#[inline]
fn window(t: f64, x: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let a = (x - t).max(lo);
    let c = (x + t).min(hi);
    (c > a).then_some((a, c))
}

/// `int K(w) h(y) dy` over the window, without the prefactors.
fn kernel_integral(kernel: &Kernel, rule: &GaussLegendre, per_unit: f64, t: f64, x: f64, h: &Profile) -> f64 {
    if h.is_trivial() {
        return 0.0;
    }
    let (lo, hi) = h.support();
    match window(t, x, lo, hi) {
        Some((a, c)) => rule.composite_density(a, c, per_unit, |y| {
            let d = x - y;
            kernel.value(t * t - d * d) * h.eval(y)
        }),
        None => 0.0,
    }
}

fn ratio_integral(kernel: &Kernel, rule: &GaussLegendre, per_unit: f64, t: f64, x: f64, h: &Profile) -> f64 {
    if h.is_trivial() || kernel.regime == DampingRegime::Balanced {
        return 0.0;
    }
    let (lo, hi) = h.support();
    match window(t, x, lo, hi) {
        Some((a, c)) => rule.composite_density(a, c, per_unit, |y| {
            let d = x - y;
            kernel.ratio(t * t - d * d) * h.eval(y)
        }),
        None => 0.0,
    }
}

/// Evaluates `integral(per_unit)`, optionally re-evaluating with doubled
/// panels and failing if the two disagree beyond the configured tolerance.
fn checked<F: Fn(f64) -> f64>(q: &QuadratureConfig, t: f64, x: f64, integral: F) -> Result<f64, KernelError> {
    let base = q.panels_per_unit as f64;
    let coarse = integral(base);
    let Some(tol) = q.refine_tol else {
        return Ok(coarse);
    };
    let fine = integral(2.0 * base);
    if (fine - coarse).abs() > tol * fine.abs().max(1.0) {
        return Err(KernelError::NonConvergence {
            t,
            x,
            panels: q.panels_per_unit,
            coarse,
            fine,
        });
    }
    Ok(fine)
}

fn check_point(t: f64, x: f64) -> Result<(), KernelError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(KernelError::Domain(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    if !x.is_finite() {
        return Err(KernelError::Domain(format!("x must be finite, got {x}")));
    }
    Ok(())
}

/// `S(t; b, m^2) h (x)`.
pub fn apply_s(t: f64, params: &LinearParams, h: &Profile, x: f64, q: &QuadratureConfig) -> Result<f64, KernelError> {
    check_point(t, x)?;
    q.validate()?;
    let kernel = Kernel::new(params);
    let rule = GaussLegendre::new(q.gl_order);
    let integral = checked(q, t, x, |pu| kernel_integral(&kernel, &rule, pu, t, x, h))?;
    Ok(0.5 * kernel.decay(t) * integral)
}

/// `d/dt S(t; b, m^2) h (x)`:
///
/// ```text
/// 1/2 e^{-bt/2} (h(x+t) + h(x-t)) - b/4 e^{-bt/2} int K h
///     + mu^2 t / 2 e^{-bt/2} int ratio h
/// ```
pub fn apply_ds_dt(
    t: f64,
    params: &LinearParams,
    h: &Profile,
    x: f64,
    q: &QuadratureConfig,
) -> Result<f64, KernelError> {
    check_point(t, x)?;
    q.validate()?;
    let kernel = Kernel::new(params);
    let rule = GaussLegendre::new(q.gl_order);
    let k_int = checked(q, t, x, |pu| kernel_integral(&kernel, &rule, pu, t, x, h))?;
    let r_int = checked(q, t, x, |pu| ratio_integral(&kernel, &rule, pu, t, x, h))?;
    Ok(ds_dt_combine(&kernel, t, x, h, k_int, r_int))
}

fn ds_dt_combine(kernel: &Kernel, t: f64, x: f64, h: &Profile, k_int: f64, r_int: f64) -> f64 {
    let e = kernel.decay(t);
    let boundary = 0.5 * e * (h.eval(x + t) + h.eval(x - t));
    boundary - 0.25 * kernel.b * e * k_int + 0.5 * kernel.mu * kernel.mu * t * e * r_int
}

/// Duhamel term `int_0^t S(t - tau) F(tau, .) (x) dtau` with fixed subdivision.
fn duhamel(kernel: &Kernel, rule: &GaussLegendre, q: &QuadratureConfig, t: f64, x: f64, source: &SourceFn) -> f64 {
    if source.is_trivial() || t <= 0.0 {
        return 0.0;
    }
    let per_unit_space = q.panels_per_unit as f64;
    rule.composite_density(0.0, t, q.duhamel_steps_per_unit as f64, |tau| {
        let s = t - tau;
        let (lo, hi) = source.support_at(tau);
        let Some((a, c)) = window(s, x, lo, hi) else {
            return 0.0;
        };
        let inner = rule.composite_density(a, c, per_unit_space, |y| {
            let d = x - y;
            kernel.value(s * s - d * d) * source.eval(tau, y)
        });
        0.5 * kernel.decay(s) * inner
    })
}

/// Solution of the linear Cauchy problem at `(t, x)` via the representation
/// `S(t)(g + b f) + d/dt S(t) f + int_0^t S(t - tau) F(tau) dtau`.
pub fn solve_linear_ivp(
    f: &Profile,
    g: &Profile,
    source: &SourceFn,
    params: &LinearParams,
    t: f64,
    x: f64,
    q: &QuadratureConfig,
) -> Result<f64, KernelError> {
    check_point(t, x)?;
    q.validate()?;
    let kernel = Kernel::new(params);
    let rule = GaussLegendre::new(q.gl_order);
    let e = kernel.decay(t);

    let s_g = checked(q, t, x, |pu| kernel_integral(&kernel, &rule, pu, t, x, g))?;
    let s_f = checked(q, t, x, |pu| kernel_integral(&kernel, &rule, pu, t, x, f))?;
    let r_f = checked(q, t, x, |pu| ratio_integral(&kernel, &rule, pu, t, x, f))?;

    let s_part = 0.5 * e * (s_g + params.b * s_f);
    let ds_part = ds_dt_combine(&kernel, t, x, f, s_f, r_f);
    Ok(s_part + ds_part + duhamel(&kernel, &rule, q, t, x, source))
}

/// Stencil centers and spacings for [`pde_residual`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub t_centers: Vec<f64>,
    pub x_centers: Vec<f64>,
    pub h_t: f64,
    pub h_x: f64,
}

impl GridSpec {
    pub fn halved(&self) -> Self {
        Self {
            h_t: 0.5 * self.h_t,
            h_x: 0.5 * self.h_x,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub worst_t: f64,
    pub worst_x: f64,
}

/// Max-norm of `phi_tt - phi_xx + b phi_t + m^2 phi - F` with centered
/// second-order stencils, `phi` sampled from [`solve_linear_ivp`].
pub fn pde_residual(
    params: &LinearParams,
    f: &Profile,
    g: &Profile,
    source: &SourceFn,
    grid: &GridSpec,
    q: &QuadratureConfig,
) -> Result<ResidualReport, KernelError> {
    if !(grid.h_t > 0.0 && grid.h_x > 0.0) {
        return Err(KernelError::Config("grid spacings must be positive".into()));
    }
    if grid.t_centers.is_empty() || grid.x_centers.is_empty() {
        return Err(KernelError::Config("grid has no stencil centers".into()));
    }
    if let Some(&t_min) = grid.t_centers.iter().min_by(|a, b| a.total_cmp(b)) {
        if t_min - grid.h_t < 0.0 {
            return Err(KernelError::Config(format!(
                "time stencil at t={t_min} reaches below t=0 with h_t={}",
                grid.h_t
            )));
        }
    }
    let narrowest = [f, g]
        .iter()
        .filter(|p| !p.is_trivial())
        .map(|p| p.support().1 - p.support().0)
        .fold(f64::INFINITY, f64::min);
    let h_max = grid.h_t.max(grid.h_x);
    if narrowest.is_finite() && h_max > 0.25 * narrowest {
        return Err(KernelError::Config(format!(
            "grid spacing {h_max} too coarse for data support of width {narrowest}"
        )));
    }

    let points: Vec<(f64, f64)> = grid
        .t_centers
        .iter()
        .flat_map(|&t| grid.x_centers.iter().map(move |&x| (t, x)))
        .collect();
    let (ht, hx) = (grid.h_t, grid.h_x);
    let residuals: Vec<(f64, f64, f64)> = points
        .par_iter()
        .map(|&(t, x)| {
            let phi = |tt: f64, xx: f64| solve_linear_ivp(f, g, source, params, tt, xx, q);
            let c = phi(t, x)?;
            let tp = phi(t + ht, x)?;
            let tm = phi(t - ht, x)?;
            let xp = phi(t, x + hx)?;
            let xm = phi(t, x - hx)?;
            let tt = (tp - 2.0 * c + tm) / (ht * ht);
            let xx = (xp - 2.0 * c + xm) / (hx * hx);
            let dt = (tp - tm) / (2.0 * ht);
            let r = tt - xx + params.b * dt + params.m2 * c - source.eval(t, x);
            Ok((r.abs(), t, x))
        })
        .collect::<Result<_, KernelError>>()?;
    let (max_residual, worst_t, worst_x) = residuals.into_iter().fold((0.0, f64::NAN, f64::NAN), |acc, r| {
        if r.0 > acc.0 || acc.1.is_nan() {
            r
        } else {
            acc
        }
    });
    Ok(ResidualReport {
        max_residual,
        worst_t,
        worst_x,
    })
}
