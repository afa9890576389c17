//! Slicing sequences of the blow-up iteration, their closed forms, the
//! lower-bound envelopes for `V` on the characteristic line, and the explicit
//! lifespan bounds.
//!
//! Everything that grows like `(pq)^j` is kept in logarithmic form. The
//! coefficient sequences are stored *scaled*: `a_j = ln C_j / (pq)^j`, which
//! stays bounded, so no quantity overflows for any `j` that fits in memory.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fd_sim::ModelParams;
use crate::kernel_ops::{classify_regime, DampingRegime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IterationError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("theta = {theta} is outside the admissible range: {why}")]
    Criticality { theta: f64, why: &'static str },
    #[error("the iteration needs b^2 >= 4 m^2 (b = {b}, m2 = {m2})")]
    Regime { b: f64, m2: f64 },
    #[error("z = {z} lies below the slice boundary {boundary} for j = {j}")]
    Domain { z: f64, j: usize, boundary: f64 },
    #[error("index j = {j} beyond the tabulated range {j_max}")]
    IndexRange { j: usize, j_max: usize },
}

/// Tolerance within which `theta` is treated as zero.
pub const CRITICAL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalityClass {
    Subcritical,
    Critical,
    /// `theta < 0`: no blow-up statement available.
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityIndex {
    pub value: f64,
    pub class: CriticalityClass,
}

/// `theta = 1/(pq - 1) - (n - 1)/2`.
pub fn theta(n: u32, p: f64, q: f64) -> Result<CriticalityIndex, IterationError> {
    if n < 1 {
        return Err(IterationError::InvalidParams("n must be at least 1".into()));
    }
    if !(p > 1.0 && q > 1.0 && p.is_finite() && q.is_finite()) {
        return Err(IterationError::InvalidParams(format!("p = {p}, q = {q} must exceed 1")));
    }
    let value = 1.0 / (p * q - 1.0) - 0.5 * (n as f64 - 1.0);
    let class = if value.abs() <= CRITICAL_TOL {
        CriticalityClass::Critical
    } else if value > 0.0 {
        CriticalityClass::Subcritical
    } else {
        CriticalityClass::Outside
    };
    Ok(CriticalityIndex { value, class })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    /// `C = 1/2 (2R)^{1-p}`, `K = 1/2 (2R)^{1-q}`.
    Pinned,
    /// Pinned `C` times `e^{-bR}`, the factor lost when `t - tau <= z - y + 2R`
    /// is used to bound the damping exponential.
    Rigorous,
    User,
}

/// Multiplicative constants of the integral inequalities linking `U` and `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConstants {
    pub c: f64,
    pub k: f64,
    pub source: FrameSource,
}

impl FrameConstants {
    pub fn n1_pinned(p: f64, q: f64, r: f64) -> Self {
        Self {
            c: 0.5 * (2.0 * r).powf(1.0 - p),
            k: 0.5 * (2.0 * r).powf(1.0 - q),
            source: FrameSource::Pinned,
        }
    }

    /// The pinned constants with the damping loss on the time window
    /// `[y - R, y + R]` kept: there `e^{-b(t-tau)/2} >= e^{-b(z-y)/2} e^{-bR}`,
    /// so `C` carries an extra `e^{-bR}`.
    pub fn n1_rigorous(p: f64, q: f64, b: f64, r: f64) -> Self {
        let pinned = Self::n1_pinned(p, q, r);
        Self {
            c: pinned.c * (-b * r).exp(),
            k: pinned.k,
            source: FrameSource::Rigorous,
        }
    }

    pub fn user(c: f64, k: f64) -> Result<Self, IterationError> {
        if !(c > 0.0 && k > 0.0 && c.is_finite() && k.is_finite()) {
            return Err(IterationError::InvalidParams("frame constants must be positive".into()));
        }
        Ok(Self {
            c,
            k,
            source: FrameSource::User,
        })
    }

    /// Rigorous constants for `n = 1`; for `n >= 2` the caller must supply them.
    pub fn default_for(params: &ModelParams) -> Result<Self, IterationError> {
        if params.n != 1 {
            return Err(IterationError::InvalidParams(
                "frame constants for n >= 2 must be supplied explicitly".into(),
            ));
        }
        Ok(Self::n1_rigorous(params.p, params.q, params.b, params.r))
    }
}

/// `ln(x^j - 1)` for `x > 1`, `j >= 1`, without forming `x^j`.
fn ln_pow_minus_one(ln_x: f64, j: usize) -> f64 {
    let s = j as f64 * ln_x;
    s + (-(-s).exp_m1()).ln()
}

/// `ln((x^j - 1)/(x - 1))`; `-inf` at `j = 0`.
fn ln_geometric_sum(ln_x: f64, j: usize) -> f64 {
    if j == 0 {
        return f64::NEG_INFINITY;
    }
    ln_pow_minus_one(ln_x, j) - ln_x.exp_m1().ln()
}

/// `(1 - x^{-j})/(x - 1)`, the scaled geometric sum.
fn scaled_geometric_sum(ln_x: f64, j: usize) -> f64 {
    -(-(j as f64) * ln_x).exp_m1() / ln_x.exp_m1()
}

/// `ln(1 + y)/y` with the limit 1 at `y = 0`.
fn ln1p_ratio(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y.ln_1p() / y
    }
}

fn check_common(params: &ModelParams, frame: &FrameConstants, m: f64) -> Result<CriticalityIndex, IterationError> {
    params
        .validate()
        .map_err(|e| IterationError::InvalidParams(e.to_string()))?;
    if classify_regime(&params.linear()) == DampingRegime::DominantMass {
        return Err(IterationError::Regime {
            b: params.b,
            m2: params.m2,
        });
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(IterationError::InvalidParams(format!("M = {m} must be positive")));
    }
    if !(frame.c > 0.0 && frame.k > 0.0) {
        return Err(IterationError::InvalidParams("frame constants must be positive".into()));
    }
    theta(params.n, params.p, params.q)
}

/// Sequences of the subcritical iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcriticalSequences {
    pub params: ModelParams,
    pub frame: FrameConstants,
    pub theta: f64,
    pub pq: f64,
    /// `M = 1/2 ||v1||_1`.
    pub m: f64,
    /// `ln L_j` for `j = 0..=j_max`.
    pub log_l: Vec<f64>,
    pub l_inf: f64,
    /// `ln C_j / (pq)^j` for `j = 0..=j_max`.
    pub scaled_log_c: Vec<f64>,
    /// Lower bound for `inf_j ell_j^{-beta_{j-1} pq}`.
    pub n_const: f64,
    pub ln_d: f64,
    pub ln_e: f64,
    pub ln_e1: f64,
    pub j0: usize,
}

/// Largest index used when bounding the slicing factors from below.
const N_SCAN: usize = 2000;

impl SubcriticalSequences {
    pub fn j_max(&self) -> usize {
        self.scaled_log_c.len() - 1
    }

    fn ln_pq(&self) -> f64 {
        self.pq.ln()
    }

    pub fn ell(&self, j: usize) -> f64 {
        if j == 0 {
            (2.0 / (self.params.b * self.params.r)).max(1.0)
        } else {
            1.0 + (-(j as f64) * self.ln_pq()).exp()
        }
    }

    pub fn l(&self, j: usize) -> Result<f64, IterationError> {
        self.log_l
            .get(j)
            .map(|v| v.exp())
            .ok_or(IterationError::IndexRange { j, j_max: self.j_max() })
    }

    /// `(n-1)/2 ((pq)^j - 1)`; may be infinite for huge `j`.
    pub fn alpha(&self, j: usize) -> f64 {
        if self.params.n == 1 || j == 0 {
            0.0
        } else {
            0.5 * (self.params.n as f64 - 1.0) * ln_pow_minus_one(self.ln_pq(), j).exp()
        }
    }

    pub fn log_beta(&self, j: usize) -> f64 {
        ln_geometric_sum(self.ln_pq(), j)
    }

    pub fn beta(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.log_beta(j).exp()
        }
    }

    /// `ln C_j`; may overflow to infinity for large `j`, the scaled form does not.
    pub fn log_c(&self, j: usize) -> Result<f64, IterationError> {
        let a = self
            .scaled_log_c
            .get(j)
            .ok_or(IterationError::IndexRange { j, j_max: self.j_max() })?;
        Ok(a * (j as f64 * self.ln_pq()).exp())
    }
}

pub fn subcritical_sequences(
    params: &ModelParams,
    frame: &FrameConstants,
    m: f64,
    j_max: usize,
) -> Result<SubcriticalSequences, IterationError> {
    let th = check_common(params, frame, m)?;
    if th.class == CriticalityClass::Outside {
        return Err(IterationError::Criticality {
            theta: th.value,
            why: "the subcritical iteration needs theta >= 0",
        });
    }
    let (p, q, b) = (params.p, params.q, params.b);
    let pq = p * q;
    let lp = pq.ln();

    let ell0 = (2.0 / (b * params.r)).max(1.0);
    let mut log_l = Vec::with_capacity(j_max + 1);
    let mut acc = ell0.ln();
    log_l.push(acc);
    for j in 1..=j_max {
        acc += (-(j as f64) * lp).exp().ln_1p();
        log_l.push(acc);
    }
    let mut tail = acc;
    let mut k = j_max + 1;
    loop {
        let term = (-(k as f64) * lp).exp().ln_1p();
        tail += term;
        if term < 1e-18 * tail.abs().max(1.0) {
            break;
        }
        k += 1;
    }
    let l_inf = tail.exp();

    // beta_{j-1} pq ln ell_j = (1 - pq^{-(j-1)})/(pq - 1) * ln(1 + y)/y with y = pq^{-j}
    let slicing_exponent = |j: usize| -> f64 { scaled_geometric_sum(lp, j - 1) * ln1p_ratio((-(j as f64) * lp).exp()) };
    let limit = (-1.0 / (pq - 1.0)).exp();
    let mut n_min = limit;
    for j in 1..=N_SCAN {
        n_min = n_min.min((-slicing_exponent(j)).exp());
    }
    let n_const = 0.99 * n_min;

    let ln_c_frame = frame.c.ln();
    let ln_k_frame = frame.k.ln();
    let ln_d = ln_k_frame + q * ln_c_frame + n_const.ln() + q * (2.0 * pq - 1.0).ln() + (pq - 1.0).ln() - q * b.ln();
    let ln_e = m.ln() - (2.0 * q + 1.0) * pq * lp / (pq - 1.0).powi(2) + ln_d / (pq - 1.0);
    let ln_e1 = ln_e - std::f64::consts::LN_2 / (pq - 1.0);
    let j0 = (ln_d / ((2.0 * q + 1.0) * lp) - pq / (pq - 1.0)).ceil().max(0.0) as usize;

    let c0 = ln_k_frame + q * ln_c_frame + q * (2.0 * pq - 1.0).ln() - q * b.ln();
    let mut scaled = Vec::with_capacity(j_max + 1);
    let mut a = (m * params.eps).ln();
    scaled.push(a);
    for j in 0..j_max {
        let next = j + 1;
        let slicing = slicing_exponent(next);
        let increment = c0 - slicing - 2.0 * q * next as f64 * lp - ln_geometric_sum(lp, next);
        a += increment * (-(next as f64) * lp).exp();
        scaled.push(a);
    }

    Ok(SubcriticalSequences {
        params: *params,
        frame: *frame,
        theta: th.value,
        pq,
        m,
        log_l,
        l_inf,
        scaled_log_c: scaled,
        n_const,
        ln_d,
        ln_e,
        ln_e1,
        j0,
    })
}

/// Which base appears in the final critical constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CriticalBase {
    /// `2^{2q} pq`, consistent with the one-step bound `K_j >= D~ (2^{2q} pq)^{-j} K_{j-1}^{pq}`.
    #[default]
    Derived,
    /// `2^q pq`, as printed in the closed-form summary; too weak a base, so the
    /// resulting bound on `ln K_j` fails for large `j`.
    Printed,
}

/// Sequences of the critical iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSequences {
    pub params: ModelParams,
    pub frame: FrameConstants,
    pub theta: f64,
    pub pq: f64,
    pub m: f64,
    pub base: CriticalBase,
    pub lambda_inf: f64,
    /// `ln K_j / (pq)^j` for `j = 0..=j_max`.
    pub scaled_log_k: Vec<f64>,
    pub ln_dtilde: f64,
    pub ln_etilde: f64,
    pub j1: usize,
}

impl CriticalSequences {
    pub fn j_max(&self) -> usize {
        self.scaled_log_k.len() - 1
    }

    pub fn lambda(&self, j: usize) -> f64 {
        1.0 + 4.0 / (self.params.b * self.params.r) * (2.0 - 0.5_f64.powi(j.min(2000) as i32))
    }

    pub fn log_gamma(&self, j: usize) -> f64 {
        ln_geometric_sum(self.pq.ln(), j)
    }

    pub fn gamma(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.log_gamma(j).exp()
        }
    }

    pub fn log_k(&self, j: usize) -> Result<f64, IterationError> {
        let a = self
            .scaled_log_k
            .get(j)
            .ok_or(IterationError::IndexRange { j, j_max: self.j_max() })?;
        Ok(a * (j as f64 * self.pq.ln()).exp())
    }
}

/// Critical sequences; requires `theta = 0`.
pub fn critical_sequences(
    params: &ModelParams,
    frame: &FrameConstants,
    m: f64,
    j_max: usize,
) -> Result<CriticalSequences, IterationError> {
    let th = theta(params.n, params.p, params.q)?;
    if th.class != CriticalityClass::Critical {
        return Err(IterationError::Criticality {
            theta: th.value,
            why: "the critical iteration needs theta = 0",
        });
    }
    critical_sequences_formal(params, frame, m, j_max, CriticalBase::Derived)
}

/// The critical recursion evaluated for any exponents. The recursion for
/// `K_j` and its closed-form lower bound do not involve `theta`; only the
/// step that turns them into a bound for `V` does.
pub fn critical_sequences_formal(
    params: &ModelParams,
    frame: &FrameConstants,
    m: f64,
    j_max: usize,
    base: CriticalBase,
) -> Result<CriticalSequences, IterationError> {
    let th = check_common(params, frame, m)?;
    let (q, b) = (params.q, params.b);
    let pq = params.p * q;
    let lp = pq.ln();
    let ln2 = std::f64::consts::LN_2;
    let ln_dtilde = 2.0 * q * ln2 + frame.k.ln() - q * b.ln() + q * frame.c.ln() + (pq - 1.0).ln();
    let ln_base = match base {
        CriticalBase::Derived => 2.0 * q * ln2 + lp,
        CriticalBase::Printed => q * ln2 + lp,
    };
    let ln_etilde = m.ln() - pq * ln_base / (pq - 1.0).powi(2) + ln_dtilde / (pq - 1.0);
    let j1 = (ln_dtilde / ln_base - pq / (pq - 1.0)).ceil().max(0.0) as usize;

    let k0 = frame.k.ln() - q * b.ln() + q * frame.c.ln();
    let mut scaled = Vec::with_capacity(j_max + 1);
    let mut a = (m * params.eps).ln();
    scaled.push(a);
    for j in 0..j_max {
        let next = j + 1;
        // ln K_{j+1} = k0 + pq ln K_j - 2qj ln 2 - ln gamma_{j+1}
        let increment = k0 - 2.0 * q * j as f64 * ln2 - ln_geometric_sum(lp, next);
        a += increment * (-(next as f64) * lp).exp();
        scaled.push(a);
    }
    Ok(CriticalSequences {
        params: *params,
        frame: *frame,
        theta: th.value,
        pq,
        m,
        base,
        lambda_inf: 1.0 + 8.0 / (b * params.r),
        scaled_log_k: scaled,
        ln_dtilde,
        ln_etilde,
        j1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sequences {
    Subcritical(SubcriticalSequences),
    Critical(CriticalSequences),
}

impl Sequences {
    /// Builds the sequences matching the sign of `theta`.
    pub fn build(params: &ModelParams, frame: &FrameConstants, m: f64, j_max: usize) -> Result<Self, IterationError> {
        let th = theta(params.n, params.p, params.q)?;
        match th.class {
            CriticalityClass::Critical => critical_sequences(params, frame, m, j_max).map(Sequences::Critical),
            _ => subcritical_sequences(params, frame, m, j_max).map(Sequences::Subcritical),
        }
    }
}

/// `ln` of the `j`-th lower bound for `V(R + z, z)`; `-inf` on the slice boundary.
pub fn log_lower_bound_envelope(z: f64, j: usize, seqs: &Sequences) -> Result<f64, IterationError> {
    match seqs {
        Sequences::Subcritical(s) => {
            let r = s.params.r;
            if j == 0 {
                // the first lower bound already holds from z = R on
                if z < r {
                    return Err(IterationError::Domain { z, j, boundary: r });
                }
                return Ok(s.scaled_log_c[0]);
            }
            let boundary = s.l(j)? * r;
            if z < boundary {
                return Err(IterationError::Domain { z, j, boundary });
            }
            if z == boundary {
                return Ok(f64::NEG_INFINITY);
            }
            let alpha_term = if s.alpha(j) == 0.0 {
                0.0
            } else {
                s.alpha(j) * (r + z).ln()
            };
            Ok(s.log_c(j)? - alpha_term + s.beta(j) * (z - boundary).ln())
        }
        Sequences::Critical(c) => {
            let r = c.params.r;
            if j == 0 {
                if z < r {
                    return Err(IterationError::Domain { z, j, boundary: r });
                }
                return Ok(c.scaled_log_k[0]);
            }
            let boundary = c.lambda(j) * r;
            if z < boundary {
                return Err(IterationError::Domain { z, j, boundary });
            }
            if z == boundary {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(c.log_k(j)? + c.gamma(j) * (z / boundary).ln().ln())
        }
    }
}

pub fn lower_bound_envelope(z: f64, j: usize, seqs: &Sequences) -> Result<f64, IterationError> {
    log_lower_bound_envelope(z, j, seqs).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifespanBound {
    pub eps: f64,
    pub bound: f64,
    pub ln_bound: f64,
    /// Smallness threshold on `eps`; infinite when the argument imposes none.
    pub eps0: f64,
    /// `eps > eps0`: the hypotheses of the blow-up statement are not met.
    pub warning: bool,
    /// `C` in `T <= C eps^{-1/theta}` or `T <= exp(C eps^{-(pq-1)})`. In the
    /// critical case it is derived from the constructive bound at this `eps`.
    pub constant: f64,
    pub critical: bool,
}

/// Constructive upper bound for the lifespan.
pub fn lifespan_bound(eps: f64, seqs: &Sequences) -> Result<LifespanBound, IterationError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(IterationError::InvalidParams(format!("eps = {eps} must be positive")));
    }
    match seqs {
        Sequences::Subcritical(s) => {
            if s.theta <= CRITICAL_TOL {
                return Err(IterationError::Criticality {
                    theta: s.theta,
                    why: "the power-law bound needs theta > 0",
                });
            }
            let th = s.theta;
            let ln_bound = -(s.ln_e1 + eps.ln()) / th;
            let eps0 = (-s.ln_e1 - th * (2.0 * (s.l_inf + 1.0) * s.params.r).ln()).exp();
            Ok(LifespanBound {
                eps,
                bound: ln_bound.exp(),
                ln_bound,
                eps0,
                warning: eps > eps0,
                constant: (-s.ln_e1 / th).exp(),
                critical: false,
            })
        }
        Sequences::Critical(c) => {
            let e = c.pq - 1.0;
            let blow = (-(e) * (c.ln_etilde + eps.ln())).exp();
            let ln_bound = (2.0 * c.lambda_inf * c.params.r).ln() + blow;
            Ok(LifespanBound {
                eps,
                bound: ln_bound.exp(),
                ln_bound,
                // the smallness condition has a negative right-hand side
                eps0: f64::INFINITY,
                warning: false,
                constant: ln_bound * eps.powf(e),
                critical: true,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub max_error: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormReport {
    pub checks: Vec<CheckOutcome>,
}

impl ClosedFormReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormConfig {
    /// Range of the exact rational checks.
    pub exact_j_max: usize,
    /// Range of the floating log-domain checks.
    pub float_j_max: usize,
    /// Indices past `j0` / `j1` at which the coefficient bounds are checked.
    pub bound_window: usize,
    pub float_tol: f64,
}

impl Default for ClosedFormConfig {
    fn default() -> Self {
        Self {
            exact_j_max: 40,
            float_j_max: 200,
            bound_window: 50,
            float_tol: 1e-12,
        }
    }
}

fn rational(x: f64) -> Result<BigRational, IterationError> {
    BigRational::from_float(x).ok_or_else(|| IterationError::InvalidParams(format!("{x} is not finite")))
}

/// Exact checks in rational arithmetic: recursion against closed form for the
/// exponent sequences, and both geometric summation identities.
pub fn exact_closed_form_checks(n: u32, p: f64, q: f64, j_max: usize) -> Result<Vec<CheckOutcome>, IterationError> {
    let pq = rational(p)? * rational(q)?;
    let one = BigRational::one();
    let half_nm1 = BigRational::new(BigInt::from(n as i64 - 1), BigInt::from(2));
    let pq_m1 = &pq - &one;

    let mut alpha = BigRational::zero();
    let mut beta = BigRational::zero();
    let mut pow = one.clone(); // pq^j
    let mut worst = BigRational::zero();
    let mut worst_sum = BigRational::zero();
    let mut geometric = BigRational::zero(); // sum_{k<j} pq^k
    let mut weighted = BigRational::zero(); // sum_{k<j} (j-k) pq^k
    for j in 0..=j_max {
        let jr = BigRational::from_integer(BigInt::from(j));
        let closed_beta = (&pow - &one) / &pq_m1;
        let closed_alpha = &half_nm1 * (&pow - &one);
        worst = worst
            .max((&beta - &closed_beta).abs())
            .max((&alpha - &closed_alpha).abs());

        // sum identities, both sides independent
        let closed_weighted = ((&pow * &pq - &pq) / &pq_m1 - &jr) / &pq_m1;
        worst_sum = worst_sum
            .max((&geometric - &closed_beta).abs())
            .max((&weighted - &closed_weighted).abs());

        // advance: alpha_{j+1} = (n-1)/2 (pq-1) + pq alpha_j, beta_{j+1} = 1 + pq beta_j
        alpha = &half_nm1 * &pq_m1 + &pq * &alpha;
        beta = &one + &pq * &beta;
        weighted = &weighted + &geometric + &pow;
        geometric = &geometric + &pow;
        pow = &pow * &pq;
    }
    let to_f = |x: &BigRational| -> f64 {
        if x.is_zero() {
            0.0
        } else {
            use num_traits::ToPrimitive;
            x.to_f64().unwrap_or(f64::INFINITY)
        }
    };
    Ok(vec![
        CheckOutcome {
            name: "exact: exponent recursions equal closed forms".into(),
            passed: worst.is_zero(),
            max_error: to_f(&worst),
            detail: format!("alpha, beta = gamma for j <= {j_max} in rational arithmetic"),
        },
        CheckOutcome {
            name: "exact: summation identities".into(),
            passed: worst_sum.is_zero(),
            max_error: to_f(&worst_sum),
            detail: format!("direct sums against closed forms for j <= {j_max}"),
        },
    ])
}

/// Floating checks: log-domain recursions against closed forms, and the
/// summation identities by direct summation.
pub fn float_closed_form_checks(n: u32, pq: f64, j_max: usize, tol: f64) -> Vec<CheckOutcome> {
    let lp = pq.ln();
    // ln beta via ln beta_{j+1} = ln pq + ln beta_j + ln(1 + 1/(pq beta_j)), from beta_1 = 1
    let mut lb = 0.0_f64;
    let mut worst = 0.0_f64;
    let half_nm1 = 0.5 * (n as f64 - 1.0);
    let mut la = if n > 1 {
        (half_nm1 * (pq - 1.0)).ln()
    } else {
        f64::NEG_INFINITY
    };
    for j in 1..=j_max {
        let closed = ln_geometric_sum(lp, j);
        worst = worst.max((lb - closed).abs() / closed.abs().max(1.0));
        if n > 1 {
            let closed_a = half_nm1.ln() + ln_pow_minus_one(lp, j);
            worst = worst.max((la - closed_a).abs() / closed_a.abs().max(1.0));
            la = lp + la + (half_nm1 * (pq - 1.0) * (-lp - la).exp()).ln_1p();
        }
        lb = lp + lb + (-lp - lb).exp().ln_1p();
    }

    let sum_limit = j_max.min(40);
    let mut worst_sum = 0.0_f64;
    for j in 1..=sum_limit {
        let direct: f64 = (0..j).map(|k| pq.powi(k as i32)).sum();
        let weighted: f64 = (0..j).map(|k| (j - k) as f64 * pq.powi(k as i32)).sum();
        let closed = (pq.powi(j as i32) - 1.0) / (pq - 1.0);
        let closed_w = ((pq.powi(j as i32 + 1) - pq) / (pq - 1.0) - j as f64) / (pq - 1.0);
        worst_sum = worst_sum
            .max(((direct - closed) / closed).abs())
            .max(((weighted - closed_w) / closed_w).abs());
    }
    vec![
        CheckOutcome {
            name: "float: log-domain exponent recursions".into(),
            passed: worst <= tol,
            max_error: worst,
            detail: format!("relative error for j <= {j_max}"),
        },
        CheckOutcome {
            name: "float: summation identities".into(),
            passed: worst_sum <= tol,
            max_error: worst_sum,
            detail: format!("direct summation for j <= {sum_limit}"),
        },
    ]
}

/// Checks `ln C_j >= (pq)^j ln(E eps)` for `j0 <= j <= j0 + window` and the
/// matching critical statement for `K_j`, with the recursions iterated as
/// stated. Returns the worst scaled margin (negative on failure).
fn coefficient_bound_check<F: Fn(usize) -> f64>(
    name: &str,
    scaled: F,
    target: f64,
    start: usize,
    window: usize,
) -> CheckOutcome {
    let mut worst = f64::INFINITY;
    let mut worst_j = start;
    for j in start..=start + window {
        let margin = scaled(j) - target;
        if margin < worst {
            worst = margin;
            worst_j = j;
        }
    }
    CheckOutcome {
        name: name.to_string(),
        passed: worst >= 0.0,
        max_error: if worst < 0.0 { -worst } else { 0.0 },
        detail: format!(
            "j in [{start}, {}]: smallest margin (ln X_j - (pq)^j ln(target)) / (pq)^j = {worst:.6e} at j = {worst_j}",
            start + window
        ),
    }
}

pub fn verify_closed_forms(
    params: &ModelParams,
    frame: &FrameConstants,
    m: f64,
    cfg: &ClosedFormConfig,
) -> Result<ClosedFormReport, IterationError> {
    let mut checks = exact_closed_form_checks(params.n, params.p, params.q, cfg.exact_j_max)?;
    let pq = params.p * params.q;
    checks.extend(float_closed_form_checks(params.n, pq, cfg.float_j_max, cfg.float_tol));

    let probe = subcritical_sequences(params, frame, m, 0)?;
    let sub = subcritical_sequences(params, frame, m, probe.j0 + cfg.bound_window)?;
    let ln_target = sub.ln_e + params.eps.ln();
    checks.push(coefficient_bound_check(
        "ln C_j >= (pq)^j ln(E eps)",
        |j| sub.scaled_log_c[j],
        ln_target,
        sub.j0,
        cfg.bound_window,
    ));

    let probe = critical_sequences_formal(params, frame, m, 0, CriticalBase::Derived)?;
    let crit = critical_sequences_formal(params, frame, m, probe.j1 + cfg.bound_window, CriticalBase::Derived)?;
    let ln_target = crit.ln_etilde + params.eps.ln();
    checks.push(coefficient_bound_check(
        "ln K_j >= (pq)^j ln(E~ eps)",
        |j| crit.scaled_log_k[j],
        ln_target,
        crit.j1,
        cfg.bound_window,
    ));
    Ok(ClosedFormReport { checks })
}

/// Checks the critical coefficient bound with a chosen base.
pub fn critical_coefficient_check(
    params: &ModelParams,
    frame: &FrameConstants,
    m: f64,
    window: usize,
    base: CriticalBase,
) -> Result<CheckOutcome, IterationError> {
    let probe = critical_sequences_formal(params, frame, m, 0, base)?;
    let crit = critical_sequences_formal(params, frame, m, probe.j1 + window, base)?;
    Ok(coefficient_bound_check(
        "ln K_j >= (pq)^j ln(E~ eps)",
        |j| crit.scaled_log_k[j],
        crit.ln_etilde + params.eps.ln(),
        crit.j1,
        window,
    ))
}

pub fn sequences_csv(seqs: &Sequences) -> String {
    let mut out = String::new();
    match seqs {
        Sequences::Subcritical(s) => {
            out.push_str("j,ell_j,L_j,alpha_j,beta_j,logC_j\n");
            for j in 0..=s.j_max() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    j,
                    s.ell(j),
                    s.log_l[j].exp(),
                    s.alpha(j),
                    s.beta(j),
                    s.log_c(j).unwrap()
                ));
            }
        }
        Sequences::Critical(c) => {
            out.push_str("j,Lambda_j,gamma_j,logK_j\n");
            for j in 0..=c.j_max() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    j,
                    c.lambda(j),
                    c.gamma(j),
                    c.log_k(j).unwrap()
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const M_BUMP: f64 = 16.0 / 35.0;

    fn standard(eps: f64) -> ModelParams {
        ModelParams::new(1, 2.0, 2.0, 1.0, 0.0, 1.0, eps).unwrap()
    }

    fn sub(params: &ModelParams, j_max: usize) -> SubcriticalSequences {
        let frame = FrameConstants::n1_pinned(params.p, params.q, params.r);
        subcritical_sequences(params, &frame, M_BUMP, j_max).unwrap()
    }

    #[test]
    fn theta_examples() {
        let t = theta(1, 2.0, 2.0).unwrap();
        assert!((t.value - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(t.class, CriticalityClass::Subcritical);
        let s = 2.0_f64.sqrt();
        let t = theta(3, s, s).unwrap();
        assert!(t.value.abs() < 1e-14);
        assert_eq!(t.class, CriticalityClass::Critical);
        let t = theta(2, 2.0, 2.0).unwrap();
        assert!((t.value + 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(t.class, CriticalityClass::Outside);
        assert!(theta(1, 1.0, 2.0).is_err());
        assert!(theta(0, 2.0, 2.0).is_err());
    }

    #[test]
    fn slicing_factors() {
        let p = ModelParams::new(1, 2.0, 2.0, 2.0, 0.0, 1.0, 0.1).unwrap();
        let s = sub(&p, 10);
        assert_eq!(s.ell(0), 1.0);
        assert!((s.ell(1) - 1.25).abs() < 1e-15);
        let s = sub(&standard(0.1), 10);
        assert_eq!(s.ell(0), 2.0);
    }

    #[test]
    fn beta_and_alpha_examples() {
        // pq = 2 via p = 2, q = 1.0 is not admissible; use p = q = sqrt 2 with n = 1
        let r = 2.0_f64.sqrt();
        let p = ModelParams::new(1, r, r, 1.0, 0.0, 1.0, 0.1).unwrap();
        let s = sub(&p, 10);
        assert!((s.beta(3) - 7.0).abs() < 1e-12);
        for j in 0..10 {
            assert_eq!(s.alpha(j), 0.0);
        }
        let p3 = ModelParams::new(3, 2.0, 2.0, 1.0, 0.0, 1.0, 0.1).unwrap();
        // n = 3 with pq = 4 has theta < 0; alpha is still a closed form
        assert!(subcritical_sequences(&p3, &FrameConstants::user(1.0, 1.0).unwrap(), 1.0, 5).is_err());
    }

    #[test]
    fn l_is_increasing_and_converges() {
        let s = sub(&standard(0.1), 200);
        for j in 1..=200 {
            assert!(s.log_l[j] >= s.log_l[j - 1]);
        }
        // strictly, until the increments drop below the rounding unit of ln L
        for j in 1..20 {
            assert!(s.log_l[j] > s.log_l[j - 1]);
        }
        assert!((s.l_inf - s.l(200).unwrap()).abs() < 1e-12);
        assert!(s.l_inf > s.l(10).unwrap());
    }

    #[test]
    fn n_bounds_the_slicing_factors() {
        let s = sub(&standard(0.1), 5);
        let pq = s.pq;
        for j in 1..200 {
            let beta_prev = (pq.powi(j - 1) - 1.0) / (pq - 1.0);
            let ell = 1.0 + pq.powi(-j);
            let value = ell.powf(-beta_prev * pq);
            assert!(
                s.n_const > 0.0 && s.n_const < value,
                "j={j}: N={} value={value}",
                s.n_const
            );
        }
        let limit = (-1.0 / (pq - 1.0)).exp();
        let ell = 1.0 + pq.powi(-25);
        let beta = (pq.powi(24) - 1.0) / (pq - 1.0);
        assert!((ell.powf(-beta * pq) - limit).abs() < 1e-8);
    }

    #[test]
    fn sequences_finite_to_500() {
        for (p, q) in [(2.0, 2.0), (3.0, 3.0), (1.5, 1.2)] {
            let params = ModelParams::new(1, p, q, 1.0, 0.0, 1.0, 0.1).unwrap();
            let s = sub(&params, 500);
            assert!(s.scaled_log_c.iter().all(|a| a.is_finite()));
            assert!(s.log_l.iter().all(|a| a.is_finite()));
            assert!(s.log_beta(500).is_finite());
            let frame = FrameConstants::n1_pinned(p, q, 1.0);
            let c = critical_sequences_formal(&params, &frame, M_BUMP, 500, CriticalBase::Derived).unwrap();
            assert!(c.scaled_log_k.iter().all(|a| a.is_finite()));
        }
    }

    #[test]
    fn scaled_recursion_matches_direct_recursion() {
        let s = sub(&standard(0.2), 12);
        let (p, q, b) = (2.0_f64, 2.0_f64, 1.0_f64);
        let pq = p * q;
        let (c, k) = (s.frame.c, s.frame.k);
        let mut ln_c = (M_BUMP * 0.2_f64).ln();
        for j in 0..12 {
            let beta = (pq.powi(j) - 1.0) / (pq - 1.0);
            let ell = 1.0 + pq.powi(-(j + 1));
            ln_c = (k * c.powf(q) * (2.0 * pq - 1.0).powf(q) * b.powf(-q)).ln() + pq * ln_c
                - beta * pq * ell.ln()
                - 2.0 * q * (j + 1) as f64 * pq.ln()
                - (beta * pq + 1.0).ln();
            let got = s.log_c(j as usize + 1).unwrap();
            assert!(
                (got - ln_c).abs() < 1e-9 * ln_c.abs().max(1.0),
                "j={}: {got} vs {ln_c}",
                j + 1
            );
        }
    }

    #[test]
    fn lambda_examples() {
        let p = ModelParams::new(1, 2.0, 2.0, 8.0, 0.0, 1.0, 0.1).unwrap();
        let frame = FrameConstants::n1_pinned(2.0, 2.0, 1.0);
        let c = critical_sequences_formal(&p, &frame, M_BUMP, 5, CriticalBase::Derived).unwrap();
        assert!((c.lambda(0) - 1.5).abs() < 1e-15);
        assert!((c.lambda(1) - 1.75).abs() < 1e-15);
        assert!((c.lambda_inf - 2.0).abs() < 1e-15);
        assert!((c.log_k(0).unwrap() - (M_BUMP * 0.1).ln()).abs() < 1e-15);
        let r = 2.0_f64.sqrt();
        let p2 = ModelParams::new(1, r, r, 1.0, 0.0, 1.0, 0.1).unwrap();
        let c2 = critical_sequences_formal(&p2, &frame, M_BUMP, 5, CriticalBase::Derived).unwrap();
        assert!((c2.gamma(2) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn critical_needs_theta_zero() {
        let frame = FrameConstants::user(0.1, 0.1).unwrap();
        assert!(critical_sequences(&standard(0.1), &frame, M_BUMP, 5).is_err());
        let s = 2.0_f64.sqrt();
        let p = ModelParams::new(3, s, s, 1.0, 0.0, 1.0, 0.1).unwrap();
        assert!(critical_sequences(&p, &frame, M_BUMP, 5).is_ok());
    }

    #[test]
    fn regime_and_theta_are_enforced() {
        let frame = FrameConstants::user(0.1, 0.1).unwrap();
        let dm = ModelParams::new(1, 2.0, 2.0, 1.0, 1.0, 1.0, 0.1).unwrap();
        assert!(matches!(
            subcritical_sequences(&dm, &frame, M_BUMP, 5),
            Err(IterationError::Regime { .. })
        ));
        let out = ModelParams::new(2, 2.0, 2.0, 1.0, 0.0, 1.0, 0.1).unwrap();
        assert!(matches!(
            subcritical_sequences(&out, &frame, M_BUMP, 5),
            Err(IterationError::Criticality { .. })
        ));
    }

    #[test]
    fn envelope_examples() {
        let seqs = Sequences::Subcritical(sub(&standard(0.1), 20));
        for z in [1.0, 2.5, 10.0] {
            let v = lower_bound_envelope(z, 0, &seqs).unwrap();
            assert!((v - M_BUMP * 0.1).abs() < 1e-15);
        }
        let Sequences::Subcritical(s) = &seqs else {
            unreachable!()
        };
        for j in 1..5 {
            let boundary = s.l(j).unwrap() * 1.0;
            assert_eq!(lower_bound_envelope(boundary, j, &seqs).unwrap(), 0.0);
            assert!(matches!(
                lower_bound_envelope(boundary * 0.99, j, &seqs),
                Err(IterationError::Domain { .. })
            ));
        }
    }

    #[test]
    fn envelope_grows_in_j_past_divergence_threshold() {
        let params = standard(0.3);
        let s = sub(&params, 30);
        let th = s.theta;
        // ln(E1 eps z^theta) > 0 well beyond (E1 eps)^{-1/theta}
        let z_star = (-(s.ln_e1 + params.eps.ln()) / th).exp();
        let seqs = Sequences::Subcritical(s);
        let z = 50.0 * z_star;
        let mut prev = f64::NEG_INFINITY;
        for j in 3..25 {
            let v = log_lower_bound_envelope(z, j, &seqs).unwrap();
            assert!(v > prev, "j={j}");
            prev = v;
        }
    }

    #[test]
    fn lifespan_scaling() {
        let seqs = Sequences::Subcritical(sub(&standard(0.1), 5));
        let a = lifespan_bound(0.1, &seqs).unwrap();
        let b = lifespan_bound(0.2, &seqs).unwrap();
        assert!(!a.critical);
        assert!((a.bound / b.bound - 8.0).abs() < 1e-9);
        let c = lifespan_bound(0.05, &seqs).unwrap();
        assert!(((c.ln_bound - a.ln_bound) / 2.0_f64.ln() - 3.0).abs() < 1e-12);
        assert!((a.bound - a.constant * 0.1_f64.powf(-3.0)).abs() < 1e-9 * a.bound);
        assert!(lifespan_bound(0.0, &seqs).is_err());
    }

    #[test]
    fn critical_lifespan_inversion() {
        let s = 2.0_f64.sqrt();
        let p = ModelParams::new(3, s, s, 1.0, 0.0, 1.0, 0.1).unwrap();
        let frame = FrameConstants::user(0.2, 0.3).unwrap();
        let seqs = Sequences::build(&p, &frame, M_BUMP, 10).unwrap();
        let Sequences::Critical(c) = &seqs else {
            panic!("expected critical")
        };
        let eps = 0.5;
        let lb = lifespan_bound(eps, &seqs).unwrap();
        let lhs = lb.ln_bound - (2.0 * c.lambda_inf * 1.0).ln();
        let rhs = 1.0 / (c.ln_etilde.exp() * eps).powf(p.p * p.q - 1.0);
        assert!((lhs - rhs).abs() < 1e-9 * rhs);
        assert!(lb.critical && lb.eps0.is_infinite() && !lb.warning);
    }

    #[test]
    fn summation_identity_examples() {
        let pq: f64 = 3.0;
        let direct: f64 = (0..4).map(|k| pq.powi(k)).sum();
        assert_eq!(direct, 40.0);
        assert_eq!((pq.powi(4) - 1.0) / (pq - 1.0), 40.0);
        let pq: f64 = 2.0;
        let weighted: f64 = (0..3).map(|k| (3 - k) as f64 * pq.powi(k)).sum();
        assert_eq!(weighted, 11.0);
        assert_eq!(((pq.powi(4) - pq) / (pq - 1.0) - 3.0) / (pq - 1.0), 11.0);
    }

    #[test]
    fn j0_is_zero_for_small_d() {
        let frame = FrameConstants::user(1e-3, 1e-3).unwrap();
        let s = subcritical_sequences(&standard(0.1), &frame, M_BUMP, 1).unwrap();
        assert!(s.ln_d < 0.0);
        assert_eq!(s.j0, 0);
    }

    #[test]
    fn closed_forms_pass_for_standard_exponents() {
        let params = standard(0.3);
        let frame = FrameConstants::n1_pinned(2.0, 2.0, 1.0);
        let report = verify_closed_forms(&params, &frame, M_BUMP, &ClosedFormConfig::default()).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn printed_critical_base_is_too_weak() {
        let params = standard(0.3);
        let frame = FrameConstants::n1_pinned(2.0, 2.0, 1.0);
        let derived = critical_coefficient_check(&params, &frame, M_BUMP, 50, CriticalBase::Derived).unwrap();
        let printed = critical_coefficient_check(&params, &frame, M_BUMP, 50, CriticalBase::Printed).unwrap();
        assert!(derived.passed, "{}", derived.detail);
        assert!(!printed.passed, "{}", printed.detail);
    }

    #[test]
    fn csv_headers() {
        let seqs = Sequences::Subcritical(sub(&standard(0.1), 3));
        let csv = sequences_csv(&seqs);
        assert!(csv.starts_with("j,ell_j,L_j,alpha_j,beta_j,logC_j\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
