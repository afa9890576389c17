//! Finite-difference simulation of the coupled system in one space dimension
//!
//! ```text
//! u_tt - u_xx + b u_t + m^2 u = |v_t|^p,   (u, u_t)(0) = eps (u0, u1)
//! v_tt - v_xx             = |u_t|^q,   (v, v_t)(0) = eps (v0, v1)
//! ```
//!
//! The scheme is explicit leapfrog with the damping term centered over levels
//! `k +- 1`:
//!
//! ```text
//! (1 + b dt/2) u^{k+1} = 2 u^k - (1 - b dt/2) u^{k-1} + dt^2 (D2 u^k - m^2 u^k + |v_t^k|^p)
//! v^{k+1} = 2 v^k - v^{k-1} + dt^2 (D2 v^k + |u_t^k|^q)
//! ```
//!
//! The time derivatives in the sources are the centered differences
//! `(w^{k+1} - w^{k-1}) / (2 dt)` at the current level. They depend on the new
//! level only pointwise, so each grid point runs a short predictor-corrector:
//! a second-order one-sided extrapolation predicts `w_t^k`, and the centered
//! difference recomputed from the provisional new level corrects it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iteration::{theta, CriticalityClass};
use crate::kernel_ops::{classify_regime, DampingRegime, LinearParams, Profile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid initial data: {0}")]
    InvalidData(String),
    #[error("CFL violation: {0}")]
    Cfl(String),
    #[error("grid half-width {half_width} does not cover the light cone |x| <= {needed}")]
    GridTooSmall { half_width: f64, needed: f64 },
    #[error("invalid numerics: {0}")]
    Numerics(String),
    #[error("characteristic trace does not reach t = {needed}")]
    TraceTooShort { needed: f64 },
}

/// All model constants of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Spatial dimension; only enters the analytic formulas.
    pub n: u32,
    pub p: f64,
    pub q: f64,
    pub b: f64,
    pub m2: f64,
    /// Radius of the ball containing the data supports.
    #[serde(rename = "R")]
    pub r: f64,
    pub eps: f64,
}

impl ModelParams {
    pub fn new(n: u32, p: f64, q: f64, b: f64, m2: f64, r: f64, eps: f64) -> Result<Self, SimError> {
        let params = Self { n, p, q, b, m2, r, eps };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidParams(what.to_string()));
        if self.n < 1 {
            return bad("n must be at least 1");
        }
        if !(self.p > 1.0 && self.p.is_finite() && self.q > 1.0 && self.q.is_finite()) {
            return bad("exponents p, q must exceed 1");
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad("damping b must be positive");
        }
        if !(self.m2 >= 0.0 && self.m2.is_finite()) {
            return bad("m2 must be nonnegative");
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad("support radius R must be positive");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive");
        }
        Ok(())
    }

    pub fn linear(&self) -> LinearParams {
        LinearParams { b: self.b, m2: self.m2 }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }

    /// Blow-up hypotheses: `b^2 >= 4 m^2` and `theta >= 0`.
    pub fn check_blowup_hypotheses(&self) -> Result<(), SimError> {
        self.validate()?;
        if classify_regime(&self.linear()) == DampingRegime::DominantMass {
            return Err(SimError::InvalidParams(format!(
                "blow-up experiments need b^2 >= 4 m^2 (b = {}, m2 = {})",
                self.b, self.m2
            )));
        }
        let th = theta(self.n, self.p, self.q).map_err(|e| SimError::InvalidParams(e.to_string()))?;
        if th.class == CriticalityClass::Outside {
            return Err(SimError::InvalidParams(format!(
                "theta(n, p, q) = {} < 0 lies outside the blow-up range",
                th.value
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileFamily {
    /// `(1 - (x/R)^2)_+^power`; power 3 is C^2.
    PolyBump { power: i32 },
}

impl Default for ProfileFamily {
    fn default() -> Self {
        ProfileFamily::PolyBump { power: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    #[serde(default)]
    pub family: ProfileFamily,
    /// Amplitudes of `u0, u1, v0, v1`.
    pub amplitudes: [f64; 4],
    pub radius: f64,
}

impl InitialDataSpec {
    /// Only `v1` nonzero, unit amplitude.
    pub fn v1_only(radius: f64) -> Self {
        Self {
            family: ProfileFamily::default(),
            amplitudes: [0.0, 0.0, 0.0, 1.0],
            radius,
        }
    }
}

/// Data profiles already multiplied by `eps`.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub u0: Profile,
    pub u1: Profile,
    pub v0: Profile,
    pub v1: Profile,
    pub eps: f64,
    /// `M = 1/2 ||v1||_{L^1}` of the unscaled `v1`.
    pub m: f64,
}

pub fn make_initial_data(spec: &InitialDataSpec, params: &ModelParams) -> Result<InitialData, SimError> {
    params.validate()?;
    if spec.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(SimError::InvalidData(format!(
            "amplitudes must be finite and nonnegative, got {:?}",
            spec.amplitudes
        )));
    }
    if !(spec.radius > 0.0 && spec.radius <= params.r) {
        return Err(SimError::InvalidData(format!(
            "data radius {} must lie in (0, R = {}]",
            spec.radius, params.r
        )));
    }
    let ProfileFamily::PolyBump { power } = spec.family;
    if power < 3 {
        return Err(SimError::InvalidData(format!(
            "bump power {power} gives less than C^2 displacement data"
        )));
    }
    let make = |amp: f64| {
        if amp == 0.0 {
            Profile::zero()
        } else {
            Profile::poly_bump(0.0, spec.radius, amp * params.eps, power)
        }
    };
    let v1 = make(spec.amplitudes[3]);
    let m = 0.5 * v1.integral() / params.eps;
    Ok(InitialData {
        u0: make(spec.amplitudes[0]),
        u1: make(spec.amplitudes[1]),
        v0: make(spec.amplitudes[2]),
        v1,
        eps: params.eps,
        m,
    })
}

/// Like [`make_initial_data`] but also enforces the blow-up hypotheses,
/// including a nontrivial `v1`.
pub fn make_blowup_data(spec: &InitialDataSpec, params: &ModelParams) -> Result<InitialData, SimError> {
    params.check_blowup_hypotheses()?;
    if spec.amplitudes[3] <= 0.0 {
        return Err(SimError::InvalidData(
            "v1 must be nontrivial for blow-up experiments".into(),
        ));
    }
    make_initial_data(spec, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    pub hx: f64,
    /// `dt <= cfl * hx`, `cfl` in (0, 0.9].
    pub cfl: f64,
    pub t_max: f64,
    /// Blow-up threshold as a multiple of the initial data maximum.
    pub threshold_factor: f64,
    /// The run continues until the monitors exceed `stop_factor * threshold`
    /// so that threshold sensitivity can be measured.
    pub stop_factor: f64,
    pub nonlinear: bool,
    pub corrector_iters: usize,
    /// Explicit domain half-width; default `R + t_max + 1`.
    pub half_width: Option<f64>,
    /// Store a snapshot every this many steps (0 disables snapshots).
    pub snapshot_every: usize,
    pub snapshot_stride: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            hx: 0.02,
            cfl: 0.5,
            t_max: 10.0,
            threshold_factor: 1e6,
            stop_factor: 10.0,
            nonlinear: true,
            corrector_iters: 2,
            half_width: None,
            snapshot_every: 0,
            snapshot_stride: 1,
        }
    }
}

impl NumericsConfig {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(SimError::Cfl(format!("cfl = {} must lie in (0, 0.9]", self.cfl)));
        }
        if !(self.hx > 0.0 && self.hx.is_finite()) {
            return Err(SimError::Numerics("hx must be positive".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(SimError::Numerics("t_max must be positive and finite".into()));
        }
        if !(self.threshold_factor > 0.0 && self.stop_factor >= 1.0) {
            return Err(SimError::Numerics(
                "threshold factors must be positive, stop_factor >= 1".into(),
            ));
        }
        if self.corrector_iters == 0 {
            return Err(SimError::Numerics(
                "at least one corrector iteration is required".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(SimError::Numerics("snapshot_stride must be positive".into()));
        }
        Ok(())
    }
}

/// Solution fields on the uniform grid `x_i = x0 + i hx` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub x0: f64,
    pub hx: f64,
    pub t: f64,
    pub steps: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub v_prev: Vec<f64>,
}

impl GridState {
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.hx
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn sample_u(&self, x: f64) -> f64 {
        interpolate(&self.u, self.x0, self.hx, x)
    }

    pub fn sample_v(&self, x: f64) -> f64 {
        interpolate(&self.v, self.x0, self.hx, x)
    }
}

fn interpolate(values: &[f64], x0: f64, hx: f64, x: f64) -> f64 {
    let s = (x - x0) / hx;
    if s < 0.0 || s > (values.len() - 1) as f64 {
        return 0.0;
    }
    let i = (s.floor() as usize).min(values.len() - 2);
    let w = s - i as f64;
    (1.0 - w) * values[i] + w * values[i + 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub max_u: f64,
    pub max_v: f64,
    pub max_dudt: f64,
    pub max_dvdt: f64,
    /// The pointwise corrector stopped contracting during the step into this level.
    pub step_collapse: bool,
}

impl MonitorSample {
    fn values(&self) -> [(Trigger, f64); 4] {
        [
            (Trigger::MaxDuDt, self.max_dudt),
            (Trigger::MaxDvDt, self.max_dvdt),
            (Trigger::MaxU, self.max_u),
            (Trigger::MaxV, self.max_v),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    MaxDuDt,
    MaxDvDt,
    MaxU,
    MaxV,
    StepCollapse,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupPolicy {
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub blew_up: bool,
    pub t_num: Option<f64>,
    pub trigger: Option<Trigger>,
    pub threshold: f64,
    pub final_values: MonitorSample,
}

/// First time any monitored maximum exceeds the threshold, or becomes
/// non-finite, or the corrector collapses.
pub fn detect_blowup(history: &[MonitorSample], policy: &BlowupPolicy) -> BlowupReport {
    assert!(!history.is_empty(), "monitor history must be nonempty");
    for sample in history {
        let mut trigger = None;
        if sample.values().iter().any(|(_, v)| !v.is_finite()) {
            trigger = Some(Trigger::NonFinite);
        } else if let Some((t, _)) = sample.values().into_iter().find(|(_, v)| *v > policy.threshold) {
            trigger = Some(t);
        } else if sample.step_collapse {
            trigger = Some(Trigger::StepCollapse);
        }
        if trigger.is_some() {
            return BlowupReport {
                blew_up: true,
                t_num: Some(sample.t),
                trigger,
                threshold: policy.threshold,
                final_values: *sample,
            };
        }
    }
    BlowupReport {
        blew_up: false,
        t_num: None,
        trigger: None,
        threshold: policy.threshold,
        final_values: *history.last().unwrap(),
    }
}

/// Samples of `U(t, t - R)` and `V(t, t - R)` on the characteristic line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTrace {
    pub r: f64,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl CharacteristicTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,U_char,V_char\n");
        for i in 0..self.t.len() {
            out.push_str(&format!("{},{},{}\n", self.t[i], self.u[i], self.v[i]));
        }
        out
    }

    /// The samples with `t <= t_end`.
    pub fn truncated(&self, t_end: f64) -> Self {
        let n = self.t.iter().take_while(|&&t| t <= t_end).count();
        Self {
            r: self.r,
            t: self.t[..n].to_vec(),
            u: self.u[..n].to_vec(),
            v: self.v[..n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub dudt: Vec<f64>,
    pub dvdt: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,u,v,dudt,dvdt\n");
        for s in &self.snapshots {
            for i in 0..s.x.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.t, s.x[i], s.u[i], s.v[i], s.dudt[i], s.dvdt[i]
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub blowup: BlowupReport,
    /// Crossing time of `stop_factor * threshold`, if reached.
    pub t_num_stop: Option<f64>,
    /// `|T(stop) - T(threshold)| / T(threshold) < 2%`; false if either is missing.
    pub threshold_insensitive: bool,
    pub h_x: f64,
    pub h_t: f64,
    pub steps: usize,
    pub t_end: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub trajectory: Trajectory,
    pub trace: CharacteristicTrace,
    pub report: SimReport,
    pub history: Vec<MonitorSample>,
    pub final_state: GridState,
}

/// Relative threshold-sensitivity allowance between the two crossing times.
pub const THRESHOLD_SENSITIVITY: f64 = 0.02;

#[inline]
fn power(w: f64, e: f64) -> f64 {
    let a = w.abs();
    if e == 2.0 {
        a * a
    } else {
        a.powf(e)
    }
}

fn sample_profile(profile: &Profile, x0: f64, hx: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| profile.eval(x0 + i as f64 * hx)).collect()
}

fn max_abs(values: &[f64]) -> f64 {
    let mut m = 0.0_f64;
    for &v in values {
        if !v.is_finite() {
            return f64::NAN;
        }
        m = m.max(v.abs());
    }
    m
}

/// Runs the leapfrog scheme until `t_max` or until the monitors exceed
/// `stop_factor * threshold`.
pub fn simulate(
    params: &ModelParams,
    spec: &InitialDataSpec,
    numerics: &NumericsConfig,
) -> Result<SimulationResult, SimError> {
    let data = make_initial_data(spec, params)?;
    simulate_data(params, &data, numerics)
}

pub fn simulate_data(
    params: &ModelParams,
    data: &InitialData,
    numerics: &NumericsConfig,
) -> Result<SimulationResult, SimError> {
    params.validate()?;
    numerics.validate()?;
    let hx = numerics.hx;
    let r = params.r;
    let needed = r + numerics.t_max + 2.0 * hx;
    let half_width = match numerics.half_width {
        Some(w) if w < needed => return Err(SimError::GridTooSmall { half_width: w, needed }),
        Some(w) => hx * (w / hx).ceil(),
        None => hx * ((r + numerics.t_max + 1.0) / hx).ceil(),
    };
    let cells = (2.0 * half_width / hx).round() as usize;
    let npts = cells + 1;
    let x0 = -half_width;
    let steps = ((numerics.t_max / (numerics.cfl * hx)) - 1e-9).ceil().max(1.0) as usize;
    let dt = numerics.t_max / steps as f64;
    if dt > numerics.cfl * hx * (1.0 + 1e-12) {
        return Err(SimError::Cfl(format!("dt = {dt} exceeds cfl * hx")));
    }

    let (p, q, b, m2) = (params.p, params.q, params.b, params.m2);
    let nl = if numerics.nonlinear { 1.0 } else { 0.0 };
    let inv_hx2 = 1.0 / (hx * hx);
    let dt2 = dt * dt;
    let damp_plus = 1.0 + 0.5 * b * dt;
    let damp_minus = 1.0 - 0.5 * b * dt;

    let u0 = sample_profile(&data.u0, x0, hx, npts);
    let u1 = sample_profile(&data.u1, x0, hx, npts);
    let v0 = sample_profile(&data.v0, x0, hx, npts);
    let v1 = sample_profile(&data.v1, x0, hx, npts);

    let initial_max = [&u0, &u1, &v0, &v1].iter().map(|a| max_abs(a)).fold(0.0, f64::max);
    let threshold = numerics.threshold_factor * if initial_max > 0.0 { initial_max } else { 1.0 };
    let stop_threshold = threshold * numerics.stop_factor;

    // index range allowed to be nonzero at time t
    let active = |t: f64| -> (usize, usize) {
        let reach = r + t + 2.0 * hx;
        let lo = ((-reach - x0) / hx).ceil().max(1.0) as usize;
        let hi = (((reach - x0) / hx).floor() as usize).min(npts - 2);
        (lo, hi)
    };

    let mut trace = CharacteristicTrace {
        r,
        ..Default::default()
    };
    let mut history = Vec::new();
    let mut trajectory = Trajectory::default();
    let snapshot = |t: f64, u: &[f64], v: &[f64], ud: &[f64], vd: &[f64]| Snapshot {
        t,
        x: (0..npts)
            .step_by(numerics.snapshot_stride)
            .map(|i| x0 + i as f64 * hx)
            .collect(),
        u: u.iter().step_by(numerics.snapshot_stride).copied().collect(),
        v: v.iter().step_by(numerics.snapshot_stride).copied().collect(),
        dudt: ud.iter().step_by(numerics.snapshot_stride).copied().collect(),
        dvdt: vd.iter().step_by(numerics.snapshot_stride).copied().collect(),
    };

    // level 0 -> 1 by Taylor expansion with the exact initial velocities
    let mut u_prev = u0;
    let mut v_prev = v0;
    let mut ud_prev = u1;
    let mut vd_prev = v1;
    let mut u_cur = vec![0.0; npts];
    let mut v_cur = vec![0.0; npts];
    {
        let (lo, hi) = active(dt);
        for i in lo..=hi {
            let lap_u = (u_prev[i + 1] - 2.0 * u_prev[i] + u_prev[i - 1]) * inv_hx2;
            let lap_v = (v_prev[i + 1] - 2.0 * v_prev[i] + v_prev[i - 1]) * inv_hx2;
            let acc_u = lap_u - b * ud_prev[i] - m2 * u_prev[i] + nl * power(vd_prev[i], p);
            let acc_v = lap_v + nl * power(ud_prev[i], q);
            u_cur[i] = u_prev[i] + dt * ud_prev[i] + 0.5 * dt2 * acc_u;
            v_cur[i] = v_prev[i] + dt * vd_prev[i] + 0.5 * dt2 * acc_v;
        }
    }
    let record_level = |trace: &mut CharacteristicTrace, t: f64, u: &[f64], v: &[f64]| {
        trace.t.push(t);
        trace.u.push(interpolate(u, x0, hx, t - r));
        trace.v.push(interpolate(v, x0, hx, t - r));
    };
    // Every update writes only inside active(t), a range that grows with t,
    // so entries outside it are exactly zero and the maxima can skip them.
    let monitor = |t: f64, u: &[f64], v: &[f64], ud: &[f64], vd: &[f64], collapse: bool| {
        let (lo, hi) = active(t + dt);
        let span = lo - 1..hi + 2;
        MonitorSample {
            t,
            max_u: max_abs(&u[span.clone()]),
            max_v: max_abs(&v[span.clone()]),
            max_dudt: max_abs(&ud[span.clone()]),
            max_dvdt: max_abs(&vd[span]),
            step_collapse: collapse,
        }
    };
    record_level(&mut trace, 0.0, &u_prev, &v_prev);
    history.push(monitor(0.0, &u_prev, &v_prev, &ud_prev, &vd_prev, false));
    if numerics.snapshot_every > 0 {
        trajectory
            .snapshots
            .push(snapshot(0.0, &u_prev, &v_prev, &ud_prev, &vd_prev));
    }

    let mut u_prev2: Option<Vec<f64>> = None;
    let mut v_prev2: Option<Vec<f64>> = None;
    let mut u_next = vec![0.0; npts];
    let mut v_next = vec![0.0; npts];
    let mut ud_cur = vec![0.0; npts];
    let mut vd_cur = vec![0.0; npts];
    let mut level = 1usize;
    let mut stopped = false;

    while level <= steps {
        let t_cur = level as f64 * dt;
        let mut collapse = false;
        if level < steps {
            let (lo, hi) = active(t_cur + dt);
            for i in lo..=hi {
                // predictor for the time derivatives at the current level
                let (mut ud, mut vd) = match (&u_prev2, &v_prev2) {
                    (Some(u2), Some(v2)) => (
                        (3.0 * u_cur[i] - 4.0 * u_prev[i] + u2[i]) / (2.0 * dt),
                        (3.0 * v_cur[i] - 4.0 * v_prev[i] + v2[i]) / (2.0 * dt),
                    ),
                    _ => (
                        2.0 * (u_cur[i] - u_prev[i]) / dt - ud_prev[i],
                        2.0 * (v_cur[i] - v_prev[i]) / dt - vd_prev[i],
                    ),
                };
                let lap_u = (u_cur[i + 1] - 2.0 * u_cur[i] + u_cur[i - 1]) * inv_hx2;
                let lap_v = (v_cur[i + 1] - 2.0 * v_cur[i] + v_cur[i - 1]) * inv_hx2;
                let base_u = 2.0 * u_cur[i] - damp_minus * u_prev[i] + dt2 * (lap_u - m2 * u_cur[i]);
                let base_v = 2.0 * v_cur[i] - v_prev[i] + dt2 * lap_v;
                let mut un = 0.0;
                let mut vn = 0.0;
                let mut last_change = f64::INFINITY;
                for it in 0..numerics.corrector_iters {
                    let un_new = (base_u + dt2 * nl * power(vd, p)) / damp_plus;
                    let vn_new = base_v + dt2 * nl * power(ud, q);
                    let change = (un_new - un).abs() + (vn_new - vn).abs();
                    if it >= 2 && change > last_change && change > 1e-6 * (1.0 + un_new.abs() + vn_new.abs()) {
                        collapse = true;
                    }
                    if it >= 1 {
                        last_change = change;
                    }
                    un = un_new;
                    vn = vn_new;
                    ud = (un - u_prev[i]) / (2.0 * dt);
                    vd = (vn - v_prev[i]) / (2.0 * dt);
                }
                u_next[i] = un;
                v_next[i] = vn;
                ud_cur[i] = ud;
                vd_cur[i] = vd;
            }
        } else {
            // final level: one-sided second-order derivative for monitoring only
            for i in 0..npts {
                ud_cur[i] = match &u_prev2 {
                    Some(u2) => (3.0 * u_cur[i] - 4.0 * u_prev[i] + u2[i]) / (2.0 * dt),
                    None => (u_cur[i] - u_prev[i]) / dt,
                };
                vd_cur[i] = match &v_prev2 {
                    Some(v2) => (3.0 * v_cur[i] - 4.0 * v_prev[i] + v2[i]) / (2.0 * dt),
                    None => (v_cur[i] - v_prev[i]) / dt,
                };
            }
        }

        record_level(&mut trace, t_cur, &u_cur, &v_cur);
        let sample = monitor(t_cur, &u_cur, &v_cur, &ud_cur, &vd_cur, collapse);
        history.push(sample);
        if numerics.snapshot_every > 0 && level.is_multiple_of(numerics.snapshot_every) {
            trajectory
                .snapshots
                .push(snapshot(t_cur, &u_cur, &v_cur, &ud_cur, &vd_cur));
        }
        let over = sample
            .values()
            .iter()
            .any(|(_, v)| !v.is_finite() || *v > stop_threshold);
        if over || (collapse && !sample.values().iter().all(|(_, v)| *v <= threshold)) {
            stopped = true;
            break;
        }
        if level == steps {
            break;
        }

        // rotate levels: prev2 <- prev <- cur <- next
        let old_u2 = u_prev2.replace(std::mem::take(&mut u_prev));
        let old_v2 = v_prev2.replace(std::mem::take(&mut v_prev));
        u_prev = std::mem::replace(&mut u_cur, std::mem::take(&mut u_next));
        v_prev = std::mem::replace(&mut v_cur, std::mem::take(&mut v_next));
        u_next = old_u2.unwrap_or_else(|| vec![0.0; npts]);
        v_next = old_v2.unwrap_or_else(|| vec![0.0; npts]);
        std::mem::swap(&mut ud_prev, &mut ud_cur);
        std::mem::swap(&mut vd_prev, &mut vd_cur);
        level += 1;
    }

    let blowup = detect_blowup(&history, &BlowupPolicy { threshold });
    let stop_report = detect_blowup(
        &history,
        &BlowupPolicy {
            threshold: stop_threshold,
        },
    );
    let t_num_stop = stop_report.t_num;
    let threshold_insensitive = match (blowup.t_num, t_num_stop) {
        (Some(a), Some(b)) => ((b - a) / a).abs() < THRESHOLD_SENSITIVITY,
        _ => false,
    };
    let t_end = history.last().map(|s| s.t).unwrap_or(0.0);
    let _ = stopped;
    Ok(SimulationResult {
        trajectory,
        trace,
        report: SimReport {
            blowup,
            t_num_stop,
            threshold_insensitive,
            h_x: hx,
            h_t: dt,
            steps: level,
            t_end,
        },
        history,
        final_state: GridState {
            x0,
            hx,
            t: t_end,
            steps: level,
            u: u_cur,
            v: v_cur,
            u_prev,
            v_prev,
        },
    })
}

/// Outcome of checking `V(t, t - R) >= M eps (1 - tol)` on the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub bound: f64,
    pub tol: f64,
    pub samples: usize,
    pub passed: bool,
    pub worst_t: f64,
    pub worst_value: f64,
}

/// Checks the first lower bound `V(t, t - R) >= M eps` for all trace samples
/// with `2R <= t <= t_end`.
pub fn first_lower_bound_check(
    trace: &CharacteristicTrace,
    m: f64,
    eps: f64,
    t_end: f64,
    tol: f64,
) -> Result<LowerBoundCheck, SimError> {
    let start = 2.0 * trace.r;
    if trace.t.last().is_none_or(|&t| t < start) {
        return Err(SimError::TraceTooShort { needed: start });
    }
    let bound = m * eps;
    let mut worst_t = f64::NAN;
    let mut worst_value = f64::INFINITY;
    let mut samples = 0;
    for (&t, &v) in trace.t.iter().zip(&trace.v) {
        if t < start || t > t_end {
            continue;
        }
        samples += 1;
        if v < worst_value || !v.is_finite() {
            worst_value = v;
            worst_t = t;
        }
    }
    let passed = samples > 0 && worst_value >= bound * (1.0 - tol);
    Ok(LowerBoundCheck {
        bound,
        tol,
        samples,
        passed,
        worst_t,
        worst_value,
    })
}
