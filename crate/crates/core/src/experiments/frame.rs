use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::fd_sim::{CharacteristicTrace, ModelParams};
use crate::iteration::{log_lower_bound_envelope, subcritical_sequences, FrameConstants, Sequences};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameCheckConfig {
    /// Relative discretization allowance: `lhs >= (1 - allowance) rhs`.
    pub allowance: f64,
    /// Envelopes `j = 0..=envelope_j_max` are checked.
    pub envelope_j_max: usize,
}

impl Default for FrameCheckConfig {
    fn default() -> Self {
        Self {
            allowance: 0.05,
            envelope_j_max: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub samples: usize,
    pub passed: bool,
    /// Sample with the smallest `lhs - (1 - allowance) rhs`.
    pub worst_z: f64,
    pub worst_lhs: f64,
    pub worst_rhs: f64,
    /// Smallest `lhs / rhs` over samples with `rhs > 0`.
    pub min_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub j: usize,
    pub slice_start: f64,
    pub samples: usize,
    pub passed: bool,
    pub worst_z: f64,
    pub worst_value: f64,
    pub worst_envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    /// `U(R+z, z) >= C int_R^z e^{-b(z-y)/2} |V(R+y, y)|^p dy`
    pub u_inequality: InequalityCheck,
    /// `V(R+z, z) >= K int_R^z |U(R+y, y)|^q dy`
    pub v_inequality: InequalityCheck,
    pub envelopes: Vec<EnvelopeCheck>,
}

impl FrameReport {
    pub fn passed(&self) -> bool {
        self.u_inequality.passed && self.v_inequality.passed && self.envelopes.iter().all(|e| e.passed)
    }
}

struct Tracker {
    allowance: f64,
    samples: usize,
    worst_margin: f64,
    worst: (f64, f64, f64),
    min_ratio: f64,
}

impl Tracker {
    fn new(allowance: f64) -> Self {
        Self {
            allowance,
            samples: 0,
            worst_margin: f64::INFINITY,
            worst: (f64::NAN, f64::NAN, f64::NAN),
            min_ratio: f64::INFINITY,
        }
    }

    fn add(&mut self, z: f64, lhs: f64, rhs: f64) {
        self.samples += 1;
        let margin = lhs - (1.0 - self.allowance) * rhs;
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
            self.worst = (z, lhs, rhs);
        }
        if rhs > 0.0 {
            self.min_ratio = self.min_ratio.min(lhs / rhs);
        }
    }

    fn finish(self) -> InequalityCheck {
        InequalityCheck {
            samples: self.samples,
            passed: self.samples > 0 && self.worst_margin >= 0.0,
            worst_z: self.worst.0,
            worst_lhs: self.worst.1,
            worst_rhs: self.worst.2,
            min_ratio: self.min_ratio,
        }
    }
}

/// Evaluates both right-hand sides of the iteration frame from a simulated
/// trace (trapezoid rule, with the exponential weight carried recursively)
/// and checks them against the trace, together with the lower-bound
/// envelopes `j = 0..=J` on their slice domains. The caller truncates the
/// trace below the blow-up time.
pub fn verify_iteration_frame(
    trace: &CharacteristicTrace,
    params: &ModelParams,
    frame: &FrameConstants,
    m: f64,
    cfg: &FrameCheckConfig,
) -> Result<FrameReport, ExperimentError> {
    if params.n != 1 {
        return Err(ExperimentError::Config(
            "frame verification is available for n = 1 only".into(),
        ));
    }
    let r = params.r;
    if (trace.r - r).abs() > 1e-12 {
        return Err(ExperimentError::Config(format!(
            "trace line t - x = {} does not match R = {r}",
            trace.r
        )));
    }
    let (p, q, b) = (params.p, params.q, params.b);
    let zs: Vec<f64> = trace.t.iter().map(|t| t - r).collect();
    let first = zs
        .iter()
        .position(|&z| z >= r)
        .ok_or_else(|| ExperimentError::Config(format!("trace never reaches z = R (t = {})", 2.0 * r)))?;
    if first == 0 {
        return Err(ExperimentError::Config("trace must start below z = R".into()));
    }

    let vp = |k: usize| trace.v[k].abs().powf(p);
    let uq = |k: usize| trace.u[k].abs().powf(q);
    // integrands at z = R by linear interpolation
    let w = (r - zs[first - 1]) / (zs[first] - zs[first - 1]);
    let v_r = (1.0 - w) * trace.v[first - 1] + w * trace.v[first];
    let u_r = (1.0 - w) * trace.u[first - 1] + w * trace.u[first];
    let mut prev_z = r;
    let mut prev_fv = v_r.abs().powf(p);
    let mut prev_fu = u_r.abs().powf(q);
    let mut int_u = 0.0; // int e^{-b(z-y)/2} |V|^p
    let mut int_v = 0.0; // int |U|^q

    let mut u_track = Tracker::new(cfg.allowance);
    let mut v_track = Tracker::new(cfg.allowance);
    for k in first..zs.len() {
        let z = zs[k];
        let dz = z - prev_z;
        let decay = (-0.5 * b * dz).exp();
        int_u = decay * int_u + 0.5 * dz * (decay * prev_fv + vp(k));
        int_v += 0.5 * dz * (prev_fu + uq(k));
        u_track.add(z, trace.u[k], frame.c * int_u);
        v_track.add(z, trace.v[k], frame.k * int_v);
        prev_z = z;
        prev_fv = vp(k);
        prev_fu = uq(k);
    }

    let mut envelopes = Vec::new();
    let seqs = if m > 0.0 {
        Some(Sequences::Subcritical(subcritical_sequences(
            params,
            frame,
            m,
            cfg.envelope_j_max,
        )?))
    } else {
        None
    };
    for j in 0..=cfg.envelope_j_max {
        let slice_start = match &seqs {
            Some(Sequences::Subcritical(s)) if j > 0 => s.l(j)? * r,
            _ => r,
        };
        let mut check = EnvelopeCheck {
            j,
            slice_start,
            samples: 0,
            passed: true,
            worst_z: f64::NAN,
            worst_value: f64::NAN,
            worst_envelope: f64::NAN,
        };
        let mut worst_margin = f64::INFINITY;
        for (k, &z) in zs.iter().enumerate() {
            if z < slice_start {
                continue;
            }
            let envelope = match &seqs {
                Some(s) => log_lower_bound_envelope(z, j, s)?.exp(),
                None => 0.0,
            };
            let margin = trace.v[k] - (1.0 - cfg.allowance) * envelope;
            check.samples += 1;
            if margin < worst_margin || margin.is_nan() {
                worst_margin = margin;
                check.worst_z = z;
                check.worst_value = trace.v[k];
                check.worst_envelope = envelope;
            }
        }
        check.passed = check.samples > 0 && worst_margin >= 0.0;
        envelopes.push(check);
    }

    Ok(FrameReport {
        u_inequality: u_track.finish(),
        v_inequality: v_track.finish(),
        envelopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::standard_params;

    fn flat_trace(n: usize, dt: f64, u: f64, v: f64) -> CharacteristicTrace {
        CharacteristicTrace {
            r: 1.0,
            t: (0..n).map(|k| k as f64 * dt).collect(),
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    #[test]
    fn zero_data_holds_with_equality() {
        let params = standard_params(0.1);
        let frame = FrameConstants::n1_pinned(2.0, 2.0, 1.0);
        let trace = flat_trace(200, 0.05, 0.0, 0.0);
        let rep = verify_iteration_frame(&trace, &params, &frame, 0.0, &FrameCheckConfig::default()).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.u_inequality.worst_lhs, 0.0);
        assert_eq!(rep.u_inequality.worst_rhs, 0.0);
    }

    #[test]
    fn integrals_match_closed_form() {
        // constant V = 1, U = 1: int_R^z e^{-b(z-y)/2} dy = (2/b)(1 - e^{-b(z-R)/2})
        let params = standard_params(0.1);
        let frame = FrameConstants::user(1.0, 1.0).unwrap();
        let dt = 0.01;
        let trace = flat_trace(801, dt, 0.0, 1.0);
        let rep = verify_iteration_frame(&trace, &params, &frame, 0.5, &FrameCheckConfig::default()).unwrap();
        let z = rep.u_inequality.worst_z;
        let want = 2.0 * (1.0 - (-(z - 1.0) / 2.0).exp());
        assert!(
            (rep.u_inequality.worst_rhs - want).abs() < 1e-5,
            "{} vs {want}",
            rep.u_inequality.worst_rhs
        );
        assert!(!rep.u_inequality.passed);
    }

    #[test]
    fn detects_violation_of_second_inequality() {
        let params = standard_params(0.1);
        let frame = FrameConstants::user(1.0, 1.0).unwrap();
        let trace = flat_trace(400, 0.05, 1.0, 0.5);
        let rep = verify_iteration_frame(&trace, &params, &frame, 0.25, &FrameCheckConfig::default()).unwrap();
        assert!(!rep.v_inequality.passed);
        assert!(rep.v_inequality.worst_rhs > rep.v_inequality.worst_lhs);
    }

    #[test]
    fn rejects_short_trace_and_higher_dimension() {
        let frame = FrameConstants::n1_pinned(2.0, 2.0, 1.0);
        let trace = flat_trace(10, 0.1, 0.0, 0.0);
        assert!(verify_iteration_frame(&trace, &standard_params(0.1), &frame, 0.0, &Default::default()).is_err());
        let p2 = ModelParams::new(2, 2.0, 2.0, 1.0, 0.0, 1.0, 0.1).unwrap();
        let trace = flat_trace(100, 0.1, 0.0, 0.0);
        assert!(verify_iteration_frame(&trace, &p2, &frame, 0.0, &Default::default()).is_err());
    }
}
