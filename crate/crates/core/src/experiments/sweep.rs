use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExperimentError, FitResult};
use crate::fd_sim::{make_blowup_data, simulate_data, InitialDataSpec, ModelParams, NumericsConfig, Trigger};
use crate::iteration::{lifespan_bound, theta, CheckOutcome, FrameConstants, Sequences};

pub const DEFAULT_RATIO: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Model constants without the data amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseModel {
    pub n: u32,
    pub p: f64,
    pub q: f64,
    pub b: f64,
    pub m2: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl BaseModel {
    pub fn with_eps(&self, eps: f64) -> Result<ModelParams, ExperimentError> {
        Ok(ModelParams::new(self.n, self.p, self.q, self.b, self.m2, self.r, eps)?)
    }
}

fn default_ratio() -> f64 {
    DEFAULT_RATIO
}

fn default_count() -> usize {
    6
}

/// Geometric ladder `eps_start * ratio^k`, `k < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsLadder {
    pub eps_start: f64,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default = "default_count")]
    pub count: usize,
}

impl EpsLadder {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.eps_start * self.ratio.powi(k as i32))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameInput {
    pub c: f64,
    pub k: f64,
}

fn default_t_cap() -> f64 {
    1e4
}

/// Sweep description, read from TOML:
///
/// ```toml
/// seed = 7                # echoed into the report
/// t_cap = 10000.0         # runtime cap on T_max
///
/// [model]
/// n = 1
/// p = 2.0
/// q = 2.0
/// b = 1.0
/// m2 = 0.0
/// R = 1.0
///
/// [ladder]
/// eps_start = 1.0
/// ratio = 0.7071067811865476   # default 1/sqrt(2)
/// count = 6                    # default 6, at least 4
///
/// [numerics]              # every key optional
/// hx = 0.04
/// cfl = 0.5
/// t_max = 3000.0
///
/// [data]                  # optional; default v1 = (1 - x^2)^3_+ only
/// amplitudes = [0.0, 0.0, 0.0, 1.0]
/// radius = 1.0
///
/// [frame]                 # required for n >= 2
/// c = 0.25
/// k = 0.25
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: BaseModel,
    pub ladder: EpsLadder,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<InitialDataSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_t_cap")]
    pub t_cap: f64,
    /// Worker cap; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, ExperimentError> {
        toml::to_string(self).map_err(|e| ExperimentError::Serialize(e.to_string()))
    }

    pub fn data_spec(&self) -> InitialDataSpec {
        self.data.unwrap_or_else(|| InitialDataSpec::v1_only(self.model.r))
    }

    pub fn frame_constants(&self) -> Result<FrameConstants, ExperimentError> {
        match self.frame {
            Some(f) => Ok(FrameConstants::user(f.c, f.k)?),
            None => Ok(FrameConstants::default_for(&self.model.with_eps(1.0)?)?),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let l = &self.ladder;
        if !(l.ratio > 0.0 && l.ratio < 1.0) {
            return Err(ExperimentError::Config(format!(
                "ladder ratio {} must lie in (0, 1)",
                l.ratio
            )));
        }
        if l.count < 4 {
            return Err(ExperimentError::Config(format!(
                "ladder count {} must be at least 4",
                l.count
            )));
        }
        if !(l.eps_start > 0.0 && l.eps_start.is_finite()) {
            return Err(ExperimentError::Config("eps_start must be positive".into()));
        }
        let params = self.model.with_eps(l.eps_start)?;
        params.check_blowup_hypotheses()?;
        let data = make_blowup_data(&self.data_spec(), &params)?;
        let frame = self.frame_constants()?;
        let seqs = Sequences::build(&params, &frame, data.m, 0)?;
        let bound = lifespan_bound(l.eps_start, &seqs)?;
        if bound.bound.is_finite() && bound.bound < self.t_cap && self.numerics.t_max < bound.bound {
            return Err(ExperimentError::Config(format!(
                "t_max = {} does not exceed the lifespan bound {} at eps_start",
                self.numerics.t_max, bound.bound
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub t_num: Option<f64>,
    pub blew_up: bool,
    pub trigger: Option<Trigger>,
    /// Absent when the bound overflows; its logarithm is always kept.
    pub lifespan_bound: Option<f64>,
    pub ln_lifespan_bound: Option<f64>,
    /// Absent when no smallness condition applies.
    pub eps0: Option<f64>,
    /// `eps > eps0`: the bound is reported outside its hypotheses.
    pub bound_warning: bool,
    pub threshold_insensitive: bool,
    pub hx: f64,
    pub ht: f64,
    /// `T_num` exceeds the lifespan bound although `eps <= eps0`.
    pub contract_violation: bool,
    pub error: Option<String>,
}

impl SweepRecord {
    /// Record carrying only an `(eps, T)` pair, for fits on generated data.
    pub fn synthetic(eps: f64, t_num: Option<f64>) -> Self {
        Self {
            eps,
            t_num,
            blew_up: t_num.is_some(),
            trigger: None,
            lifespan_bound: None,
            ln_lifespan_bound: None,
            eps0: None,
            bound_warning: false,
            threshold_insensitive: true,
            hx: 0.0,
            ht: 0.0,
            contract_violation: false,
            error: None,
        }
    }

    pub fn csv_header() -> &'static str {
        "eps,T_num,blew_up,lifespan_bound,ln_lifespan_bound,eps0,bound_warning,threshold_insensitive,hx,ht,contract_violation,error"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let error = self.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.eps,
            opt(self.t_num),
            self.blew_up,
            opt(self.lifespan_bound),
            opt(self.ln_lifespan_bound),
            opt(self.eps0),
            self.bound_warning,
            self.threshold_insensitive,
            self.hx,
            self.ht,
            self.contract_violation,
            error
        )
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn run_one(config: &SweepConfig, frame: &FrameConstants, eps: f64) -> SweepRecord {
    let mut record = SweepRecord::synthetic(eps, None);
    record.threshold_insensitive = false;
    let outcome = (|| -> Result<(), ExperimentError> {
        let params = config.model.with_eps(eps)?;
        let data = make_blowup_data(&config.data_spec(), &params)?;
        let seqs = Sequences::build(&params, frame, data.m, 0)?;
        let bound = lifespan_bound(eps, &seqs)?;
        record.lifespan_bound = finite(bound.bound);
        record.ln_lifespan_bound = finite(bound.ln_bound);
        record.eps0 = finite(bound.eps0);
        record.bound_warning = bound.warning;

        let sim = simulate_data(&params, &data, &config.numerics)?;
        let rep = &sim.report;
        record.hx = rep.h_x;
        record.ht = rep.h_t;
        record.blew_up = rep.blowup.blew_up;
        record.t_num = rep.blowup.t_num;
        record.trigger = rep.blowup.trigger;
        record.threshold_insensitive = rep.threshold_insensitive;
        if let Some(t) = record.t_num {
            record.contract_violation = !bound.warning && t.ln() > bound.ln_bound;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        record.error = Some(e.to_string());
    }
    record
}

/// One simulation per ladder value. Runs are independent and single-threaded;
/// per-run failures are recorded, never propagated.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>, ExperimentError> {
    config.validate()?;
    let frame = config.frame_constants()?;
    let eps_values = config.ladder.values();
    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let mut records: Vec<SweepRecord> =
        pool.install(|| eps_values.par_iter().map(|&eps| run_one(config, &frame, eps)).collect());
    records.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    Ok(records)
}

/// Acceptance-style checks over a finished sweep: every run blew up with a
/// threshold-insensitive time, `T_num` is nonincreasing in eps, the lifespan
/// bound holds, and the fitted slope is compatible with `-1/theta`.
pub fn sweep_checks(records: &[SweepRecord], fit: Option<&FitResult>, model: &BaseModel) -> Vec<CheckOutcome> {
    let mut checks = Vec::new();
    let failed: Vec<String> = records
        .iter()
        .filter(|r| !r.blew_up || r.error.is_some())
        .map(|r| format!("eps={} error={:?}", r.eps, r.error))
        .collect();
    checks.push(CheckOutcome {
        name: "every run blows up".into(),
        passed: failed.is_empty() && !records.is_empty(),
        max_error: failed.len() as f64,
        detail: if failed.is_empty() {
            format!("{} runs", records.len())
        } else {
            failed.join("; ")
        },
    });

    let sensitive: Vec<f64> = records
        .iter()
        .filter(|r| !r.threshold_insensitive)
        .map(|r| r.eps)
        .collect();
    checks.push(CheckOutcome {
        name: "blow-up time threshold-insensitive (2%)".into(),
        passed: sensitive.is_empty(),
        max_error: sensitive.len() as f64,
        detail: format!("resolution-limited eps: {sensitive:?}"),
    });

    let mut worst_drop = 0.0_f64;
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    for w in sorted.windows(2) {
        if let (Some(t_big_eps), Some(t_small_eps)) = (w[0].t_num, w[1].t_num) {
            worst_drop = worst_drop.max(t_big_eps - t_small_eps);
        }
    }
    checks.push(CheckOutcome {
        name: "T_num nonincreasing in eps".into(),
        passed: worst_drop <= 0.0,
        max_error: worst_drop,
        detail: format!("largest increase of T_num with eps: {worst_drop}"),
    });

    // within the hypotheses every record counts; if all ladder values exceed
    // eps0 the two smallest eps are still compared against the bound
    let in_scope: Vec<&SweepRecord> = records.iter().filter(|r| !r.bound_warning).collect();
    let compared: Vec<&SweepRecord> = if in_scope.is_empty() {
        sorted.iter().rev().take(2).copied().collect()
    } else {
        in_scope
    };
    let mut worst_excess = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for r in &compared {
        if let (Some(t), Some(lb)) = (r.t_num, r.ln_lifespan_bound) {
            let excess = t.ln() - lb;
            worst_excess = worst_excess.max(excess);
            if excess > 0.0 {
                violations.push(r.eps);
            }
        }
    }
    checks.push(CheckOutcome {
        name: "T_num <= lifespan bound".into(),
        passed: violations.is_empty() && !compared.is_empty(),
        max_error: worst_excess.max(0.0),
        detail: format!(
            "{} records compared{}; largest ln(T_num / bound) = {worst_excess:.4}",
            compared.len(),
            if records.iter().all(|r| r.bound_warning) {
                " (all eps above eps0: warning)"
            } else {
                ""
            }
        ),
    });

    if let (Some(fit), Ok(th)) = (fit, theta(model.n, model.p, model.q)) {
        if th.value > 0.0 {
            let limit = 1.0 / th.value + 0.5;
            checks.push(CheckOutcome {
                name: "fitted slope within |s| <= 1/theta + 0.5".into(),
                passed: fit.slope <= 0.0 && fit.slope.abs() <= limit,
                max_error: (fit.slope.abs() - limit).max(0.0),
                detail: format!("s = {:.4}, theoretical -1/theta = {:.4}", fit.slope, -1.0 / th.value),
            });
        }
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 3

[model]
n = 1
p = 2.0
q = 2.0
b = 1.0
m2 = 0.0
R = 1.0

[ladder]
eps_start = 1.0
count = 4

[numerics]
hx = 0.04
t_max = 300.0
"#;

    #[test]
    fn parse_and_defaults() {
        let cfg = SweepConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(cfg.ladder.ratio, DEFAULT_RATIO);
        assert_eq!(cfg.numerics.cfl, 0.5);
        assert_eq!(cfg.t_cap, 1e4);
        assert_eq!(cfg.data_spec().amplitudes, [0.0, 0.0, 0.0, 1.0]);
        cfg.validate().unwrap();
        let values = cfg.ladder.values();
        assert_eq!(values.len(), 4);
        assert!((values[2] - 0.5).abs() < 1e-15);
        let back = SweepConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_ladders() {
        let mut cfg = SweepConfig::from_toml(EXAMPLE).unwrap();
        cfg.ladder.ratio = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::from_toml(EXAMPLE).unwrap();
        cfg.ladder.count = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::from_toml(EXAMPLE).unwrap();
        cfg.model.m2 = 1.0;
        assert!(cfg.validate().is_err());
        assert!(SweepConfig::from_toml("[model]\nn = 1").is_err());
    }

    #[test]
    fn t_max_must_exceed_a_small_bound() {
        let mut cfg = SweepConfig::from_toml(EXAMPLE).unwrap();
        // large frame constants shrink the bound below the runtime cap
        cfg.frame = Some(FrameInput { c: 10.0, k: 10.0 });
        let params = cfg.model.with_eps(1.0).unwrap();
        let data = make_blowup_data(&cfg.data_spec(), &params).unwrap();
        let seqs = Sequences::build(&params, &cfg.frame_constants().unwrap(), data.m, 0).unwrap();
        let bound = lifespan_bound(1.0, &seqs).unwrap().bound;
        assert!(bound < cfg.t_cap, "{bound}");
        cfg.numerics.t_max = 0.5 * bound;
        assert!(matches!(cfg.validate(), Err(ExperimentError::Config(_))));
        cfg.numerics.t_max = 2.0 * bound;
        cfg.validate().unwrap();
    }

    #[test]
    fn contract_violation_is_flagged() {
        let recs = vec![
            SweepRecord {
                ln_lifespan_bound: Some(1.0),
                ..SweepRecord::synthetic(0.5, Some(10.0))
            },
            SweepRecord {
                ln_lifespan_bound: Some(10.0),
                ..SweepRecord::synthetic(0.4, Some(20.0))
            },
        ];
        let model = BaseModel {
            n: 1,
            p: 2.0,
            q: 2.0,
            b: 1.0,
            m2: 0.0,
            r: 1.0,
        };
        let checks = sweep_checks(&recs, None, &model);
        let bound = checks.iter().find(|c| c.name.contains("bound")).unwrap();
        assert!(!bound.passed);
        let mono = checks.iter().find(|c| c.name.contains("nonincreasing")).unwrap();
        assert!(mono.passed);
    }

    #[test]
    fn csv_row_shape() {
        let r = SweepRecord::synthetic(0.5, Some(12.5));
        assert_eq!(
            r.csv_row().split(',').count(),
            SweepRecord::csv_header().split(',').count()
        );
    }
}
