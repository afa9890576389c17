//! Experiment harness: epsilon sweeps, lifespan scaling fits, checks of the
//! iteration frame against simulated traces, verification suites and report
//! files.

mod fit;
mod frame;
mod report;
pub mod suites;
mod sweep;

use thiserror::Error;

pub use fit::{fit_critical_law, fit_power_law, FitKind, FitResult};
pub use frame::{verify_iteration_frame, EnvelopeCheck, FrameCheckConfig, FrameReport, InequalityCheck};
pub use report::{emit_report, Report, ReportPaths};
pub use sweep::{run_sweep, sweep_checks, BaseModel, EpsLadder, FrameInput, SweepConfig, SweepRecord, DEFAULT_RATIO};

use crate::fd_sim::{ModelParams, NumericsConfig, SimError};
use crate::iteration::IterationError;
use crate::kernel_ops::KernelError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fit needs at least {needed} usable records, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("nothing to report: the record list is empty")]
    EmptyRecords,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Iteration(#[from] IterationError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("serialization error: {0}")]
    Serialize(String),
}

/// `n = 1, p = q = 2, b = 1, m^2 = 0, R = 1`.
pub fn standard_params(eps: f64) -> ModelParams {
    ModelParams::new(1, 2.0, 2.0, 1.0, 0.0, 1.0, eps).expect("standard parameters are valid")
}

/// Resolution used for the standard blow-up runs.
pub fn standard_numerics(t_max: f64) -> NumericsConfig {
    NumericsConfig {
        hx: 0.04,
        cfl: 0.5,
        t_max,
        ..Default::default()
    }
}

/// The subcritical acceptance sweep: the standard model, v1-only data, six
/// values `sqrt(2) (1/sqrt(2))^k` at `hx = 0.02`. The smallest value blows up
/// near `t = 400`, which keeps the sweep at desk scale.
pub fn standard_sweep_config() -> SweepConfig {
    SweepConfig {
        model: BaseModel {
            n: 1,
            p: 2.0,
            q: 2.0,
            b: 1.0,
            m2: 0.0,
            r: 1.0,
        },
        ladder: EpsLadder {
            eps_start: std::f64::consts::SQRT_2,
            ratio: DEFAULT_RATIO,
            count: 6,
        },
        numerics: NumericsConfig {
            hx: 0.02,
            cfl: 0.5,
            t_max: 1500.0,
            ..Default::default()
        },
        data: None,
        frame: None,
        output_dir: None,
        seed: 0,
        t_cap: 1e4,
        workers: None,
    }
}

/// Everything a finished sweep produced.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub fits: Vec<FitResult>,
    pub checks: Vec<crate::iteration::CheckOutcome>,
    pub paths: ReportPaths,
}

impl SweepOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the sweep, fits the scaling law matching the criticality class,
/// evaluates the sweep checks and writes the report files into `out_dir`.
pub fn sweep_and_report(config: &SweepConfig, out_dir: &std::path::Path) -> Result<SweepOutcome, ExperimentError> {
    let records = run_sweep(config)?;
    let th = crate::iteration::theta(config.model.n, config.model.p, config.model.q)?;
    let fit = if th.class == crate::iteration::CriticalityClass::Critical {
        fit_critical_law(&records, config.model.p * config.model.q)
    } else {
        fit_power_law(&records)
    };
    let (fits, fit_error) = match fit {
        Ok(f) => (vec![f], None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let mut checks = sweep_checks(&records, fits.first(), &config.model);
    if let Some(why) = fit_error {
        checks.push(crate::iteration::CheckOutcome {
            name: "scaling fit".into(),
            passed: false,
            max_error: 0.0,
            detail: why,
        });
    }
    let paths = emit_report(&records, &fits, &checks, config, out_dir)?;
    Ok(SweepOutcome {
        records,
        fits,
        checks,
        paths,
    })
}
