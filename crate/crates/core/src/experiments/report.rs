use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, FitKind, FitResult, SweepConfig, SweepRecord};
use crate::iteration::{theta, CheckOutcome};

/// Contents of `report.json`. Field order is the key order on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub config: SweepConfig,
    pub theta: f64,
    /// `-1/theta` when `theta > 0`.
    pub theoretical_slope: Option<f64>,
    pub records: Vec<SweepRecord>,
    pub fits: Vec<FitResult>,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPaths {
    pub sweep_csv: PathBuf,
    pub report_json: PathBuf,
    pub plot_script: PathBuf,
}

pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SweepRecord::csv_header());
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn plot_script(fit: Option<&FitResult>, theoretical_slope: Option<f64>, records: &[SweepRecord]) -> String {
    let mut s = String::new();
    s.push_str("# gnuplot script: log T_num against log eps\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set key top right\n");
    s.push_str("set xlabel 'ln eps'\nset ylabel 'ln T_num'\n");
    s.push_str("set terminal pngcairo size 800,600\nset output 'lifespan.png'\n");
    let mut plots =
        vec!["'sweep.csv' skip 1 using (log($1)):(log($2)) with points pt 7 title 'simulation'".to_string()];
    if let Some(f) = fit.filter(|f| f.kind == FitKind::PowerLaw) {
        s.push_str(&format!("fit_a = {}\nfit_s = {}\n", f.intercept, f.slope));
        plots.push("fit_a + fit_s * x with lines title sprintf('fit, slope %.3f', fit_s)".into());
    }
    if let Some(slope) = theoretical_slope {
        // reference line through the centroid of the data
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter_map(|r| r.t_num.map(|t| (r.eps.ln(), t.ln())))
            .collect();
        if !pts.is_empty() {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            s.push_str(&format!("ref_s = {slope}\nref_a = {}\n", my - slope * mx));
            plots
                .push("ref_a + ref_s * x with lines dt 2 title sprintf('slope %.3f (upper-bound rate)', ref_s)".into());
        }
    }
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `sweep.csv`, `report.json` and `plot.gp` into `out_dir`. All three
/// are rendered first and moved into place together, so a failure leaves no
/// partial report behind.
pub fn emit_report(
    records: &[SweepRecord],
    fits: &[FitResult],
    checks: &[CheckOutcome],
    config: &SweepConfig,
    out_dir: &Path,
) -> Result<ReportPaths, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::EmptyRecords);
    }
    let th = theta(config.model.n, config.model.p, config.model.q)?;
    let theoretical_slope = (th.value > 0.0).then(|| -1.0 / th.value);
    let report = Report {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        theta: th.value,
        theoretical_slope,
        records: records.to_vec(),
        fits: fits.to_vec(),
        checks: checks.to_vec(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| ExperimentError::Serialize(e.to_string()))?;
    let csv = sweep_csv(records);
    let plot = plot_script(fits.first(), theoretical_slope, records);

    fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let paths = ReportPaths {
        sweep_csv: out_dir.join("sweep.csv"),
        report_json: out_dir.join("report.json"),
        plot_script: out_dir.join("plot.gp"),
    };
    let staged = [
        (&paths.sweep_csv, csv),
        (&paths.report_json, json),
        (&paths.plot_script, plot),
    ];
    let tmp: Vec<PathBuf> = staged.iter().map(|(p, _)| p.with_extension("tmp")).collect();
    let cleanup = |tmp: &[PathBuf]| {
        for t in tmp {
            let _ = fs::remove_file(t);
        }
    };
    for ((_, contents), t) in staged.iter().zip(&tmp) {
        if let Err(e) = write(t, contents) {
            cleanup(&tmp);
            return Err(e);
        }
    }
    for ((dest, _), t) in staged.iter().zip(&tmp) {
        if let Err(source) = fs::rename(t, dest) {
            cleanup(&tmp);
            return Err(ExperimentError::Io {
                path: dest.display().to_string(),
                source,
            });
        }
    }
    Ok(paths)
}
