use serde::{Deserialize, Serialize};

use super::{ExperimentError, SweepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `ln T = a + s ln eps`
    PowerLaw,
    /// `ln T = a + c eps^{-(pq-1)}`
    CriticalLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub intercept: f64,
    /// `s` for the power law, `c` for the critical law.
    pub slope: f64,
    pub residual_rms: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub points: usize,
}

const MIN_POINTS: usize = 4;

fn usable(records: &[SweepRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| r.blew_up)
        .filter_map(|r| r.t_num.map(|t| (r.eps, t)))
        .filter(|(e, t)| *e > 0.0 && *t > 0.0)
        .collect()
}

/// Ordinary least squares for `y = a + s x`; returns `(a, s, rms)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let s = sxy / sxx;
    let a = my - s * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - s * x).powi(2)).sum();
    (a, s, (rss / n).sqrt())
}

fn fit(records: &[SweepRecord], kind: FitKind, transform: impl Fn(f64) -> f64) -> Result<FitResult, ExperimentError> {
    let pts = usable(records);
    if pts.len() < MIN_POINTS {
        return Err(ExperimentError::TooFewPoints {
            needed: MIN_POINTS,
            got: pts.len(),
        });
    }
    let xs: Vec<f64> = pts.iter().map(|(e, _)| transform(*e)).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, t)| t.ln()).collect();
    if xs.iter().all(|x| *x == xs[0]) {
        return Err(ExperimentError::Config(
            "fit needs at least two distinct eps values".into(),
        ));
    }
    let (intercept, slope, residual_rms) = least_squares(&xs, &ys);
    Ok(FitResult {
        kind,
        intercept,
        slope,
        residual_rms,
        eps_min: pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        eps_max: pts.iter().map(|p| p.0).fold(0.0, f64::max),
        points: pts.len(),
    })
}

pub fn fit_power_law(records: &[SweepRecord]) -> Result<FitResult, ExperimentError> {
    fit(records, FitKind::PowerLaw, f64::ln)
}

pub fn fit_critical_law(records: &[SweepRecord], pq: f64) -> Result<FitResult, ExperimentError> {
    if !(pq > 1.0) {
        return Err(ExperimentError::Config(format!("pq = {pq} must exceed 1")));
    }
    fit(records, FitKind::CriticalLaw, |e| e.powf(-(pq - 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(pairs: &[(f64, f64)]) -> Vec<SweepRecord> {
        pairs
            .iter()
            .map(|&(eps, t)| SweepRecord::synthetic(eps, Some(t)))
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let recs = records(&[(0.5, 8.0), (0.25, 64.0), (0.2, 125.0), (0.1, 1000.0)]);
        let f = fit_power_law(&recs).unwrap();
        assert!((f.slope + 3.0).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-12);
        assert!(f.residual_rms < 1e-12);
        assert_eq!(f.points, 4);
    }

    #[test]
    fn noisy_power_law() {
        let noise = [0.01, -0.01, 0.005, -0.008, 0.0, 0.01];
        let recs: Vec<SweepRecord> = (0..6)
            .map(|k| {
                let eps = 0.8 * 0.7_f64.powi(k);
                SweepRecord::synthetic(eps, Some(2.0 * eps.powf(-3.0) * (1.0 + noise[k as usize])))
            })
            .collect();
        let f = fit_power_law(&recs).unwrap();
        assert!((-3.1..=-2.9).contains(&f.slope), "{}", f.slope);
    }

    #[test]
    fn exact_critical_law() {
        let recs: Vec<SweepRecord> = [0.5, 0.4, 0.3, 0.25]
            .iter()
            .map(|&e: &f64| SweepRecord::synthetic(e, Some((1.0 / e).exp())))
            .collect();
        let f = fit_critical_law(&recs, 2.0).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.residual_rms < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let mut recs = records(&[(0.5, 8.0), (0.25, 64.0), (0.2, 125.0), (0.1, 1000.0)]);
        recs[3].blew_up = false;
        recs[3].t_num = None;
        assert!(matches!(
            fit_power_law(&recs),
            Err(ExperimentError::TooFewPoints { needed: 4, got: 3 })
        ));
    }
}
