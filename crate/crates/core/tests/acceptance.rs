//! Acceptance suite: one pass/fail line per criterion, run sequentially so the
//! wall-clock limits are measured without competing tests.
//! `cargo test --test acceptance -- --nocapture` shows the lines.

use std::fs;
use std::time::{Duration, Instant};

use blowup_lab::experiments::suites::{
    bessel_suite, closed_form_suite, cross_validation_error, frame_suite, residual_order_study, stationary_deviation,
};
use blowup_lab::experiments::{standard_sweep_config, sweep_and_report};
use blowup_lab::iteration::theta;
use blowup_lab::kernel_ops::LinearParams;

struct Criterion {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn run(id: u32, name: &'static str, limit: Duration, body: impl FnOnce() -> (bool, String)) -> Criterion {
    let start = Instant::now();
    let (ok, detail) = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let c = Criterion {
        id,
        name,
        passed: ok && in_time,
        detail: format!(
            "{detail}; {:.2}s of {}s{}",
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { " (too slow)" }
        ),
    };
    println!(
        "criterion {} [{}] {}: {}",
        c.id,
        if c.passed { "PASS" } else { "FAIL" },
        c.name,
        c.detail
    );
    c
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();

    results.push(run(1, "special functions", secs(1), || {
        let checks = bessel_suite(20_240_601);
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        (
            failed.is_empty(),
            if failed.is_empty() {
                format!("{} checks", checks.len())
            } else {
                failed.join("; ")
            },
        )
    }));

    results.push(run(2, "exact linear solver convergence order", secs(60), || {
        let mut ok = true;
        let mut detail = Vec::new();
        for (b, m2) in [(1.0, 0.0), (2.0, 1.0), (1.0, 1.0)] {
            match residual_order_study(&LinearParams::new(b, m2).unwrap()) {
                Ok(s) => {
                    ok &= s.orders.iter().all(|o| (1.5..=2.5).contains(o));
                    detail.push(format!("({b},{m2}) orders {:.3?}", s.orders));
                }
                Err(e) => {
                    ok = false;
                    detail.push(format!("({b},{m2}) error {e}"));
                }
            }
        }
        (ok, detail.join(", "))
    }));

    results.push(run(3, "operator/simulator cross-validation", secs(60), || {
        match (cross_validation_error(0.02), cross_validation_error(0.01)) {
            (Ok(mid), Ok(fine)) => (
                mid <= 1e-3 && fine < mid,
                format!("max error {mid:.3e} at hx 0.02, {fine:.3e} at hx 0.01"),
            ),
            (a, b) => (false, format!("{a:?} {b:?}")),
        }
    }));

    results.push(run(4, "stationary solution", secs(5), || {
        match stationary_deviation(0.7) {
            Ok(d) => (d <= 1e-8, format!("max |phi - c| = {d:.3e}")),
            Err(e) => (false, e.to_string()),
        }
    }));

    results.push(run(
        5,
        "closed forms and identities",
        secs(1),
        || match closed_form_suite(0.3) {
            Ok(rep) => {
                let failed: Vec<String> = rep
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| format!("{}: {}", c.name, c.detail))
                    .collect();
                (
                    rep.passed(),
                    if failed.is_empty() {
                        format!("{} checks", rep.checks.len())
                    } else {
                        failed.join("; ")
                    },
                )
            }
            Err(e) => (false, e.to_string()),
        },
    ));

    let mut frame = None;
    results.push(run(
        6,
        "first lower bound on the standard run",
        secs(120),
        || match frame_suite(0.3, 600.0) {
            Ok(s) => {
                let lb = s.lower_bound;
                let ok = s.t_num.is_some() && lb.passed;
                let detail = format!(
                    "T_num {:?}, {} samples, min V {:.6} vs 0.95 M eps = {:.6}",
                    s.t_num,
                    lb.samples,
                    lb.worst_value,
                    0.95 * lb.bound
                );
                frame = Some(s);
                (ok, detail)
            }
            Err(e) => (false, e.to_string()),
        },
    ));

    // reuses the run from criterion 6; the frame evaluation itself is cheap
    results.push(run(
        7,
        "iteration frame and envelopes j = 0..5",
        secs(120),
        || match &frame {
            Some(s) => {
                let f = &s.frame;
                let envs = f.envelopes.iter().filter(|e| e.passed).count();
                (
                    s.t_num.is_some() && f.passed() && f.envelopes.len() == 6,
                    format!(
                        "min lhs/rhs {:.3} (U), {:.3} (V); envelopes passing {envs}/{}",
                        f.u_inequality.min_ratio,
                        f.v_inequality.min_ratio,
                        f.envelopes.len()
                    ),
                )
            }
            None => (false, "standard run unavailable".into()),
        },
    ));

    let dir = tempfile::tempdir().unwrap();
    let config = standard_sweep_config();
    let mut first_csv = None;
    results.push(run(
        8,
        "blow-up and lifespan consistency sweep",
        secs(15 * 60),
        || match sweep_and_report(&config, &dir.path().join("first")) {
            Ok(out) => {
                let th = theta(1, 2.0, 2.0).unwrap().value;
                let slope = out.fits.first().map(|f| f.slope);
                let failed: Vec<String> = out
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| format!("{}: {}", c.name, c.detail))
                    .collect();
                let ts: Vec<String> = out
                    .records
                    .iter()
                    .map(|r| format!("{:.3}:{}", r.eps, r.t_num.map_or("-".into(), |t| format!("{t:.2}"))))
                    .collect();
                first_csv = Some(fs::read(&out.paths.sweep_csv).unwrap());
                (
                    out.passed() && slope.is_some(),
                    format!(
                        "T_num [{}]; fitted slope {:?} vs theoretical {:.3}{}",
                        ts.join(" "),
                        slope,
                        -1.0 / th,
                        if failed.is_empty() {
                            String::new()
                        } else {
                            format!("; failed: {}", failed.join("; "))
                        }
                    ),
                )
            }
            Err(e) => (false, e.to_string()),
        },
    ));

    results.push(run(9, "sweep determinism", secs(15 * 60), || {
        match (sweep_and_report(&config, &dir.path().join("second")), &first_csv) {
            (Ok(out), Some(first)) => {
                let second = fs::read(&out.paths.sweep_csv).unwrap();
                (
                    &second == first,
                    format!("sweep.csv {} bytes, identical: {}", second.len(), &second == first),
                )
            }
            (Err(e), _) => (false, e.to_string()),
            (_, None) => (false, "first sweep unavailable".into()),
        }
    }));

    let failed: Vec<u32> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    println!(
        "acceptance: {}/{} criteria pass",
        results.len() - failed.len(),
        results.len()
    );
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
