//! Verification suites shared by the `verify` subcommand and the test suite.
//! Each returns named pass/fail outcomes instead of panicking.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use super::{
    standard_numerics, standard_params, verify_iteration_frame, ExperimentError, FrameCheckConfig, FrameReport,
};
use crate::fd_sim::{
    first_lower_bound_check, make_blowup_data, make_initial_data, simulate_data, InitialData, InitialDataSpec,
    LowerBoundCheck, ModelParams, NumericsConfig, ProfileFamily, SimulationResult,
};
use crate::iteration::{verify_closed_forms, CheckOutcome, ClosedFormConfig, ClosedFormReport, FrameConstants};
use crate::kernel_ops::{
    classify_regime, pde_residual, solve_linear_ivp, DampingRegime, GridSpec, LinearParams, Profile, QuadratureConfig,
    SourceFn,
};
use crate::special_fn::{bessel_i0, bessel_i1, bessel_j0, i1_over_z};

/// Step of the finite-difference derivatives in the Bessel ODE residuals.
const ODE_STEP: f64 = 1e-2;

/// Fourth-order central first and second derivatives of an even function.
fn even_derivatives(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64, f64) {
    let h = ODE_STEP;
    let v = |s: f64| f(s.abs());
    let (m2, m1, c, p1, p2) = (v(x - 2.0 * h), v(x - h), v(x), v(x + h), v(x + 2.0 * h));
    let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let d2 = (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h);
    (c, d1, d2)
}

/// Relative residual of `x y'' + y' - x y = 0` for `y = I0`, derivatives by
/// finite differences of the evaluator itself.
pub fn i0_ode_residual(x: f64) -> f64 {
    let (y, d1, d2) = even_derivatives(|s| bessel_i0(s).unwrap(), x);
    (x * d2 + d1 - x * y).abs() / (x * d2.abs() + d1.abs() + x * y.abs())
}

/// Relative residual of `x y'' + y' + x y = 0` for `y = J0`.
pub fn j0_ode_residual(x: f64) -> f64 {
    let (y, d1, d2) = even_derivatives(|s| bessel_j0(s).unwrap(), x);
    (x * d2 + d1 + x * y).abs() / (x * d2.abs() + d1.abs() + x * y.abs())
}

pub fn bessel_suite(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = StdRng::seed_from_u64(seed);
    let points: Vec<f64> = (0..100).map(|_| 30.0 * (1.0 - rng.random_range(0.0..1.0))).collect();
    let mut checks = Vec::new();
    for (name, residual) in [
        (
            "I0 ODE residual <= 1e-8 on 100 random points",
            i0_ode_residual as fn(f64) -> f64,
        ),
        ("J0 ODE residual <= 1e-8 on 100 random points", j0_ode_residual),
    ] {
        let (worst, at) = points
            .iter()
            .map(|&x| (residual(x), x))
            .fold(
                (0.0_f64, f64::NAN),
                |acc, r| if r.0 > acc.0 || r.0.is_nan() { r } else { acc },
            );
        checks.push(CheckOutcome {
            name: name.into(),
            passed: worst <= 1e-8,
            max_error: worst,
            detail: format!("worst at x = {at:.6}, seed {seed}"),
        });
    }

    let origin_exact = bessel_i0(0.0) == Ok(1.0) && i1_over_z(0.0) == Ok(0.5);
    checks.push(CheckOutcome {
        name: "I0(0) = 1 and I1(x)/x -> 1/2 exactly at 0".into(),
        passed: origin_exact,
        max_error: 0.0,
        detail: format!("I0(0) = {:?}, I1(0)/0 = {:?}", bessel_i0(0.0), i1_over_z(0.0)),
    });

    let mut worst_i0 = f64::INFINITY;
    let mut worst_i1 = f64::INFINITY;
    for k in 0..1000 {
        let x = 30.0 * k as f64 / 999.0;
        worst_i0 = worst_i0.min(bessel_i0(x).unwrap() - 1.0);
        worst_i1 = worst_i1.min(bessel_i1(x).unwrap() - 0.5 * x);
    }
    checks.push(CheckOutcome {
        name: "I0 >= 1 and I1(x) >= x/2 on a 1000-point grid of [0, 30]".into(),
        passed: worst_i0 >= 0.0 && worst_i1 >= 0.0,
        max_error: (-worst_i0.min(worst_i1)).max(0.0),
        detail: format!("min(I0 - 1) = {worst_i0:e}, min(I1 - x/2) = {worst_i1:e}"),
    });
    checks
}

/// Quadrature settings for the residual studies: tight enough that the
/// quadrature error stays far below the stencil truncation error.
pub fn study_quadrature() -> QuadratureConfig {
    QuadratureConfig {
        panels_per_unit: 16,
        gl_order: 10,
        duhamel_steps_per_unit: 64,
        refine_tol: Some(1e-12),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub regime: DampingRegime,
    pub spacings: Vec<f64>,
    pub residuals: Vec<f64>,
    pub orders: Vec<f64>,
}

/// Residual of the exact linear solution under the centered stencil, at
/// spacings `h, h/2, h/4`, with `C^5` bump data.
pub fn residual_order_study(params: &LinearParams) -> Result<OrderStudy, ExperimentError> {
    let f = Profile::poly_bump(0.0, 1.0, 1.0, 6);
    let g = Profile::poly_bump(0.2, 0.8, 0.5, 6);
    let source = SourceFn::zero();
    let mut grid = GridSpec {
        t_centers: vec![0.6, 1.2, 1.8],
        x_centers: vec![-1.5, -0.75, 0.0, 0.4, 1.1, 1.9],
        h_t: 0.1,
        h_x: 0.1,
    };
    let q = study_quadrature();
    let mut spacings = Vec::new();
    let mut residuals = Vec::new();
    for _ in 0..3 {
        spacings.push(grid.h_t);
        residuals.push(pde_residual(params, &f, &g, &source, &grid, &q)?.max_residual);
        grid = grid.halved();
    }
    let orders = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(OrderStudy {
        regime: classify_regime(params),
        spacings,
        residuals,
        orders,
    })
}

/// `f = c`, `g = 0`, `F = m^2 c` is a stationary solution; returns the largest
/// deviation from `c` at interior probes.
pub fn stationary_deviation(c: f64) -> Result<f64, ExperimentError> {
    let params = LinearParams::new(2.0, 1.0)?;
    let f = Profile::constant(c, -40.0, 40.0);
    let g = Profile::zero();
    let source = SourceFn::constant(params.m2 * c, -40.0, 40.0);
    let q = QuadratureConfig::default();
    let mut worst = 0.0_f64;
    for t in [0.5, 1.0, 2.0, 3.0] {
        for x in [-2.0, 0.0, 1.5] {
            let phi = solve_linear_ivp(&f, &g, &source, &params, t, x, &q)?;
            worst = worst.max((phi - c).abs());
        }
    }
    Ok(worst)
}

/// Data for the linear cross-validation: all four components present.
pub fn cross_validation_data(eps: f64) -> (ModelParams, InitialDataSpec) {
    let params = ModelParams::new(1, 2.0, 2.0, 1.0, 0.0, 1.0, eps).expect("valid");
    let spec = InitialDataSpec {
        family: ProfileFamily::PolyBump { power: 3 },
        amplitudes: [1.0, 0.5, 0.7, 1.0],
        radius: 1.0,
    };
    (params, spec)
}

pub const CROSS_TIMES: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

pub fn cross_points() -> Vec<f64> {
    (0..10).map(|k| -2.7 + 0.6 * k as f64).collect()
}

/// Largest difference between the finite-difference `u` (nonlinearities off)
/// and the exact operator solution over 50 probe points.
pub fn cross_validation_error(hx: f64) -> Result<f64, ExperimentError> {
    let (params, spec) = cross_validation_data(1.0);
    let data = make_initial_data(&spec, &params)?;
    let linear = params.linear();
    let q = QuadratureConfig::default();
    let mut worst = 0.0_f64;
    for &t in &CROSS_TIMES {
        let numerics = NumericsConfig {
            hx,
            t_max: t,
            nonlinear: false,
            ..Default::default()
        };
        let sim = simulate_data(&params, &data, &numerics)?;
        for x in cross_points() {
            let exact = solve_linear_ivp(&data.u0, &data.u1, &SourceFn::zero(), &linear, t, x, &q)?;
            worst = worst.max((sim.final_state.sample_u(x) - exact).abs());
        }
    }
    Ok(worst)
}

pub fn kernel_suite() -> Result<Vec<CheckOutcome>, ExperimentError> {
    let mut checks = Vec::new();
    for (b, m2) in [(1.0, 0.0), (2.0, 1.0), (1.0, 1.0)] {
        let study = residual_order_study(&LinearParams::new(b, m2)?)?;
        let passed = study.orders.iter().all(|o| (1.5..=2.5).contains(o));
        checks.push(CheckOutcome {
            name: format!("residual order in [1.5, 2.5], {:?} (b = {b}, m2 = {m2})", study.regime),
            passed,
            max_error: study.orders.iter().map(|o| (o - 2.0).abs()).fold(0.0, f64::max),
            detail: format!("residuals {:?}, orders {:?}", study.residuals, study.orders),
        });
    }
    let dev = stationary_deviation(0.7)?;
    checks.push(CheckOutcome {
        name: "stationary solution reproduced within 1e-8".into(),
        passed: dev <= 1e-8,
        max_error: dev,
        detail: "f = 0.7, g = 0, F = 0.7, b = 2, m2 = 1".into(),
    });
    let mid = cross_validation_error(0.02)?;
    let fine = cross_validation_error(0.01)?;
    checks.push(CheckOutcome {
        name: "finite differences match the exact operator within 1e-3, improving".into(),
        passed: mid <= 1e-3 && fine < mid,
        max_error: mid,
        detail: format!("max error {mid:e} at hx = 0.02, {fine:e} at hx = 0.01"),
    });
    Ok(checks)
}

/// A blow-up run of the standard configuration with its data.
pub struct StandardRun {
    pub params: ModelParams,
    pub data: InitialData,
    pub result: SimulationResult,
}

pub fn standard_run(eps: f64, numerics: &NumericsConfig) -> Result<StandardRun, ExperimentError> {
    let params = standard_params(eps);
    let data = make_blowup_data(&InitialDataSpec::v1_only(params.r), &params)?;
    let result = simulate_data(&params, &data, numerics)?;
    Ok(StandardRun { params, data, result })
}

pub struct FrameSuite {
    pub t_num: Option<f64>,
    pub lower_bound: LowerBoundCheck,
    pub frame: FrameReport,
}

/// Standard run at `eps`: first lower bound and iteration frame with the
/// pinned `n = 1` constants on `t <= 0.9 T_num`.
pub fn frame_suite(eps: f64, t_max: f64) -> Result<FrameSuite, ExperimentError> {
    let run = standard_run(eps, &standard_numerics(t_max))?;
    let t_num = run.result.report.blowup.t_num;
    let t_end = 0.9 * t_num.unwrap_or(run.result.report.t_end);
    let trace = run.result.trace.truncated(t_end);
    let lower_bound = first_lower_bound_check(&trace, run.data.m, eps, t_end, 0.05)?;
    let p = &run.params;
    let frame_consts = FrameConstants::n1_pinned(p.p, p.q, p.r);
    let frame = verify_iteration_frame(&trace, p, &frame_consts, run.data.m, &FrameCheckConfig::default())?;
    Ok(FrameSuite {
        t_num,
        lower_bound,
        frame,
    })
}

pub fn frame_checks(suite: &FrameSuite) -> Vec<CheckOutcome> {
    let lb = &suite.lower_bound;
    let mut checks = vec![
        CheckOutcome {
            name: "run blows up".into(),
            passed: suite.t_num.is_some(),
            max_error: 0.0,
            detail: format!("T_num = {:?}", suite.t_num),
        },
        CheckOutcome {
            name: "V(t, t - R) >= 0.95 M eps on [2R, 0.9 T_num]".into(),
            passed: lb.passed,
            max_error: (lb.bound * 0.95 - lb.worst_value).max(0.0),
            detail: format!(
                "{} samples, bound {:.6e}, worst {:.6e} at t = {:.3}",
                lb.samples, lb.bound, lb.worst_value, lb.worst_t
            ),
        },
    ];
    for (name, c) in [
        ("U >= C int e^{-b(z-y)/2} |V|^p", &suite.frame.u_inequality),
        ("V >= K int |U|^q", &suite.frame.v_inequality),
    ] {
        checks.push(CheckOutcome {
            name: name.into(),
            passed: c.passed,
            max_error: (0.95 * c.worst_rhs - c.worst_lhs).max(0.0),
            detail: format!(
                "{} samples, min lhs/rhs {:.4}, tightest at z = {:.3} (lhs {:.4e}, rhs {:.4e})",
                c.samples, c.min_ratio, c.worst_z, c.worst_lhs, c.worst_rhs
            ),
        });
    }
    for e in &suite.frame.envelopes {
        checks.push(CheckOutcome {
            name: format!("V dominates envelope j = {}", e.j),
            passed: e.passed,
            max_error: (0.95 * e.worst_envelope - e.worst_value).max(0.0),
            detail: format!(
                "z >= {:.4}: {} samples, tightest at z = {:.3} (V {:.4e}, envelope {:.4e})",
                e.slice_start, e.samples, e.worst_z, e.worst_value, e.worst_envelope
            ),
        });
    }
    checks
}

/// Closed forms for `p = q = 2`, `M` from the standard data.
pub fn closed_form_suite(eps: f64) -> Result<ClosedFormReport, ExperimentError> {
    let params = standard_params(eps);
    let data = make_blowup_data(&InitialDataSpec::v1_only(params.r), &params)?;
    let frame = FrameConstants::n1_pinned(params.p, params.q, params.r);
    Ok(verify_closed_forms(
        &params,
        &frame,
        data.m,
        &ClosedFormConfig::default(),
    )?)
}
