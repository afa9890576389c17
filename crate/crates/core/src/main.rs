use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use blowup_lab::experiments::suites::{bessel_suite, closed_form_suite, frame_checks, frame_suite, kernel_suite};
use blowup_lab::experiments::{standard_sweep_config, sweep_and_report, SweepConfig};
use blowup_lab::fd_sim::{make_blowup_data, simulate_data, InitialDataSpec, ModelParams, NumericsConfig};
use blowup_lab::iteration::{
    critical_sequences_formal, sequences_csv, subcritical_sequences, theta, CheckOutcome, CriticalBase,
    CriticalityClass, FrameConstants, Sequences,
};
use blowup_lab::kernel_ops::{solve_linear_ivp, LinearParams, Profile, QuadratureConfig, SourceFn};

#[derive(Parser)]
#[command(
    name = "blowup-lab",
    version,
    about = "Damped Klein-Gordon / wave system blow-up laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileKind {
    Bump,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeqMode {
    Subcritical,
    Critical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Bessel,
    Kernel,
    Frame,
    ClosedForms,
}

#[derive(clap::Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 1)]
    n: u32,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 0.0)]
    m2: f64,
    #[arg(long = "R", default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 0.3)]
    eps: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(
            self.n, self.p, self.q, self.b, self.m2, self.r, self.eps,
        )?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact linear solution with bump data `f`, `g = 0`, on a grid at time `t`.
    LinearSolve {
        #[arg(long)]
        b: f64,
        #[arg(long)]
        m2: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value = "bump")]
        profile: ProfileKind,
        #[arg(long = "R", default_value_t = 1.0)]
        r: f64,
        /// Spacing of the x grid covering `|x| <= R + t`.
        #[arg(long, default_value_t = 0.05)]
        grid: f64,
        /// CSV file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One finite-difference run with v1-only data: trajectory, trace and report.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200.0)]
        tmax: f64,
        #[arg(long, default_value_t = 0.04)]
        hx: f64,
        #[arg(long, default_value_t = 0.5)]
        cfl: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Epsilon sweep driven by a TOML config; writes sweep.csv, report.json, plot.gp.
    Sweep {
        /// Config file; the standard subcritical sweep when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iteration sequence tables as CSV.
    Sequences {
        #[arg(long, value_enum)]
        mode: SeqMode,
        #[arg(long, default_value_t = 20)]
        jmax: usize,
        #[command(flatten)]
        model: ModelArgs,
        /// Frame constant C (with K); the n = 1 default otherwise.
        #[arg(long, requires = "k")]
        c: Option<f64>,
        #[arg(long, requires = "c")]
        k: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a verification suite; exit status 1 if any check fails.
    Verify {
        #[arg(long, value_enum)]
        which: Suite,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long, default_value_t = 0.3)]
        eps: f64,
    },
}

fn write_out(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, contents).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn linear_solve(b: f64, m2: f64, t: f64, r: f64, grid: f64, out: Option<&Path>) -> Result<()> {
    if !(grid > 0.0) {
        bail!("--grid must be positive");
    }
    let params = LinearParams::new(b, m2)?;
    let f = Profile::poly_bump(0.0, r, 1.0, 3);
    let g = Profile::zero();
    let source = SourceFn::zero();
    let q = QuadratureConfig::default();
    let half = r + t;
    let n = (2.0 * half / grid).round() as usize;
    let mut csv = String::from("t,x,phi\n");
    for i in 0..=n {
        let x = -half + i as f64 * grid;
        let phi = solve_linear_ivp(&f, &g, &source, &params, t, x, &q)?;
        csv.push_str(&format!("{t},{x},{phi}\n"));
    }
    write_out(out, &csv)
}

fn simulate(model: &ModelArgs, tmax: f64, hx: f64, cfl: f64, out: &Path) -> Result<()> {
    let params = model.params()?;
    let data = make_blowup_data(&InitialDataSpec::v1_only(params.r), &params)?;
    let steps = (tmax / (cfl * hx)).ceil() as usize;
    let numerics = NumericsConfig {
        hx,
        cfl,
        t_max: tmax,
        snapshot_every: (steps / 50).max(1),
        snapshot_stride: ((0.1 / hx).round() as usize).max(1),
        ..Default::default()
    };
    let result = simulate_data(&params, &data, &numerics)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_out(Some(&out.join("trajectory.csv")), &result.trajectory.to_csv())?;
    write_out(Some(&out.join("trace.csv")), &result.trace.to_csv())?;
    let report = serde_json::json!({
        "params": params,
        "numerics": numerics,
        "M": data.m,
        "report": result.report,
    });
    write_out(Some(&out.join("report.json")), &serde_json::to_string_pretty(&report)?)?;
    let b = &result.report.blowup;
    match b.t_num {
        Some(t) => println!(
            "blow-up at T_num = {t} ({:?}); threshold-insensitive: {}",
            b.trigger.expect("trigger set with t_num"),
            result.report.threshold_insensitive
        ),
        None => println!("no blow-up up to t = {}", result.report.t_end),
    }
    Ok(())
}

fn sweep(config: Option<&Path>, out: Option<&Path>) -> Result<bool> {
    let config = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SweepConfig::from_toml(&text)?
        }
        None => standard_sweep_config(),
    };
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .context("no output directory: pass --out or set output_dir")?;
    let outcome = sweep_and_report(&config, &out_dir)?;
    for r in &outcome.records {
        println!(
            "eps = {:<10.6} T_num = {:<12} bound = {}",
            r.eps,
            r.t_num.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
            r.lifespan_bound
                .map(|b| format!("{b:.4e}"))
                .unwrap_or_else(|| "-".into())
        );
    }
    print_checks(&outcome.checks);
    println!("wrote {}", outcome.paths.report_json.display());
    Ok(outcome.passed())
}

fn sequences(mode: SeqMode, jmax: usize, model: &ModelArgs, ck: Option<(f64, f64)>, out: Option<&Path>) -> Result<()> {
    let params = model.params()?;
    let data = make_blowup_data(&InitialDataSpec::v1_only(params.r), &params)?;
    let frame = match ck {
        Some((c, k)) => FrameConstants::user(c, k)?,
        None => FrameConstants::default_for(&params)?,
    };
    let seqs = match mode {
        SeqMode::Subcritical => Sequences::Subcritical(subcritical_sequences(&params, &frame, data.m, jmax)?),
        SeqMode::Critical => {
            if theta(params.n, params.p, params.q)?.class != CriticalityClass::Critical {
                eprintln!("note: exponents are not critical; tabulating the critical recursion formally");
            }
            Sequences::Critical(critical_sequences_formal(
                &params,
                &frame,
                data.m,
                jmax,
                CriticalBase::default(),
            )?)
        }
    };
    write_out(out, &sequences_csv(&seqs))
}

fn print_checks(checks: &[CheckOutcome]) {
    for c in checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn verify(which: Suite, seed: u64, eps: f64) -> Result<bool> {
    let checks = match which {
        Suite::Bessel => bessel_suite(seed),
        Suite::Kernel => kernel_suite()?,
        Suite::Frame => frame_checks(&frame_suite(eps, 2000.0)?),
        Suite::ClosedForms => closed_form_suite(eps)?.checks,
    };
    print_checks(&checks);
    Ok(checks.iter().all(|c| c.passed))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::LinearSolve {
            b,
            m2,
            t,
            profile: ProfileKind::Bump,
            r,
            grid,
            out,
        } => linear_solve(b, m2, t, r, grid, out.as_deref()).map(|_| true),
        Command::Simulate {
            model,
            tmax,
            hx,
            cfl,
            out,
        } => simulate(&model, tmax, hx, cfl, &out).map(|_| true),
        Command::Sweep { config, out } => sweep(config.as_deref(), out.as_deref()),
        Command::Sequences {
            mode,
            jmax,
            model,
            c,
            k,
            out,
        } => sequences(mode, jmax, &model, c.zip(k), out.as_deref()).map(|_| true),
        Command::Verify { which, seed, eps } => verify(which, seed, eps),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
