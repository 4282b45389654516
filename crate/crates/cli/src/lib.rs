//! Command-line driver: configuration, orchestration and data export.

pub mod config;
pub mod manifest;

use clap::{Parser, Subcommand};
use config::{parse_config, ConfigError, RunConfig};
use manifest::{read_series, write_series, write_text, RunManifest};
use nnflow::constitutive::{coefficient_tensor, ellipticity_constant};
use nnflow::fields::io::{fmt_f64, series_csv};
use nnflow::fields::{gauge, lq_norm, mixed_norm, Field, NormSpec, TimeSeries};
use nnflow::fixedpoint::{contraction_study, residual_check, solve_nonlinear, ProblemSetup};
use nnflow::oracle::{rk4_march, stable_dt, EulerianState};
use nnflow::symbol::{
    multiplier_derivative_check, resolvent_refinement, sector_inequality_check, xi_grid, MultiplierKind, Sector,
};
use nnflow::tensor::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_HELP: &str = "\
Exit codes:
  0   success, all verdicts passed
  1   a verdict failed (see manifest.json)
  2   command-line usage error
  3   invalid configuration
  4   file I/O error
  5   viscosity law is not strongly elliptic on the admissible range
  6   flow map failure (sigma condition, singular Jacobian, inverse map)
  7   linear solver failure (singular symbol, Richardson non-contraction or cap)
  8   fixed point not reached after all halvings of T
  9   explicit oracle unstable or time step above the stability limit
  10  malformed snapshot file
  11  other invalid numerical input (grid, shapes, ranges, density)

Environment: NNFLOW_THREADS overrides the worker thread count.";

#[derive(Debug, Parser)]
#[command(name = "nnflow", version, about = "Pseudo-spectral solvers for compressible non-Newtonian flow on the periodic torus", after_help = EXIT_HELP)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the nonlinear problem by fixed-point iteration and export the Eulerian trajectory
    Simulate(ConfigArgs),
    /// Reference Eulerian RK4 run on the same data
    Oracle(ConfigArgs),
    /// L²(Q_T) differences between the snapshot series of two runs
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Output directory for compare.csv and the manifest
        #[arg(long, default_value = "compare-out")]
        out: PathBuf,
        /// Fail if the relative difference exceeds this value
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Strong-ellipticity constant of the configured viscosity law
    VerifyEllipticity(ConfigArgs),
    /// Sector lemma, resolvent bound and multiplier scans
    VerifySymbol(ConfigArgs),
    /// Measured Lipschitz factor of the solution map for each T in solver.t_list
    Contract(ConfigArgs),
    /// Recompute the fixed-point gauge and L² norms from the snapshots of a simulate run
    Norms {
        dir: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 4.0)]
        q: f64,
        /// Output directory (defaults to the run directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// TOML configuration file
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override output.dir
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numerics(#[from] nnflow::Error),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use nnflow::Error as E;
        match self {
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Input(_) => 11,
            CliError::Numerics(e) => match e {
                E::Io(_) => 4,
                E::Ellipticity { .. } => 5,
                E::SigmaViolation { .. } | E::PicardDivergence { .. } | E::SingularJacobian { .. } | E::InverseMap { .. } => 6,
                E::ZeroLambda | E::SingularSymbol { .. } | E::NonContraction { .. } | E::IterationCap { .. } => 7,
                E::TimeExhausted { .. } => 8,
                E::Instability { .. } | E::StepTooLarge { .. } => 9,
                E::Format(_) => 10,
                _ => 11,
            },
        }
    }
}

fn load(args: &ConfigArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = parse_config(&text)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

fn setup(cfg: &RunConfig, t_final: f64) -> Result<ProblemSetup, CliError> {
    let (rho0, u0) = cfg.initial_data();
    let s = ProblemSetup::new(cfg.model()?, cfg.pressure()?, &rho0, &u0, t_final, cfg.n_t())?
        .with_exponents(cfg.problem.p, cfg.problem.q)?
        .with_sigma(cfg.solver.sigma);
    Ok(s)
}

/// Runs one command; the manifest is written whenever an output directory is known.
pub fn run(cli: &Cli) -> i32 {
    let start = Instant::now();
    let (name, cfg_out) = match &cli.command {
        Command::Simulate(a) => ("simulate", Some(a)),
        Command::Oracle(a) => ("oracle", Some(a)),
        Command::VerifyEllipticity(a) => ("verify-ellipticity", Some(a)),
        Command::VerifySymbol(a) => ("verify-symbol", Some(a)),
        Command::Contract(a) => ("contract", Some(a)),
        Command::Compare { .. } => ("compare", None),
        Command::Norms { .. } => ("norms", None),
    };
    let loaded = cfg_out.map(load).transpose();
    let (cfg, out) = match (&loaded, &cli.command) {
        (Ok(Some((c, o))), _) => (Some(c.clone()), o.clone()),
        (Ok(None), Command::Compare { out, .. }) => (None, out.clone()),
        (Ok(None), Command::Norms { dir, out, .. }) => (None, out.clone().unwrap_or_else(|| dir.clone())),
        (Ok(None), _) => unreachable!("every config-free command names its output"),
        (Err(e), _) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let mut man = RunManifest::new(name, cfg.as_ref());
    let result = match (&cli.command, &cfg) {
        (Command::Simulate(_), Some(c)) => simulate(c, &out, &mut man),
        (Command::Oracle(_), Some(c)) => oracle(c, &out, &mut man),
        (Command::VerifyEllipticity(_), Some(c)) => verify_ellipticity(c, &mut man),
        (Command::VerifySymbol(_), Some(c)) => verify_symbol(c, &out, &mut man),
        (Command::Contract(_), Some(c)) => contract(c, &out, &mut man),
        (Command::Compare { a, b, tol, .. }, _) => compare(a, b, *tol, &out, &mut man),
        (Command::Norms { dir, p, q, .. }, _) => norms(dir, *p, *q, &out, &mut man),
        _ => unreachable!(),
    };
    let code = match &result {
        Ok(()) if man.all_pass() => 0,
        Ok(()) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            man.error = Some(e.to_string());
            e.exit_code()
        }
    };
    for v in &man.verdicts {
        println!("{}: {} ({})", v.name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    man.exit_code = code;
    man.wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = man.write(&out) {
        eprintln!("error: cannot write manifest: {e}");
        return if code == 0 { 4 } else { code };
    }
    code
}

fn diagnostics(rho: &TimeSeries, u: &TimeSeries) -> String {
    let mass: Vec<f64> = rho.values.iter().map(|r| r.integral(0)).collect();
    let rmin: Vec<f64> = rho.values.iter().map(|r| r.min_value(0)).collect();
    let rmax: Vec<f64> = rho.values.iter().map(|r| -r.map(|x| -x).min_value(0)).collect();
    let ke: Vec<f64> = rho
        .values
        .iter()
        .zip(&u.values)
        .map(|(r, v)| {
            let n = v.n_components();
            let sq = (0..n).fold(Field::zeros(r.grid(), nnflow::fields::Rank::Scalar), |acc, c| {
                let comp = Field::from_components(r.grid(), nnflow::fields::Rank::Scalar, vec![v.comp(c).to_vec()])
                    .expect("scalar component");
                acc.add(&comp.mul_scalar(&comp))
            });
            0.5 * sq.mul_scalar(r).integral(0)
        })
        .collect();
    series_csv(&rho.times, &["mass", "rho_min", "rho_max", "kinetic_energy"], &[mass, rmin, rmax, ke])
}

fn mass_drift(rho: &TimeSeries) -> f64 {
    let m: Vec<f64> = rho.values.iter().map(|r| r.integral(0)).collect();
    m.iter().map(|x| (x - m[0]).abs() / m[0]).fold(0.0, f64::max)
}

fn simulate(cfg: &RunConfig, out: &Path, man: &mut RunManifest) -> Result<(), CliError> {
    let s = setup(cfg, cfg.problem.t_final)?;
    let sol = solve_nonlinear(&s, cfg.solver.tol, cfg.solver.max_iter)?;
    let model = cfg.model()?;
    let (mass_res, mom_res) = residual_check(&model, &cfg.pressure()?, &sol.rho, &sol.u)?;
    man.record("t_final", sol.t_final);
    man.record("m", sol.m);
    man.record("halvings", sol.halvings);
    man.record("iterations", sol.iterations);
    man.record("mass_residual", mass_res);
    man.record("momentum_residual", mom_res);
    man.record("mass_drift", mass_drift(&sol.rho));
    man.record("sigma_observed", sol.map.sigma_observed);
    if cfg.output.csv {
        let mut h = String::from("iteration,gauge_difference,factor,t_final,m\n");
        for r in &sol.history {
            h.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration,
                fmt_f64(r.gauge_difference),
                fmt_f64(r.factor),
                fmt_f64(r.t_final),
                fmt_f64(r.m)
            ));
        }
        write_text(out, "history.csv", &h)?;
        write_text(out, "diagnostics.csv", &diagnostics(&sol.rho, &sol.u))?;
    }
    let k = cfg.output.snapshot_every;
    let mut n = write_series(out, "rho", &sol.rho, k)?;
    n += write_series(out, "u", &sol.u, k)?;
    n += write_series(out, "theta", &sol.theta, k)?;
    n += write_series(out, "utilde", &sol.u_tilde, k)?;
    man.record("snapshots", n);
    let last = sol.history.last().map(|h| h.gauge_difference).unwrap_or(0.0);
    man.verdict("fixed point", last < cfg.solver.tol, format!("final difference {last:e} at T = {}", sol.t_final));
    man.verdict(
        "residuals finite",
        mass_res.is_finite() && mom_res.is_finite(),
        format!("mass {mass_res:e}, momentum {mom_res:e}"),
    );
    Ok(())
}

fn oracle(cfg: &RunConfig, out: &Path, man: &mut RunManifest) -> Result<(), CliError> {
    let (rho0, u0) = cfg.initial_data();
    let model = cfg.model()?;
    let pressure = cfg.pressure()?;
    let st = EulerianState::new(rho0, u0, 0.0)?;
    let intervals = cfg.n_t() - 1;
    let steps = if cfg.solver.rk4_steps > 0 {
        cfg.solver.rk4_steps
    } else {
        let limit = stable_dt(&model, &pressure, &st)?;
        let needed = (4.0 * cfg.problem.t_final / limit).ceil() as usize;
        intervals * needed.div_ceil(intervals).max(1)
    };
    if steps % intervals != 0 {
        return Err(CliError::Input(format!("solver.rk4_steps = {steps} is not a multiple of {intervals}")));
    }
    let tr = rk4_march(&model, &pressure, &st, cfg.problem.t_final, steps, None)?;
    let stride = steps / intervals;
    let pick = |s: &TimeSeries| -> nnflow::Result<TimeSeries> {
        TimeSeries::new(s.t_final(), s.values.iter().step_by(stride).cloned().collect())
    };
    let (rho, u) = (pick(&tr.rho)?, pick(&tr.u)?);
    man.record("rk4_steps", steps);
    man.record("mass_drift", tr.mass_drift);
    if cfg.output.csv {
        write_text(out, "diagnostics.csv", &diagnostics(&rho, &u))?;
    }
    let k = cfg.output.snapshot_every;
    let n = write_series(out, "rho", &rho, k)? + write_series(out, "u", &u, k)?;
    man.record("snapshots", n);
    man.verdict("mass conservation", tr.mass_drift <= 1e-10, format!("relative drift {:e}", tr.mass_drift));
    Ok(())
}

fn verify_ellipticity(cfg: &RunConfig, man: &mut RunManifest) -> Result<(), CliError> {
    let m = &cfg.problem.model;
    let ell = ellipticity_constant(&cfg.model()?, m.s_max, m.r_max, 4001)?;
    man.record("c_el", ell.c_el);
    man.record("s_min", ell.s_min);
    man.record("r_min", ell.r_min);
    man.verdict("strong ellipticity", ell.c_el > 0.0, format!("C_el = {}", ell.c_el));
    Ok(())
}

fn verify_symbol(cfg: &RunConfig, out: &Path, man: &mut RunManifest) -> Result<(), CliError> {
    let s = setup(cfg, cfg.problem.t_final)?;
    let d = cfg.problem.d;
    let sector = Sector::new(cfg.solver.beta, cfg.solver.nu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.problem.seed);
    let lambdas: Vec<_> = (0..1000).map(|_| sector.sample(&mut rng)).collect();
    let xs: Vec<f64> = (0..100).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 99.0)).collect();
    let chk = sector_inequality_check(&sector, &lambdas, &xs);
    man.verdict(
        "sector inequality",
        chk.violations == 0,
        format!("{} violations in {} samples", chk.violations, chk.samples),
    );
    // frozen at rest and at the largest deviatoric strain of u₀
    let sym = s.bg.u0.sym_gradient();
    let pmax = (0..s.grid().len())
        .max_by(|&a, &b| sym.mat_at(a).dev().norm_sq().total_cmp(&sym.mat_at(b).dev().norm_sq()))
        .unwrap_or(0);
    let mut rows = String::from("check,strain,value,relative_change\n");
    let model = cfg.model()?;
    for (label, dm) in [("rest", Mat::zeros(d)), ("max", sym.mat_at(pmax))] {
        let a = coefficient_tensor(&model, &dm)?;
        // double the base scan until one more refinement moves the bound by less than 10%
        let mut base = (8, 8, 10, 4);
        let mut r = resolvent_refinement(&a, s.op.gamma1, s.op.gamma2, &sector, base.0, base.1, base.2, base.3)?;
        for _ in 0..2 {
            if r.relative_change < 0.1 {
                break;
            }
            base = (2 * base.0, 2 * base.1, 2 * base.2, 2 * base.3);
            r = resolvent_refinement(&a, s.op.gamma1, s.op.gamma2, &sector, base.0, base.1, base.2, base.3)?;
        }
        man.record(&format!("resolvent_base_grid_{label}"), vec![base.0, base.1, base.2, base.3]);
        rows.push_str(&format!("resolvent,{label},{},{}\n", fmt_f64(r.fine), fmt_f64(r.relative_change)));
        man.verdict(
            &format!("resolvent bound ({label})"),
            r.fine.is_finite() && r.relative_change < 0.1,
            format!("C = {}, refinement change {:.3e}", r.fine, r.relative_change),
        );
        let lam = sector.lambda_grid(6, 8);
        let xis = xi_grid(d, 8, 4, 1e-2, 1e2);
        let mut worst: f64 = 0.0;
        let mut cmax: f64 = 0.0;
        for kind in MultiplierKind::all(d) {
            for alpha in nnflow::fields::multi_indices(d, d as u32) {
                let m = multiplier_derivative_check(&a, s.op.gamma1, s.op.gamma2, kind, &alpha, &lam, &xis)?;
                worst = worst.max(m.relative_change);
                cmax = cmax.max(m.c_alpha);
            }
        }
        rows.push_str(&format!("multiplier,{label},{},{}\n", fmt_f64(cmax), fmt_f64(worst)));
        man.verdict(
            &format!("multiplier bounds ({label})"),
            cmax.is_finite() && worst < 0.15,
            format!("max c_α = {cmax:.4e}, step-halving change {worst:.3e}"),
        );
    }
    if cfg.output.csv {
        write_text(out, "symbol.csv", &rows)?;
    }
    Ok(())
}

fn contract(cfg: &RunConfig, out: &Path, man: &mut RunManifest) -> Result<(), CliError> {
    let s = setup(cfg, cfg.problem.t_final)?;
    let rows = contraction_study(&s, cfg.solver.n_pairs, &cfg.solver.t_list, cfg.problem.seed)?;
    let mut csv = String::from("t_final,m,factor,pairs\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", fmt_f64(r.t_final), fmt_f64(r.m), fmt_f64(r.factor), r.pairs));
    }
    if cfg.output.csv {
        write_text(out, "contraction.csv", &csv)?;
    }
    let f: Vec<f64> = rows.iter().map(|r| r.factor).collect();
    man.record("factors", f.clone());
    let last = *f.last().expect("nonempty t_list");
    let decreasing = rows.windows(2).all(|w| w[1].t_final >= w[0].t_final || w[1].factor < w[0].factor || w[1].pairs == 0);
    man.verdict("contraction", last < 1.0, format!("factor {last:e} at the last T"));
    man.verdict("monotone in T", decreasing, format!("factors {f:?}"));
    Ok(())
}

fn series_of(times: Vec<f64>, fields: Vec<Field>, what: &str) -> Result<TimeSeries, CliError> {
    if fields.len() < 2 {
        return Err(CliError::Input(format!("need at least two {what} snapshots, found {}", fields.len())));
    }
    let t = *times.last().expect("nonempty");
    let dt = t / (times.len() - 1) as f64;
    if times.iter().enumerate().any(|(i, x)| (x - i as f64 * dt).abs() > 1e-9 * t.max(1.0)) {
        return Err(CliError::Input(format!("{what} snapshots are not uniformly spaced from t = 0")));
    }
    Ok(TimeSeries::new(t, fields)?)
}

fn compare(a: &Path, b: &Path, tol: Option<f64>, out: &Path, man: &mut RunManifest) -> Result<(), CliError> {
    let l2 = NormSpec::new(2.0, 2.0, 0);
    let mut csv = String::from("field,l2_difference,l2_reference,relative\n");
    let mut worst: f64 = 0.0;
    for name in ["rho", "u"] {
        let (ta, fa) = read_series(a, name)?;
        let (tb, fb) = read_series(b, name)?;
        if ta != tb {
            return Err(CliError::Input(format!("{name}: snapshot times differ between the runs")));
        }
        if fa.iter().zip(&fb).any(|(x, y)| x.grid() != y.grid() || x.rank() != y.rank()) {
            return Err(CliError::Input(format!("{name}: grids or ranks differ between the runs")));
        }
        let sa = series_of(ta, fa, name)?;
        let sb = series_of(tb, fb, name)?;
        let diff = mixed_norm(&sa.sub(&sb), l2)?;
        let reference = mixed_norm(&sb, l2)?;
        let rel = if reference > 0.0 { diff / reference } else { diff };
        worst = worst.max(rel);
        csv.push_str(&format!("{name},{},{},{}\n", fmt_f64(diff), fmt_f64(reference), fmt_f64(rel)));
        man.record(&format!("{name}_l2_difference"), diff);
        man.record(&format!("{name}_relative"), rel);
    }
    write_text(out, "compare.csv", &csv)?;
    if let Some(t) = tol {
        man.verdict("difference within tolerance", worst <= t, format!("max relative {worst:e} vs {t:e}"));
    }
    Ok(())
}

fn norms(dir: &Path, p: f64, q: f64, out: &Path, man: &mut RunManifest) -> Result<(), CliError> {
    let (tt, th) = read_series(dir, "theta")?;
    let (tw, w) = read_series(dir, "utilde")?;
    let theta = series_of(tt, th, "theta")?;
    let w = series_of(tw, w, "utilde")?;
    let u0 = w.values[0].clone();
    let g = gauge(&theta, &w, &u0, p, q)?;
    let (tr, rho) = read_series(dir, "rho")?;
    let (_, u) = read_series(dir, "u")?;
    let mut csv = String::from("t,rho_l2,u_l2,theta_l2\n");
    for i in 0..tr.len().min(u.len()).min(theta.len()) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(tr[i]),
            fmt_f64(lq_norm(&rho[i], 2.0)),
            fmt_f64(lq_norm(&u[i], 2.0)),
            fmt_f64(lq_norm(&theta.values[i], 2.0))
        ));
    }
    write_text(out, "norms.csv", &csv)?;
    man.record("gauge", g);
    man.record("p", p);
    man.record("q", q);
    println!("gauge [θ, w] = {}", fmt_f64(g));
    Ok(())
}

/// Installs logging and the thread pool, parses arguments and runs.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    if let Some(n) = std::env::var("NNFLOW_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    run(&cli)
}
