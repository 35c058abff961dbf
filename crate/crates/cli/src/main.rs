use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use brokerflow::calibrator::{
    evaluate_p, generate_sessions, optimize, read_sessions, write_sessions, Axis, GridSpec, Method,
    Penalties, SimplexOptions, StrategyConstants,
};
use brokerflow::closed_form::solve;
use brokerflow::experiments::{
    discount_curve, monotonicity_report, preset, ratio_grid, run_sweep, GridAxis, InitialState,
    Spacing, SweepSpec, Target,
};
use brokerflow::params::{ModelParams, ValidatedParams};
use brokerflow::simulator::{
    estimate_broker_performance, estimate_informed_performance, perturbation_report, simulate_path,
    Policy, Scheme, SimConfig,
};
use brokerflow::Error;

type P = ValidatedParams<f64>;

/// Closed-form broker/client strategies, Monte Carlo checks, calibration
/// and parameter sweeps.
///
/// Randomized commands default to seed 0.
#[derive(Debug, Parser)]
#[command(name = "brokerflow", version)]
struct Cli {
    /// Parameter file (`key = value` lines) applied over the baseline.
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// `key=value` parameter override; repeatable, applied after --params.
    #[arg(
        long = "override",
        short = 'o',
        global = true,
        value_name = "KEY=VALUE"
    )]
    overrides: Vec<String>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// All outputs go here; created if absent.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the resolved parameter file.
    Params,
    /// Closed-form coefficients as a table and one JSON object.
    Coeffs,
    /// Monte Carlo performance of the optimal strategies.
    Simulate(SimulateArgs),
    /// Broker performance with C, D, E, F scaled one at a time.
    Perturb(PerturbArgs),
    /// Write synthetic session tapes.
    Sessions(SessionsArgs),
    /// Fit the interval trading rule by maximizing the backtest performance.
    Calibrate(CalibrateArgs),
    /// Value-function surface over one or two parameter axes.
    Sweep(SweepArgs),
    /// Broker value against a common client cost discount.
    Fig4(Fig4Args),
    /// Coefficients, Monte Carlo check, synthetic calibration and the discount curve.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long, default_value_t = 2000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    /// Truncation time; default is the shortest with exp(-beta T) <= 1e-6.
    #[arg(long)]
    horizon: Option<f64>,
    /// exact (OU transition) or euler.
    #[arg(long, default_value = "exact")]
    scheme: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Write the first N trajectories as path_<i>.csv.
    #[arg(long, default_value_t = 0)]
    dump: usize,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 1.2])]
    factors: Vec<f64>,
}

#[derive(Debug, Args)]
struct TapeArgs {
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Intervals per day.
    #[arg(long, default_value_t = 1000)]
    intervals: usize,
}

#[derive(Debug, Args)]
struct SessionsArgs {
    #[arg(long, default_value_t = 200)]
    days: usize,
    #[command(flatten)]
    tape: TapeArgs,
    /// File name inside the output directory.
    #[arg(long, default_value = "sessions.csv")]
    out: String,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Session CSV (with its .meta.json sidecar).
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    sessions: Option<PathBuf>,
    /// Generate this many synthetic days instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[command(flatten)]
    tape: TapeArgs,
    /// grid, simplex or grid_then_simplex.
    #[arg(long, default_value = "grid_then_simplex")]
    method: String,
    /// Overrides of the search box, e.g. `c=0:0.01:11,h=1.0` (lo:hi:n or a point).
    #[arg(long)]
    grid_spec: Option<String>,
    /// Simplex start `c,g,h,f`; default is the box centre.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    init: Option<Vec<f64>>,
    /// Output stem inside the output directory.
    #[arg(long, default_value = "calibration")]
    out: String,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// One of the built-in presets.
    #[arg(long, conflicts_with_all = ["axis1", "axis2", "target"])]
    preset: Option<String>,
    /// informed or broker.
    #[arg(long, default_value = "broker")]
    target: String,
    /// `param:min:max:count[:log]`; param may be `k_U/k_B` or `k_I,k_U`.
    #[arg(long, required_unless_present = "preset")]
    axis1: Option<String>,
    #[arg(long)]
    axis2: Option<String>,
    /// Output stem; defaults to the preset name or `sweep`.
    #[arg(long)]
    out: Option<String>,
    /// Also run the monotonicity checks.
    #[arg(long)]
    shape: bool,
}

#[derive(Debug, Args)]
struct Fig4Args {
    #[arg(long, default_value_t = 91)]
    points: usize,
    #[arg(long, default_value_t = 0.1)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 2000)]
    paths: usize,
    #[arg(long, default_value_t = 200)]
    days: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => {
                    eprintln!("\nUsage: brokerflow [OPTIONS] <COMMAND>\nFor more information, try '--help'.");
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: &Cli) -> brokerflow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let raw = load_params(cli)?;
    print_header(cli, &raw);
    if let Command::Params = cli.command {
        print!("{}", raw.to_config_string());
        return Ok(());
    }
    let p = raw.validate()?;
    match &cli.command {
        Command::Params => unreachable!(),
        Command::Coeffs => coeffs(&p),
        Command::Simulate(a) => simulate(cli, &p, a),
        Command::Perturb(a) => perturb(cli, &p, a),
        Command::Sessions(a) => sessions(cli, &p, a),
        Command::Calibrate(a) => calibrate(cli, &p, a),
        Command::Sweep(a) => sweep(cli, &p, a),
        Command::Fig4(a) => fig4(cli, &p, a),
        Command::Demo(a) => demo(cli, &p, a),
    }
}

fn load_params(cli: &Cli) -> brokerflow::Result<ModelParams<f64>> {
    let mut p = match &cli.params {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            ModelParams::from_config_str(&text)?
        }
        None => ModelParams::baseline(),
    };
    p.apply_overrides(&cli.overrides)?;
    Ok(p)
}

/// Everything needed to rerun the command, as `#` comment lines.
fn print_header(cli: &Cli, p: &ModelParams<f64>) {
    println!("# brokerflow {}", env!("CARGO_PKG_VERSION"));
    println!("# command: {:?}", cli.command);
    println!("# seed = {}", cli.seed);
    println!("# out_dir = {}", cli.out_dir.display());
    match cli.threads {
        Some(n) => println!("# threads = {n}"),
        None => println!("# threads = {} (all cores)", rayon::current_num_threads()),
    }
    for (k, v) in p.key_values() {
        println!("# {k} = {v}");
    }
}

fn check_name(name: &str) -> brokerflow::Result<()> {
    let rel = Path::new(name);
    let plain = rel.components().count() == 1
        && matches!(rel.components().next(), Some(Component::Normal(_)));
    if !plain {
        return Err(Error::Config(format!(
            "output name `{name}` must be a plain file name (outputs stay in --out-dir)"
        )));
    }
    Ok(())
}

/// Resolves a bare file name inside the output directory, creating it.
fn out_file(cli: &Cli, name: &str) -> brokerflow::Result<PathBuf> {
    check_name(name)?;
    fs::create_dir_all(&cli.out_dir)?;
    Ok(cli.out_dir.join(name))
}

fn write_json(path: &Path, v: &serde_json::Value) -> brokerflow::Result<()> {
    let text = serde_json::to_string_pretty(v).expect("json serializes");
    fs::write(path, text + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn create(path: &Path) -> brokerflow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn coeffs(p: &P) -> brokerflow::Result<()> {
    let sol = solve(p);
    let (ti, tb) = (sol.informed.table(), sol.broker.table());
    println!("{:<16} {:>24}", "coefficient", "value");
    for (k, v) in ti.iter().chain(&tb) {
        println!("{k:<16} {v:>24.16e}");
    }
    println!("{:<16} {:>24}", "b", p.broker.b);
    for r in &sol.broker.resolves {
        println!(
            "# re-solved {}: closed form {:.16e} -> {:.16e} (monomial residual {:.3e})",
            r.coefficient, r.closed_form, r.resolved, r.monomial_residual
        );
    }
    let mut obj = serde_json::Map::new();
    for (k, v) in ti.iter().chain(&tb) {
        obj.insert((*k).to_string(), json!(v));
    }
    obj.insert("b".into(), json!(p.broker.b));
    obj.insert("resolves".into(), json!(sol.broker.resolves));
    println!("{}", serde_json::Value::Object(obj));
    Ok(())
}

fn sim_config(p: &P, mc: &McArgs, seed: u64) -> brokerflow::Result<SimConfig<f64>> {
    let mut cfg = SimConfig::for_params(p, mc.paths, seed);
    cfg.dt = mc.dt;
    if let Some(h) = mc.horizon {
        cfg.horizon = h;
        cfg.discount_tail_tol = 1.0;
    }
    cfg.scheme = match mc.scheme.as_str() {
        "exact" => Scheme::ExactOu,
        "euler" => Scheme::Euler,
        s => {
            return Err(Error::Config(format!(
                "unknown scheme `{s}` (exact, euler)"
            )))
        }
    };
    cfg.check(p)?;
    Ok(cfg)
}

fn mc_check(p: &P, cfg: &SimConfig<f64>) -> brokerflow::Result<serde_json::Value> {
    let sol = solve(p);
    let s0 = p.market.s0;
    let start = Instant::now();
    let ei = estimate_informed_performance(p, cfg, &Policy::Optimal)?;
    let eb = estimate_broker_performance(p, cfg, &Policy::Optimal, &Policy::Optimal)?;
    let fi = sol.informed.value(0.0, s0, p.market.alpha0, 0.0);
    let fb = sol
        .broker
        .value(0.0, s0, p.market.alpha0, 0.0, 0.0, p.flow.nu_u0);
    println!(
        "{:<9} {:>14} {:>12} {:>14} {:>8}",
        "agent", "mc_mean", "std_error", "closed_form", "z"
    );
    for (name, e, v) in [("informed", &ei, fi), ("broker", &eb, fb)] {
        println!(
            "{name:<9} {:>14.6} {:>12.6} {:>14.6} {:>8.3}",
            e.mean,
            e.std_error,
            v,
            (e.mean - v) / e.std_error
        );
    }
    println!(
        "# {} paths x {} steps in {:.1} s",
        cfg.n_paths,
        cfg.steps(),
        start.elapsed().as_secs_f64()
    );
    Ok(json!({
        "config": cfg,
        "informed": { "estimate": ei, "closed_form": fi },
        "broker": { "estimate": eb, "closed_form": fb },
    }))
}

fn simulate(cli: &Cli, p: &P, a: &SimulateArgs) -> brokerflow::Result<()> {
    let cfg = sim_config(p, &a.mc, cli.seed)?;
    let summary = mc_check(p, &cfg)?;
    write_json(&out_file(cli, "simulate.json")?, &summary)?;
    for i in 0..a.dump {
        let path = simulate_path(p, &Policy::Optimal, &Policy::Optimal, &cfg, i as u64)?;
        let f = out_file(cli, &format!("path_{i}.csv"))?;
        path.write_csv(create(&f)?)?;
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn perturb(cli: &Cli, p: &P, a: &PerturbArgs) -> brokerflow::Result<()> {
    let cfg = sim_config(p, &a.mc, cli.seed)?;
    for &f in &a.factors {
        if !(f >= 0.0) || !f.is_finite() {
            return Err(Error::Config(format!("factor {f} must be finite and >= 0")));
        }
    }
    let r = perturbation_report(p, &cfg, &a.factors)?;
    println!(
        "optimal: {:.6} (se {:.6})",
        r.optimal.mean, r.optimal.std_error
    );
    println!(
        "{:<5} {:>7} {:>14} {:>12} {:>12} {:>18}",
        "coef", "factor", "estimate", "diff", "diff_se", "verdict"
    );
    for row in &r.rows {
        println!(
            "{:<5} {:>7} {:>14.6} {:>12.6} {:>12.6} {:>18}",
            row.coefficient,
            row.factor,
            row.estimate.mean,
            row.diff_mean,
            row.diff_std_error,
            format!("{:?}", row.verdict)
        );
    }
    let flagged = r.flagged().count();
    if flagged > 0 {
        println!("# {flagged} perturbation(s) significantly above the optimum");
    }
    write_json(
        &out_file(cli, "perturb.json")?,
        &json!({ "config": cfg, "report": r }),
    )
}

fn sessions(cli: &Cli, p: &P, a: &SessionsArgs) -> brokerflow::Result<()> {
    check_name(&a.out)?;
    let set = generate_sessions(p, a.days, a.tape.delta, a.tape.intervals, cli.seed)?;
    let path = out_file(cli, &a.out)?;
    write_sessions(&set, &path)?;
    println!("wrote {} days to {}", set.n_days(), path.display());
    Ok(())
}

fn parse_grid_spec(base: GridSpec<f64>, spec: &str) -> brokerflow::Result<GridSpec<f64>> {
    let mut g = base;
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || {
            Error::Config(format!(
                "grid spec `{part}`: expected name=lo:hi:n or name=value"
            ))
        };
        let (name, range) = part.split_once('=').ok_or_else(bad)?;
        let nums: Vec<&str> = range.split(':').collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let axis = match nums.as_slice() {
            [v] => Axis::point(num(v)?),
            [lo, hi, n] => Axis::new(num(lo)?, num(hi)?, n.trim().parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        match name.trim() {
            "c" => g.c = axis,
            "g" => g.g = axis,
            "h" => g.h = axis,
            "f" => g.f = axis,
            _ => return Err(bad()),
        }
    }
    g.validate()?;
    Ok(g)
}

fn centre(a: &Axis<f64>) -> f64 {
    0.5 * (a.lo + a.hi)
}

fn calibrate_report(
    cli: &Cli,
    p: &P,
    set: &brokerflow::calibrator::SessionSet<f64>,
    method: Method,
    grid: &GridSpec<f64>,
    init: Option<StrategyConstants<f64>>,
    stem: &str,
) -> brokerflow::Result<()> {
    let pen = Penalties::from_params(p);
    let delta = set.meta.delta;
    let init = init.unwrap_or_else(|| {
        StrategyConstants::new(
            centre(&grid.c),
            centre(&grid.g),
            centre(&grid.h),
            centre(&grid.f),
        )
    });
    let start = Instant::now();
    let r = optimize(set, &pen, init, method, grid, &SimplexOptions::default())?;
    let secs = start.elapsed().as_secs_f64();
    let sol = solve(p);
    let theory = StrategyConstants::theoretical(&sol.broker, delta);
    let bt_theory = evaluate_p(set, &theory, &pen)?;
    let bt_best = evaluate_p(set, &r.best, &pen)?;
    println!(
        "{:<12} {:>14} {:>14} {:>14} {:>14} {:>12}",
        "", "c/delta", "g/delta", "h", "f", "P"
    );
    for (name, k, bt) in [
        ("best", &r.best, &bt_best),
        ("theoretical", &theory, &bt_theory),
    ] {
        println!(
            "{name:<12} {:>14.6} {:>14.6} {:>14.6} {:>14.6} {:>12.6}",
            k.c / delta,
            k.g / delta,
            k.h,
            k.f,
            bt.p
        );
    }
    println!(
        "# {} days, method {}, {} evaluations in {secs:.2} s; across-day se of P(theoretical) {:.6}",
        set.n_days(),
        r.method,
        r.trace.len(),
        bt_theory.std_error()
    );
    let trace = out_file(cli, &format!("{stem}_trace.csv"))?;
    r.write_trace_csv(create(&trace)?)?;
    println!("wrote {}", trace.display());
    write_json(
        &out_file(cli, &format!("{stem}.json"))?,
        &json!({
            "best": r.best,
            "p_best": r.p_best,
            "method": r.method,
            "simplex_iterations": r.simplex_iterations,
            "evaluations": r.trace.len(),
            "best_std_error": bt_best.std_error(),
            "theoretical": theory,
            "p_theoretical": bt_theory.p,
            "theoretical_std_error": bt_theory.std_error(),
            "days": set.n_days(),
            "meta": set.meta,
            "penalties": pen,
            "grid": grid,
        }),
    )
}

fn calibrate(cli: &Cli, p: &P, a: &CalibrateArgs) -> brokerflow::Result<()> {
    let method: Method = a.method.parse()?;
    check_name(&a.out)?;
    let set = match (&a.sessions, a.synthetic) {
        (Some(path), _) => read_sessions(path)?,
        (None, Some(n)) => generate_sessions(p, n, a.tape.delta, a.tape.intervals, cli.seed)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let base = GridSpec::default_for(set.meta.delta);
    let grid = match &a.grid_spec {
        Some(s) => parse_grid_spec(base, s)?,
        None => base,
    };
    let init = a
        .init
        .as_ref()
        .map(|v| StrategyConstants::new(v[0], v[1], v[2], v[3]));
    calibrate_report(cli, p, &set, method, &grid, init, &a.out)
}

fn parse_axis(s: &str) -> brokerflow::Result<GridAxis<f64>> {
    let bad = || {
        Error::Config(format!(
            "axis `{s}`: expected param:min:max:count[:log|:lin]"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    if !(4..=5).contains(&parts.len()) {
        return Err(bad());
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let count: usize = parts[3].trim().parse().map_err(|_| bad())?;
    let spacing = match parts.get(4).map(|t| t.trim()) {
        None | Some("lin") | Some("linear") => Spacing::Linear,
        Some("log") => Spacing::Log,
        _ => return Err(bad()),
    };
    let axis = GridAxis {
        param: parts[0].trim().to_string(),
        min: num(parts[1])?,
        max: num(parts[2])?,
        count,
        spacing,
    };
    axis.validate()?;
    Ok(axis)
}

fn sweep(cli: &Cli, p: &P, a: &SweepArgs) -> brokerflow::Result<()> {
    let (spec, stem) = match &a.preset {
        Some(name) => (
            preset(name, p.params())?,
            a.out.clone().unwrap_or_else(|| name.clone()),
        ),
        None => {
            let axis1 = parse_axis(a.axis1.as_deref().expect("clap requires axis1"))?;
            let spec = SweepSpec {
                target: a.target.parse::<Target>()?,
                axis1,
                axis2: a.axis2.as_deref().map(parse_axis).transpose()?,
                fixed: *p.params(),
                initial_state: InitialState::default(),
            };
            (spec, a.out.clone().unwrap_or_else(|| "sweep".into()))
        }
    };
    check_name(&stem)?;
    let table = run_sweep(&spec)?;
    let valid = table.valid().count();
    let (lo, hi) = table
        .valid()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| {
            (l.min(r.value), h.max(r.value))
        });
    println!(
        "{} points, {} valid, value range [{lo:.6}, {hi:.6}]",
        table.rows.len(),
        valid
    );
    let csv = out_file(cli, &format!("{stem}.csv"))?;
    table.write_csv(create(&csv)?)?;
    println!("wrote {}", csv.display());
    let meta = out_file(cli, &format!("{stem}.json"))?;
    fs::write(&meta, table.metadata_json() + "\n")?;
    println!("wrote {}", meta.display());
    let gp = out_file(cli, &format!("{stem}.gp"))?;
    fs::write(&gp, table.gnuplot_stub(&format!("{stem}.csv")))?;
    println!("wrote {}", gp.display());
    if a.shape {
        let r = monotonicity_report(p)?;
        for c in &r.checks {
            println!(
                "{} {}: expected {:?}, observed {:?}",
                if c.pass { "PASS" } else { "FAIL" },
                c.label,
                c.expected,
                c.observed
            );
        }
        if let Some(r2) = r.plane_r2 {
            println!("plane fit of broker value over (phi_I, phi_B): R^2 = {r2:.4}");
        }
    }
    Ok(())
}

fn fig4(cli: &Cli, p: &P, a: &Fig4Args) -> brokerflow::Result<()> {
    if a.points == 0 {
        return Err(Error::Config("--points must be >= 1".into()));
    }
    let curve = discount_curve(p, &ratio_grid(a.lo, a.hi, a.points))?;
    match (curve.argmax_ratio, curve.max_value) {
        (Some(r), Some(v)) => println!(
            "argmax ratio {r:.4} (k = {:.6e}), broker value {v:.6}",
            r * p.broker.k_b
        ),
        _ => println!("no valid non-degenerate point"),
    }
    let csv = out_file(cli, "fig4.csv")?;
    curve.write_csv(create(&csv)?)?;
    println!("wrote {}", csv.display());
    write_json(
        &out_file(cli, "fig4.json")?,
        &json!({
            "argmax_ratio": curve.argmax_ratio,
            "max_value": curve.max_value,
            "params": p.key_values(),
            "b": p.broker.b,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

fn demo(cli: &Cli, p: &P, a: &DemoArgs) -> brokerflow::Result<()> {
    let start = Instant::now();
    println!("== coefficients");
    coeffs(p)?;
    println!("== Monte Carlo check");
    let mc = McArgs {
        paths: a.paths,
        dt: 1e-2,
        horizon: None,
        scheme: "exact".into(),
    };
    let cfg = sim_config(p, &mc, cli.seed)?;
    write_json(&out_file(cli, "simulate.json")?, &mc_check(p, &cfg)?)?;
    println!("== synthetic calibration");
    let delta = 1e-3;
    let set = generate_sessions(p, a.days, delta, 1000, cli.seed)?;
    let sessions = out_file(cli, "sessions.csv")?;
    write_sessions(&set, &sessions)?;
    println!("wrote {}", sessions.display());
    let grid = GridSpec::default_for(delta);
    calibrate_report(
        cli,
        p,
        &set,
        Method::GridThenSimplex,
        &grid,
        None,
        "calibration",
    )?;
    println!("== liquidity discount curve");
    fig4(
        cli,
        p,
        &Fig4Args {
            points: 91,
            lo: 0.1,
            hi: 1.0,
        },
    )?;
    println!("# demo finished in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
