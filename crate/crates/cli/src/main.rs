use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adamdp::adherence::{adherence_lp, AdherenceSpec};
use adamdp::adversarial::{horizon_for_budget, simulate_random_adherence, AdherenceDistribution};
use adamdp::analysis::theta_sweep;
use adamdp::constrained::{evaluate_constrained, mip_model, CardinalityBudget};
use adamdp::instances::{builtin, load_bundle, BUILTINS};
use adamdp::{
    check_saddle, robust_baseline_solve, robust_theta_solve, solve_adamdp, solve_nominal, BaselineAmbiguity, Error,
    InstanceBundle, SolveResult, StationaryPolicy, ThetaInterval,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod output;

use output::{csv_writer, g12, open_out};

/// Solver for adherence-aware MDPs.
#[derive(Parser, Debug)]
#[command(name = "adamdp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal recommendation for a given adherence level.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        theta: ThetaArg,
    },
    /// Optimal return and recommendation over a grid of adherence levels.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of grid points on [0,1].
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Width to which each breakpoint is bisected.
        #[arg(long, default_value_t = 1e-6)]
        bisection_tol: f64,
        /// Breakpoint file (default: next to --out with suffix `.breakpoints.csv`).
        #[arg(long)]
        breakpoints: Option<PathBuf>,
    },
    /// Monte Carlo return under random adherence decisions.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        alg: AlgArg,
        #[arg(long, value_enum, default_value_t = Dist::Bernoulli)]
        dist: Dist,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Periods per trial (default: enough for a tail below 1e-8).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Check that following with probability θ is the adversary's best response.
    CheckSaddle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        theta: f64,
    },
    /// Worst case when at most k states may deviate from the recommendation.
    Constrained {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        alg: AlgArg,
        #[arg(long)]
        k: usize,
        /// Also write the mixed-integer model to this file.
        #[arg(long)]
        mip: Option<PathBuf>,
    },
    /// Robust recommendation against an adherence interval or baseline set.
    Robust {
        #[command(flatten)]
        common: Common,
        /// Lower end of the adherence interval.
        #[arg(long, requires = "theta_hi", conflicts_with_all = ["theta", "baselines"])]
        theta_lo: Option<f64>,
        #[arg(long, requires = "theta_lo")]
        theta_hi: Option<f64>,
        /// Adherence level for baseline ambiguity.
        #[arg(long)]
        theta: Option<f64>,
        /// Comma-separated baseline names spanning the ambiguity set
        /// (default: the set stored in the instance file).
        #[arg(long, value_delimiter = ',')]
        baselines: Vec<String>,
    },
    /// Write the LP (or constrained MIP) model in CPLEX LP format.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Format::Lp)]
        format: Format,
        #[command(flatten)]
        theta: OptThetaArg,
        #[command(flatten)]
        alg: AlgArg,
        /// Deviation budget (mip format).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Load an instance and list every violated invariant.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Instance file (JSON).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    instance: Option<PathBuf>,
    /// Builtin instance name.
    #[arg(long)]
    builtin: Option<String>,
    /// Discount factor for parametrized builtins.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Reward offset for the toy builtin.
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// Name of the baseline policy.
    #[arg(long, default_value = "base")]
    baseline: String,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct ThetaArg {
    /// Scalar adherence level.
    #[arg(long)]
    theta: Option<f64>,
    /// Adherence levels from a file: one number (scalar), one row (per
    /// state) or one row per state (per state and action).
    #[arg(long)]
    theta_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = false, multiple = false)]
struct OptThetaArg {
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    theta_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AlgArg {
    /// Baseline name used as the recommendation (default: `alg` if the
    /// instance has it, else the nominal optimum).
    #[arg(long)]
    alg: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Dist {
    Bernoulli,
    Uniform,
    Constant,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Lp,
    Mip,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe => 0,
            Error::Io(_) => 1,
            Error::GuardExceeded { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        // a closed downstream pipe is not an error
        Failure {
            code: if e.kind() == std::io::ErrorKind::BrokenPipe {
                0
            } else {
                1
            },
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        let code = match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe => 0,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("ADAMDP_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Solve { common, theta } => cmd_solve(&common, &theta),
        Command::Sweep {
            common,
            grid,
            bisection_tol,
            breakpoints,
        } => cmd_sweep(&common, grid, bisection_tol, breakpoints.as_deref()),
        Command::Simulate {
            common,
            alg,
            dist,
            theta,
            trials,
            horizon,
        } => cmd_simulate(&common, &alg, dist, theta, trials, horizon),
        Command::CheckSaddle { common, theta } => cmd_check_saddle(&common, theta),
        Command::Constrained { common, alg, k, mip } => cmd_constrained(&common, &alg, k, mip.as_deref()),
        Command::Robust {
            common,
            theta_lo,
            theta_hi,
            theta,
            baselines,
        } => cmd_robust(&common, theta_lo.zip(theta_hi), theta, &baselines),
        Command::Export {
            common,
            format,
            theta,
            alg,
            k,
        } => cmd_export(&common, format, &theta, &alg, k),
        Command::Validate { common } => cmd_validate(&common),
    }
}

fn load(common: &Common) -> Result<InstanceBundle, Failure> {
    let bundle = match (&common.instance, &common.builtin) {
        (Some(path), _) => {
            if common.lambda.is_some() || common.epsilon.is_some() {
                log::warn!("--lambda/--epsilon only apply to builtins; ignored");
            }
            load_bundle(path).map_err(|e| {
                let mut f = Failure::from(e);
                f.message = format!("{}: {}", path.display(), f.message);
                f
            })?
        }
        (None, Some(name)) => builtin(name, common.lambda, common.epsilon)?,
        (None, None) => {
            return Err(invalid(format!(
                "need --instance or --builtin ({})",
                BUILTINS.join(", ")
            )))
        }
    };
    Ok(bundle)
}

/// Loads the instance and baseline and rejects incomplete instances.
fn load_ready(common: &Common) -> Result<(InstanceBundle, StationaryPolicy), Failure> {
    let bundle = load(common)?;
    bundle.instance.ensure_valid()?;
    let base = bundle.baseline(&common.baseline)?.clone();
    Ok((bundle, base))
}

fn recommendation(bundle: &InstanceBundle, alg: &AlgArg, tol: f64) -> Result<StationaryPolicy, Failure> {
    match &alg.alg {
        Some(name) => Ok(bundle.baseline(name)?.clone()),
        None if bundle.baselines.contains_key("alg") => Ok(bundle.baselines["alg"].clone()),
        None => {
            log::info!("no --alg given; recommending the nominal optimum");
            Ok(solve_nominal(&bundle.instance, tol)?.recommendation)
        }
    }
}

fn parse_theta_file(path: &Path) -> Result<AdherenceSpec, Failure> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| invalid(format!("{}:{}: '{t}' is not a number", path.display(), i + 1)))
            })
            .collect::<Result<Vec<f64>, Failure>>()?;
        rows.push(row);
    }
    match rows.len() {
        0 => Err(invalid(format!("{}: no adherence levels", path.display()))),
        1 if rows[0].len() == 1 => Ok(AdherenceSpec::Scalar(rows[0][0])),
        1 => Ok(AdherenceSpec::PerState(rows.remove(0))),
        _ => Ok(AdherenceSpec::PerStateAction(rows)),
    }
}

fn theta_spec(theta: Option<f64>, file: Option<&Path>) -> Result<Option<AdherenceSpec>, Failure> {
    match (theta, file) {
        (Some(t), _) => Ok(Some(AdherenceSpec::Scalar(t))),
        (None, Some(p)) => parse_theta_file(p).map(Some),
        (None, None) => Ok(None),
    }
}

fn policy_cell(bundle: &InstanceBundle, pi: &StationaryPolicy, s: usize) -> String {
    match pi.action(s) {
        Some(a) => bundle.action_names[a].clone(),
        None => pi
            .row(s)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(a, p)| format!("{}:{}", bundle.action_names[a], g12(*p)))
            .collect::<Vec<_>>()
            .join(" "),
    }
}

fn print_solution(bundle: &InstanceBundle, res: &SolveResult) {
    println!("recommendation:");
    for (s, name) in bundle.state_names.iter().enumerate() {
        println!("  {name:>8} -> {}", policy_cell(bundle, &res.recommendation, s));
    }
    println!("return: {}", g12(res.ret));
    println!("iterations: {}", res.iterations);
}

fn write_values(bundle: &InstanceBundle, res: &SolveResult, path: &Path) -> Outcome {
    let mut w = csv_writer(Some(path))?;
    w.write_record(["state", "name", "recommendation", "value"])?;
    for (s, name) in bundle.state_names.iter().enumerate() {
        w.write_record([
            s.to_string(),
            name.clone(),
            policy_cell(bundle, &res.recommendation, s),
            g12(res.value[s]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_solve(common: &Common, theta: &ThetaArg) -> Outcome {
    let (bundle, base) = load_ready(common)?;
    let spec = theta_spec(theta.theta, theta.theta_file.as_deref())?.expect("clap requires one theta source");
    let res = solve_adamdp(&bundle.instance, &base, &spec, common.tol)?;
    print_solution(&bundle, &res);
    if let Some(path) = &common.out {
        write_values(&bundle, &res, path)?;
    }
    Ok(())
}

fn breakpoint_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.breakpoints.csv"))
}

fn cmd_sweep(common: &Common, grid: usize, bisection_tol: f64, breakpoints: Option<&Path>) -> Outcome {
    let (bundle, base) = load_ready(common)?;
    let sweep = theta_sweep(&bundle.instance, &base, grid, bisection_tol)?;
    let det = sweep.deterioration();
    let mut w = csv_writer(common.out.as_deref())?;
    w.write_record(["theta", "return_opt", "return_naive", "deterioration", "segment_id"])?;
    for (i, &t) in sweep.grid.iter().enumerate() {
        w.write_record([
            g12(t),
            g12(sweep.returns_opt[i]),
            g12(sweep.returns_naive[i]),
            det[i].map_or_else(|| "nan".to_string(), g12),
            sweep.segment_of(t).to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);

    let side = breakpoints
        .map(Path::to_path_buf)
        .or_else(|| common.out.as_deref().map(breakpoint_path));
    match side {
        Some(path) => {
            let mut w = csv_writer(Some(&path))?;
            w.write_record(["breakpoint"])?;
            for b in &sweep.breakpoints {
                w.write_record([g12(*b)])?;
            }
            w.flush()?;
        }
        None => {
            let list: Vec<String> = sweep.breakpoints.iter().map(|b| g12(*b)).collect();
            eprintln!("breakpoints: {}", list.join(", "));
        }
    }
    Ok(())
}

fn cmd_simulate(
    common: &Common,
    alg: &AlgArg,
    dist: Dist,
    theta: f64,
    trials: usize,
    horizon: Option<usize>,
) -> Outcome {
    let (bundle, base) = load_ready(common)?;
    let pi_alg = recommendation(&bundle, alg, common.tol)?;
    let dist = match dist {
        Dist::Bernoulli => AdherenceDistribution::Bernoulli(theta),
        Dist::Uniform => AdherenceDistribution::Uniform(theta),
        Dist::Constant => AdherenceDistribution::Constant(theta),
    };
    let horizon = horizon.unwrap_or_else(|| horizon_for_budget(&bundle.instance, 1e-8));
    let r = simulate_random_adherence(&bundle.instance, &pi_alg, &base, dist, horizon, trials, common.seed)?;
    let mut w = csv_writer(common.out.as_deref())?;
    w.write_record(["mean", "std_error", "trials", "horizon", "seed", "truncation"])?;
    w.write_record([
        g12(r.mean),
        g12(r.std_error),
        r.trials.to_string(),
        r.horizon.to_string(),
        r.seed.to_string(),
        g12(r.truncation),
    ])?;
    w.flush()?;
    Ok(())
}

fn join_u(u: &[f64]) -> String {
    u.iter().map(|x| g12(*x)).collect::<Vec<_>>().join(" ")
}

fn cmd_check_saddle(common: &Common, theta: f64) -> Outcome {
    let (bundle, base) = load_ready(common)?;
    let r = check_saddle(&bundle.instance, &base, theta, common.tol.max(1e-9))?;
    let mut w = csv_writer(common.out.as_deref())?;
    w.write_record([
        "theta",
        "optimum",
        "unconstrained_return",
        "time_invariant_return",
        "scalar_max_min",
        "scalar_min_max",
        "grid_resolution",
        "max_u_deviation",
        "max_gap",
        "unconstrained_u",
        "time_invariant_u",
        "passed",
    ])?;
    w.write_record([
        g12(r.theta),
        g12(r.optimum.ret),
        g12(r.unconstrained_return),
        g12(r.time_invariant_return),
        g12(r.scalar_max_min),
        g12(r.scalar_min_max),
        g12(r.grid_resolution),
        g12(r.max_u_deviation),
        g12(r.max_gap),
        join_u(&r.unconstrained_u),
        join_u(&r.time_invariant_u),
        r.passed.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn cmd_constrained(common: &Common, alg: &AlgArg, k: usize, mip: Option<&Path>) -> Outcome {
    let (bundle, base) = load_ready(common)?;
    let pi_alg = recommendation(&bundle, alg, common.tol)?;
    let budget = CardinalityBudget { k };
    let r = evaluate_constrained(&bundle.instance, &pi_alg, &base, budget)?;
    let mut w = csv_writer(common.out.as_deref())?;
    w.write_record(["k", "worst_return", "worst_u", "subsets_evaluated"])?;
    w.write_record([
        k.to_string(),
        g12(r.worst_return),
        r.worst_u.iter().map(u8::to_string).collect::<Vec<_>>().join(" "),
        r.subsets_evaluated.to_string(),
    ])?;
    w.flush()?;
    if let Some(path) = mip {
        let mut f = open_out(Some(path))?;
        mip_model(&bundle.instance, &pi_alg, &base, budget)?.write(&mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn cmd_robust(common: &Common, interval: Option<(f64, f64)>, theta: Option<f64>, names: &[String]) -> Outcome {
    let (bundle, base) = load_ready(common)?;
    let res = match (interval, theta) {
        (Some((lo, hi)), _) => {
            let r = robust_theta_solve(&bundle.instance, &base, ThetaInterval::new(lo, hi)?, common.tol)?;
            let c = &r.certificate;
            println!(
                "certificate: max_min={} recommendation_min={} grid_points={} policies={} holds={}",
                g12(c.max_min),
                g12(c.recommendation_min),
                c.grid_points,
                c.policies_checked,
                c.holds
            );
            r.result
        }
        (None, Some(t)) => {
            let amb = if names.is_empty() {
                bundle
                    .ambiguity
                    .clone()
                    .ok_or_else(|| invalid("instance has no ambiguity set; pass --baselines"))?
            } else {
                let pols = names
                    .iter()
                    .map(|n| bundle.baseline(n).cloned())
                    .collect::<adamdp::Result<Vec<_>>>()?;
                BaselineAmbiguity::from_policies(&pols)?
            };
            robust_baseline_solve(&bundle.instance, &amb, t, common.tol)?
        }
        (None, None) => return Err(invalid("need --theta-lo/--theta-hi or --theta")),
    };
    print_solution(&bundle, &res);
    if let Some(path) = &common.out {
        write_values(&bundle, &res, path)?;
    }
    Ok(())
}

fn cmd_export(common: &Common, format: Format, theta: &OptThetaArg, alg: &AlgArg, k: Option<usize>) -> Outcome {
    let (bundle, base) = load_ready(common)?;
    let model = match format {
        Format::Lp => {
            let spec = theta_spec(theta.theta, theta.theta_file.as_deref())?
                .ok_or_else(|| invalid("lp export needs --theta or --theta-file"))?;
            adherence_lp(&bundle.instance, &base, &spec)?
        }
        Format::Mip => {
            let k = k.ok_or_else(|| invalid("mip export needs --k"))?;
            let pi_alg = recommendation(&bundle, alg, common.tol)?;
            mip_model(&bundle.instance, &pi_alg, &base, CardinalityBudget { k })?
        }
    };
    let mut out = open_out(common.out.as_deref())?;
    model.write(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_validate(common: &Common) -> Outcome {
    let bundle = load(common)?;
    let violations = bundle.instance.validate();
    println!(
        "{}: {} states, {} actions, baselines: {}",
        bundle.name,
        bundle.instance.n_states(),
        bundle.instance.n_actions(),
        bundle.baselines.keys().cloned().collect::<Vec<_>>().join(", ")
    );
    if violations.is_empty() {
        println!("ok");
        return Ok(());
    }
    for v in &violations {
        println!("  {v}");
    }
    Err(invalid(format!("{} violation(s)", violations.len())))
}
