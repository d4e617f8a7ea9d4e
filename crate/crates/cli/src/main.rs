use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use robust_iwf::analysis::{ACTIVITY_TOL, POWER_ITER_MAX, POWER_ITER_TOL};
use robust_iwf::experiments::{reproduce, Target};
use robust_iwf::game::{max_deviation, DEFAULT_CONV_TOL, DEFAULT_MAX_ITERS};
use robust_iwf::model::FEASIBILITY_TOL;
use robust_iwf::waterfill::{BUDGET_TOL, MAX_BISECT};
use robust_iwf::{
    check_convergence, check_uniqueness, generate_scenario, interference_upper_bound, run_iwfa,
    table1_scenario, Error, Evaluation, InitialProfile, IterationConfig, Profile, Regime, Scenario,
    ScenarioGeneratorSpec, Schedule, SweepMode, SweepSpec, Uncertainty,
};

const EXIT_USAGE: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "robust-iwf",
    version,
    about = "Robust iterative water-filling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run iterative water-filling on one scenario.
    Solve {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        unc: UncertaintyArgs,
        #[command(flatten)]
        iter: IterationArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Evaluate the uniqueness and convergence conditions, or test a profile
    /// for being a fixed point.
    Check {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        unc: UncertaintyArgs,
        /// Power profile (JSON matrix or a `solve` report) to test.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Require the profile to be an equilibrium.
        #[arg(long, requires = "profile")]
        equilibrium: bool,
        /// Require the uniqueness condition.
        #[arg(long)]
        uniqueness: bool,
        /// Require the convergence condition.
        #[arg(long)]
        convergence: bool,
        /// Tolerance of the equilibrium test.
        #[arg(long, default_value_t = 1e-6)]
        eq_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Monte-Carlo sweep over an uncertainty grid.
    Sweep {
        #[command(flatten)]
        gen: GeneratorArgs,
        #[arg(long, value_enum, default_value_t = SweepKind::WorstCase)]
        sweep_mode: SweepKind,
        /// Grid values: epsilon, or delta0 for probabilistic sweeps.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        /// Fixed epsilon of probabilistic sweeps.
        #[arg(long, default_value_t = 0.8)]
        epsilon: f64,
        #[arg(long, default_value_t = 20)]
        realizations: usize,
        #[arg(long, value_enum, default_value_t = EvalKind::Nominal)]
        evaluation: EvalKind,
        #[command(flatten)]
        iter: IterationArgs,
        #[command(flatten)]
        out: OutputArgs,
        #[command(flatten)]
        jobs: JobsArgs,
    },
    /// Regenerate a reference table or figure and check it.
    Reproduce {
        target: String,
        /// Directory for the artifacts; the summary goes to stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        jobs: JobsArgs,
    },
}

#[derive(Args, Debug)]
struct SourceArgs {
    /// Scenario JSON file, or `table1` for the built-in 3-user network.
    #[arg(long, conflicts_with = "regime")]
    scenario: Option<String>,
    #[command(flatten)]
    gen: GeneratorArgs,
}

#[derive(Args, Debug)]
struct GeneratorArgs {
    /// Draw a random scenario in this regime.
    #[arg(long, value_enum)]
    regime: Option<RegimeKind>,
    #[arg(long, default_value_t = 8)]
    users: usize,
    #[arg(long, default_value_t = 64)]
    channels: usize,
    #[arg(long, default_value_t = 0)]
    gen_seed: u64,
    #[arg(long)]
    no_fading: bool,
}

#[derive(Args, Debug)]
struct UncertaintyArgs {
    #[arg(long, value_enum, default_value_t = ModeKind::Nominal)]
    mode: ModeKind,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    delta0: f64,
}

#[derive(Args, Debug)]
struct IterationArgs {
    #[arg(long, value_enum, default_value_t = ScheduleKind::Sequential)]
    schedule: ScheduleKind,
    #[arg(long, default_value_t = DEFAULT_CONV_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Zeros)]
    init: InitKind,
    /// Seed of the random initial profile.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct JobsArgs {
    /// Worker threads; defaults to the number of available processors.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RegimeKind {
    Low,
    High,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeKind {
    Nominal,
    WorstCase,
    Probabilistic,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScheduleKind {
    Sequential,
    Simultaneous,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum InitKind {
    Zeros,
    Masks,
    Uniform,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SweepKind {
    WorstCase,
    Probabilistic,
    KnownValue,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum EvalKind {
    Nominal,
    Robust,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Json,
    Csv,
}

enum Failure {
    Usage(String),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
    }
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Solve {
            source,
            unc,
            iter,
            out,
        } => solve(&source, &unc, &iter, &out),
        Command::Check {
            source,
            unc,
            profile,
            equilibrium,
            uniqueness,
            convergence,
            eq_tol,
            out,
        } => {
            let req = Requested {
                // conditions are the default request when nothing is named
                uniqueness: uniqueness || !(equilibrium || convergence),
                convergence: convergence || !(equilibrium || uniqueness),
                equilibrium,
            };
            check(&source, &unc, profile.as_deref(), req, eq_tol, &out)
        }
        Command::Sweep {
            gen,
            sweep_mode,
            grid,
            epsilon,
            realizations,
            evaluation,
            iter,
            out,
            jobs,
        } => with_jobs(&jobs, || {
            sweep(
                &gen,
                sweep_mode,
                grid,
                epsilon,
                realizations,
                evaluation,
                &iter,
                &out,
            )
        }),
        Command::Reproduce {
            target,
            out_dir,
            jobs,
        } => with_jobs(&jobs, || reproduce_cmd(&target, out_dir.as_deref())),
    }
}

fn with_jobs(jobs: &JobsArgs, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs.jobs {
        if n == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn generator(gen: &GeneratorArgs, regime: RegimeKind) -> ScenarioGeneratorSpec {
    let regime = match regime {
        RegimeKind::Low => Regime::LowInterference,
        RegimeKind::High => Regime::HighInterference,
    };
    let mut spec = ScenarioGeneratorSpec::new(regime, gen.users, gen.channels, gen.gen_seed);
    spec.fading = !gen.no_fading;
    spec
}

fn load_scenario(source: &SourceArgs) -> Result<(Scenario, Value), Failure> {
    match (&source.scenario, source.gen.regime) {
        (Some(name), None) if name == "table1" => Ok((table1_scenario(), json!("table1"))),
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {path}: {e}")))?;
            let scn =
                Scenario::from_json(&text).map_err(|e| Failure::Usage(format!("{path}: {e}")))?;
            Ok((scn, json!({ "file": path })))
        }
        (None, Some(regime)) => {
            let spec = generator(&source.gen, regime);
            let scn = generate_scenario(&spec)?;
            Ok((scn, json!({ "generator": spec })))
        }
        (None, None) => Err(Failure::Usage(
            "a scenario source is required: --scenario <path|table1> or --regime <low|high>".into(),
        )),
        (Some(_), Some(_)) => Err(Failure::Usage(
            "--scenario and --regime are mutually exclusive".into(),
        )),
    }
}

fn uncertainty(args: &UncertaintyArgs, scn: &Scenario) -> Result<Uncertainty, Failure> {
    let (m, k) = (scn.num_users(), scn.num_channels());
    Ok(match args.mode {
        ModeKind::Nominal => Uncertainty::nominal(m, k),
        ModeKind::WorstCase => Uncertainty::worst_case_uniform(m, k, args.epsilon)?,
        ModeKind::Probabilistic => {
            Uncertainty::probabilistic_uniform(m, k, args.epsilon, args.delta0)?
        }
    })
}

fn iteration(args: &IterationArgs) -> Result<IterationConfig<f64>, Failure> {
    if !(args.tol > 0.0) || args.max_iters == 0 {
        return Err(Failure::Usage(
            "--tol must be positive and --max-iters at least 1".into(),
        ));
    }
    let schedule = match args.schedule {
        ScheduleKind::Sequential => Schedule::Sequential,
        ScheduleKind::Simultaneous => Schedule::Simultaneous,
    };
    let initial = match args.init {
        InitKind::Zeros => InitialProfile::Zeros,
        InitKind::Masks => InitialProfile::Masks,
        InitKind::Uniform => InitialProfile::UniformBudget,
        InitKind::Random => InitialProfile::Random(args.seed),
    };
    Ok(IterationConfig::new(schedule)
        .with_initial(initial)
        .with_tol(args.tol)
        .with_max_iters(args.max_iters))
}

fn constants() -> Value {
    json!({
        "feasibility_tol": FEASIBILITY_TOL,
        "budget_tol": BUDGET_TOL,
        "max_bisect": MAX_BISECT,
        "activity_tol": ACTIVITY_TOL,
        "power_iter_tol": POWER_ITER_TOL,
        "power_iter_max": POWER_ITER_MAX,
    })
}

fn metadata(command: &str, fields: Value) -> Value {
    let mut meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "constants": constants(),
    });
    if let (Value::Object(m), Value::Object(f)) = (&mut meta, fields) {
        m.extend(f);
    }
    meta
}

fn name<V: ValueEnum>(v: V) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

fn unc_meta(args: &UncertaintyArgs) -> Value {
    json!({ "mode": name(args.mode), "epsilon": args.epsilon, "delta0": args.delta0 })
}

fn iter_meta(args: &IterationArgs) -> Value {
    json!({
        "schedule": name(args.schedule),
        "tol": args.tol,
        "max_iters": args.max_iters,
        "init": name(args.init),
        "seed": args.seed,
    })
}

/// Metadata as `# key: value` lines heading a CSV file.
fn csv_preamble(meta: &Value) -> String {
    let mut s = String::new();
    if let Value::Object(m) = meta {
        for (k, v) in m {
            s.push_str(&format!("# {k}: {v}\n"));
        }
    }
    s
}

fn emit(out: &OutputArgs, meta: &Value, body: Value, csv: impl FnOnce() -> String) -> CliResult {
    let text = match out.format {
        Format::Json => {
            let mut doc = json!({ "metadata": meta });
            if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
                d.extend(b);
            }
            serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n"
        }
        Format::Csv => csv_preamble(meta) + &csv(),
    };
    write_text(out.out.as_deref(), &text)
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn profile_csv(profile: &Profile) -> String {
    let mut s = String::from("user");
    for k in 0..profile.num_channels() {
        s.push_str(&format!(",p{}", k + 1));
    }
    s.push('\n');
    for (i, row) in profile.rows().enumerate() {
        s.push_str(&(i + 1).to_string());
        for p in row {
            s.push_str(&format!(",{p}"));
        }
        s.push('\n');
    }
    s
}

fn solve(
    source: &SourceArgs,
    unc: &UncertaintyArgs,
    iter: &IterationArgs,
    out: &OutputArgs,
) -> CliResult {
    let (scn, origin) = load_scenario(source)?;
    let uncertainty = uncertainty(unc, &scn)?;
    let cfg = iteration(iter)?;
    let report = run_iwfa(&scn, &uncertainty, &cfg)?;
    let meta = metadata(
        "solve",
        json!({ "scenario": origin, "uncertainty": unc_meta(unc), "iteration": iter_meta(iter) }),
    );
    emit(out, &meta, json!({ "report": report }), || {
        profile_csv(&report.profile)
    })?;
    if report.converged {
        Ok(())
    } else {
        eprintln!(
            "not converged after {} rounds (last change {:e})",
            report.iterations,
            report.residual_trace.last().copied().unwrap_or(f64::NAN)
        );
        Err(Failure::NotConverged)
    }
}

#[derive(Clone, Copy)]
struct Requested {
    uniqueness: bool,
    convergence: bool,
    equilibrium: bool,
}

fn load_profile(path: &Path) -> Result<Profile, Failure> {
    let bad = |e: String| Failure::Usage(format!("{}: {e}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    // a bare matrix or the report written by `solve`
    let matrix = match value.pointer("/report/profile") {
        Some(p) => p.clone(),
        None => value,
    };
    serde_json::from_value(matrix).map_err(|e| bad(format!("not a power profile: {e}")))
}

fn check(
    source: &SourceArgs,
    unc: &UncertaintyArgs,
    profile: Option<&Path>,
    req: Requested,
    eq_tol: f64,
    out: &OutputArgs,
) -> CliResult {
    let (scn, origin) = load_scenario(source)?;
    let uncertainty = uncertainty(unc, &scn)?;
    let mut report = check_uniqueness(&scn, &uncertainty)?;
    let conv = check_convergence(&scn, &uncertainty, &interference_upper_bound(&scn))?;
    report.convergence_lhs = conv.convergence_lhs;
    report.convergence_holds = conv.convergence_holds;

    let deviation = match profile {
        Some(p) => {
            let prof = load_profile(p)?;
            prof.check_feasible(&scn)?;
            Some(max_deviation(&scn, &uncertainty, &prof).unwrap_or(f64::INFINITY))
        }
        None => None,
    };
    let is_eq = deviation.map(|d| d <= eq_tol);

    let passed = (!req.uniqueness || report.uniqueness_holds == Some(true))
        && (!req.convergence || report.convergence_holds == Some(true))
        && (!req.equilibrium || is_eq == Some(true));

    let meta = metadata(
        "check",
        json!({
            "scenario": origin,
            "uncertainty": unc_meta(unc),
            "profile": profile.map(|p| p.display().to_string()),
            "requested": {
                "uniqueness": req.uniqueness,
                "convergence": req.convergence,
                "equilibrium": req.equilibrium,
            },
            "eq_tol": eq_tol,
        }),
    );
    let body = json!({
        "conditions": report,
        "equilibrium": { "max_deviation": deviation, "holds": is_eq },
        "passed": passed,
    });
    emit(out, &meta, body, || {
        let mut s = String::from("quantity,value\n");
        for (k, lhs) in report.per_channel_lhs.iter().enumerate() {
            s.push_str(&format!("uniqueness_lhs_channel_{},{lhs}\n", k + 1));
        }
        let opt = |v: Option<bool>| v.map_or("".to_string(), |b| b.to_string());
        s.push_str(&format!(
            "uniqueness_holds,{}\n",
            opt(report.uniqueness_holds)
        ));
        s.push_str(&format!(
            "convergence_lhs,{}\n",
            report
                .convergence_lhs
                .map_or(String::new(), |v| v.to_string())
        ));
        s.push_str(&format!(
            "convergence_holds,{}\n",
            opt(report.convergence_holds)
        ));
        if let Some(d) = deviation {
            s.push_str(&format!("equilibrium_max_deviation,{d}\n"));
            s.push_str(&format!("equilibrium_holds,{}\n", opt(is_eq)));
        }
        s.push_str(&format!("passed,{passed}\n"));
        s
    })?;
    if passed {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    gen: &GeneratorArgs,
    kind: SweepKind,
    grid: Vec<f64>,
    epsilon: f64,
    realizations: usize,
    evaluation: EvalKind,
    iter: &IterationArgs,
    out: &OutputArgs,
) -> CliResult {
    let spec = generator(gen, gen.regime.unwrap_or(RegimeKind::Low));
    let mode = match kind {
        SweepKind::WorstCase => SweepMode::WorstCase,
        SweepKind::Probabilistic => SweepMode::Probabilistic { epsilon },
        SweepKind::KnownValue => SweepMode::KnownValueInflation,
    };
    let evaluation = match evaluation {
        EvalKind::Nominal => Evaluation::Nominal,
        EvalKind::Robust => Evaluation::Robust,
    };
    let sweep_spec = SweepSpec::new(mode, grid, realizations).with_evaluation(evaluation);
    let cfg = iteration(iter)?;
    let result = robust_iwf::run_sweep(&spec, &sweep_spec, &cfg)?;
    let meta = metadata(
        "sweep",
        json!({
            "generator": spec,
            "sweep": sweep_spec,
            "iteration": iter_meta(iter),
            "threads": rayon::current_num_threads(),
        }),
    );
    emit(out, &meta, json!({ "result": result }), || result.to_csv())
}

fn reproduce_cmd(target: &str, out_dir: Option<&Path>) -> CliResult {
    let target: Target = target.parse()?;
    let rep = reproduce(target)?;
    let name = serde_json::to_value(target).expect("target serializes");
    let name = name.as_str().unwrap_or("target");
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
        let meta = metadata(
            "reproduce",
            json!({ "target": name, "threads": rayon::current_num_threads() }),
        );
        let doc = json!({ "metadata": meta, "reproduction": rep });
        let text = serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n";
        write_text(Some(&dir.join(format!("{name}.json"))), &text)?;
        if let Some(fig) = &rep.figure {
            for (n, sweep) in fig.sweeps.iter().enumerate() {
                let path = dir.join(format!("{name}_sweep{}.csv", n + 1));
                write_text(Some(&path), &(csv_preamble(&meta) + &sweep.to_csv()))?;
            }
        }
    }
    for t in &rep.tables {
        println!(
            "{name} eps={} converged={} rounds={} supports={:?} nominal_utilities={:?}",
            t.epsilon, t.report.converged, t.report.iterations, t.supports, t.nominal_utilities
        );
    }
    if let Some(fig) = &rep.figure {
        for sweep in &fig.sweeps {
            print!("{}", sweep.to_csv());
        }
    }
    for c in &rep.checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if rep.passed() {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}
