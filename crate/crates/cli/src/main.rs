use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use randne::bounds::measure_components;
use randne::dense::{singular_values, triangular_singular_values};
use randne::experiment::{
    self, preconditioner_seed, ExperimentConfig, ResidualGrid, SampleAmount, SeedSetup,
};
use randne::preconditioner::{self, Preconditioner};
use randne::problem::{self, LeastSquaresProblem};
use randne::randomize::SeededRng;
use randne::solvers;
use randne::validation;
use randne::Error;

#[derive(Parser)]
#[command(name = "randne", version, about = "Randomized preconditioned normal equations for dense least squares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic problem with known solution, condition and residual.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-8)]
        eta_r: f64,
    },
    /// Sketch a problem and write its triangular preconditioner.
    Precondition {
        #[command(flatten)]
        common: Common,
        /// Directory written by `generate`; otherwise one is generated from the flags.
        #[arg(long)]
        problem: Option<PathBuf>,
    },
    /// Solve one problem with the selected methods.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-8)]
        eta_r: f64,
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Directory written by `precondition`.
        #[arg(long)]
        preconditioner: Option<PathBuf>,
    },
    /// Sweep the residual norm over a log grid for every seed.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        log_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        log_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Evaluate bounds for one problem, or recompute them from a sweep's CSV.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// `bounds.csv`, or a `sweep.csv` with `bounds.csv` beside it.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        eta_r: f64,
    },
    /// Monte Carlo coverage of the probabilistic condition number guarantees.
    McCond {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// Run oracle checks on one problem; exits 3 when a check fails.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Check::All)]
        check: Check,
        #[arg(long, default_value_t = 0.0)]
        eta_r: f64,
        /// Perturbation size for the injection checks.
        #[arg(long, default_value_t = 1e-10)]
        epsilon: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        problem: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    ResidualIdentity,
    ReciprocalSv,
    PerturbPne,
    PerturbHpne,
    Nu,
    Problem,
    All,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Sample count, either a number or a multiple of n such as `3n`.
    #[arg(long)]
    c: Option<String>,
    /// Seed for single-problem commands; defaults to RANDNE_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed list for sweeps, e.g. `1,2,7-9`.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated subset of qr, ne, pne, hpne.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated bound names.
    #[arg(long)]
    bounds: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    /// Fresh sketches to try after a rank-deficient one.
    #[arg(long)]
    retries: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Lib(Error),
    Config(String),
    Check(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Check(_) => 3,
            CliError::Lib(e) => match e {
                Error::InvalidArgument(_) | Error::InvalidDimensions(_) => 2,
                e if e.is_io() => 4,
                _ => 3,
            },
        }
    }

    fn to_json(&self) -> Value {
        let (kind, message) = match self {
            CliError::Lib(e) => (e.kind(), e.to_string()),
            CliError::Config(m) => ("InvalidConfig", m.clone()),
            CliError::Check(m) => ("CheckFailed", m.clone()),
        };
        json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code() } })
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_list<T: std::str::FromStr<Err = Error>>(s: &str) -> CliResult<Vec<T>> {
    let items: Vec<T> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.parse().map_err(|e: Error| CliError::Config(e.to_string())))
        .collect::<CliResult<_>>()?;
    if items.is_empty() {
        return Err(CliError::Config(format!("empty list '{s}'")));
    }
    Ok(items)
}

fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::Config(format!("bad seed list '{s}'"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var("RANDNE_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("RANDNE_SEED '{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Config file, then flags. Seeds: `--seeds`, `--seed`, the file,
/// `RANDNE_SEED`, the built-in default.
fn resolve(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut file_seeds = false;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)?;
        let raw: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        file_seeds = raw.get("seeds").is_some();
        cfg = serde_json::from_value(raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    if let Some(v) = common.m {
        cfg.m = v;
    }
    if let Some(v) = common.n {
        cfg.n = v;
    }
    if let Some(v) = common.kappa {
        cfg.kappa = v;
    }
    if let Some(v) = &common.c {
        cfg.c = v.parse::<SampleAmount>().map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(v) = &common.seeds {
        cfg.seeds = parse_seeds(v)?;
    } else if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    } else if !file_seeds {
        if let Some(s) = env_seed()? {
            cfg.seeds = vec![s];
        }
    }
    if let Some(v) = &common.methods {
        cfg.methods = parse_list(v)?;
    }
    if let Some(v) = &common.bounds {
        cfg.bounds = parse_list(v)?;
    }
    if let Some(v) = &common.output_dir {
        cfg.output_dir = v.clone();
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    if let Some(v) = common.retries {
        cfg.retries = v;
    }
    Ok(cfg)
}

fn check_config(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

fn setup_pool(jobs: Option<usize>) {
    if let Some(j) = jobs {
        // A second call fails harmlessly; only one pool is ever needed.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
}

fn build_preconditioner(a: &randne::DenseMatrix, c: usize, seed: u64, retries: usize) -> CliResult<(Preconditioner, usize)> {
    let mut attempt = 0;
    loop {
        match Preconditioner::build_seeded(a, c, preconditioner_seed(seed, attempt)) {
            Err(Error::RankDeficientSketch { .. }) if attempt < retries => attempt += 1,
            other => return Ok((other?, attempt + 1)),
        }
    }
}

fn load_or_generate(cfg: &ExperimentConfig, dir: Option<&Path>, eta_r: f64) -> CliResult<LeastSquaresProblem> {
    match dir {
        Some(d) => Ok(LeastSquaresProblem::load(d)?),
        None => {
            check_config(cfg)?;
            Ok(problem::generate(cfg.m, cfg.n, cfg.kappa, eta_r, cfg.seeds[0])?)
        }
    }
}

fn sample_count_for(cfg: &ExperimentConfig, n: usize) -> CliResult<usize> {
    let c = cfg.c.resolve(n);
    if c < n {
        return Err(CliError::Config(format!("sample amount {} is below n = {n}", cfg.c)));
    }
    Ok(c)
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn check_json(p: &LeastSquaresProblem) -> Value {
    let c = p.check();
    json!({
        "x_star_norm": c.x_star_norm,
        "a_norm": c.a_norm,
        "cond_rel_error": c.cond_rel_error,
        "residual_norm": c.residual_norm,
        "residual_orthogonality": c.residual_orthogonality,
        "b_mismatch": c.b_mismatch,
        "holds": c.holds(p.eta_r),
    })
}

fn cmd_generate(common: &Common, eta_r: f64) -> CliResult<()> {
    let cfg = resolve(common)?;
    check_config(&cfg)?;
    let p = problem::generate(cfg.m, cfg.n, cfg.kappa, eta_r, cfg.seeds[0])?;
    p.save(&cfg.output_dir)?;
    print(&json!({
        "output_dir": cfg.output_dir,
        "problem": p.meta(),
        "check": check_json(&p),
    }));
    Ok(())
}

fn cmd_precondition(common: &Common, problem_dir: Option<&Path>) -> CliResult<()> {
    let cfg = resolve(common)?;
    let p = load_or_generate(&cfg, problem_dir, 0.0)?;
    let c = sample_count_for(&cfg, p.n())?;
    let (pc, attempts) = build_preconditioner(&p.a, c, p.seed, cfg.retries)?;
    let ap = preconditioner::apply(&p.a, &pc)?;
    pc.save(&cfg.output_dir)?;
    print(&json!({
        "output_dir": cfg.output_dir,
        "m": p.m(),
        "n": p.n(),
        "c": c,
        "seed": pc.seed,
        "attempts": attempts,
        "kappa_rs": triangular_singular_values(&pc.r_s).condition_number()?,
        "kappa_ap": singular_values(&ap).condition_number()?,
    }));
    Ok(())
}

fn rows_json(rows: &[experiment::SweepRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|r| {
                json!({
                    "method": r.method.name(),
                    "eta_r": r.eta_r,
                    "rel_error": r.rel_error,
                    "rel_residual": r.rel_residual,
                    "rel_residual_precond": r.rel_residual_precond,
                    "kappa_A": r.kappa_a,
                    "kappa_Ap": r.kappa_ap,
                    "seed": r.seed,
                    "error": r.error,
                })
            })
            .collect(),
    )
}

fn write_solve_csv(cfg: &ExperimentConfig, common: &Common, rows: &[experiment::SweepRow]) -> CliResult<()> {
    if common.output_dir.is_some() || common.config.is_some() {
        fs::create_dir_all(&cfg.output_dir)?;
        experiment::write_sweep_csv(rows, fs::File::create(cfg.output_dir.join("solve.csv"))?)?;
    }
    Ok(())
}

fn cmd_solve(common: &Common, eta_r: f64, problem_dir: Option<&Path>, pc_dir: Option<&Path>) -> CliResult<()> {
    let cfg = resolve(common)?;
    if problem_dir.is_none() && pc_dir.is_none() {
        // Same path as one point of a sweep, so the rows agree bit for bit.
        check_config(&cfg)?;
        let setup = SeedSetup::from_config(&cfg, cfg.seeds[0])?;
        let pt = setup.point(eta_r)?;
        let rows = pt.sweep_rows(&cfg.methods, &setup.spectra, setup.seed);
        write_solve_csv(&cfg, common, &rows)?;
        print(&json!({ "rows": rows_json(&rows), "components": pt.components }));
        return Ok(());
    }
    let p = load_or_generate(&cfg, problem_dir, eta_r)?;
    let pc = match pc_dir {
        Some(d) => Preconditioner::load(d)?,
        None => build_preconditioner(&p.a, sample_count_for(&cfg, p.n())?, p.seed, cfg.retries)?.0,
    };
    let ap = preconditioner::apply(&p.a, &pc)?;
    let spectra = randne::bounds::SystemSpectra::compute(&p.a, &ap, &pc.r_s)?;
    let rows: Vec<experiment::SweepRow> = cfg
        .methods
        .iter()
        .map(|&method| {
            let r = solvers::solve(&p, method, Some(&pc));
            experiment::SweepRow {
                method,
                eta_r: p.eta_r,
                rel_error: r.as_ref().ok().map(|r| r.rel_error),
                rel_residual: r.as_ref().ok().map(|r| r.rel_residual),
                rel_residual_precond: r.as_ref().ok().and_then(|r| r.rel_residual_precond),
                kappa_a: Some(spectra.kappa_a),
                kappa_ap: method.needs_preconditioner().then_some(spectra.kappa_ap),
                seed: p.seed,
                error: r.err().map(|e| experiment::err_text(&e)),
            }
        })
        .collect();
    write_solve_csv(&cfg, common, &rows)?;
    print(&json!({ "rows": rows_json(&rows) }));
    Ok(())
}

fn cmd_sweep(common: &Common, log_min: Option<f64>, log_max: Option<f64>, points: Option<usize>) -> CliResult<()> {
    let mut cfg = resolve(common)?;
    let g = &mut cfg.residual_grid;
    *g = ResidualGrid {
        log_min: log_min.unwrap_or(g.log_min),
        log_max: log_max.unwrap_or(g.log_max),
        points: points.unwrap_or(g.points),
    };
    check_config(&cfg)?;
    let res = experiment::run_sweep(&cfg)?;
    experiment::write_outputs(&res, &cfg.output_dir)?;
    let failed = res.rows.iter().filter(|r| r.error.is_some()).count();
    let seeds: Vec<Value> = res
        .seeds
        .iter()
        .map(|s| json!({ "seed": s.seed, "kappa_ap": s.kappa_ap, "spectra": s.spectra, "error": s.error }))
        .collect();
    print(&json!({
        "output_dir": cfg.output_dir,
        "rows": res.rows.len(),
        "failed_rows": failed,
        "grid_points": res.grid.len(),
        "seeds": seeds,
    }));
    Ok(())
}

fn cmd_bounds(common: &Common, from: Option<&Path>, eta_r: f64) -> CliResult<()> {
    let cfg = resolve(common)?;
    let Some(from) = from else {
        let p = load_or_generate(&cfg, None, eta_r)?;
        let (pc, _) = build_preconditioner(&p.a, sample_count_for(&cfg, p.n())?, p.seed, cfg.retries)?;
        let (comps, _) = measure_components(&p, &pc)?;
        let bounds: Vec<Value> = cfg
            .bounds
            .iter()
            .map(|&k| match comps.evaluate(k) {
                Ok(b) => serde_json::to_value(b).expect("serializable"),
                Err(e) => json!({ "kind": k, "error": experiment::err_text(&e) }),
            })
            .collect();
        print(&json!({ "components": comps, "bounds": bounds }));
        return Ok(());
    };
    let path = resolve_bounds_path(from)?;
    let (kinds, stored) = experiment::read_bounds_csv(fs::File::open(&path)?)?;
    let again = experiment::recompute_bounds(&stored);
    let mismatches = experiment::bound_mismatches(&stored, &again);
    if common.output_dir.is_some() {
        fs::create_dir_all(&cfg.output_dir)?;
        experiment::write_bounds_csv(&kinds, &again, fs::File::create(cfg.output_dir.join("bounds.csv"))?)?;
    }
    print(&json!({
        "from": path,
        "rows": stored.len(),
        "bounds": kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
        "mismatches": mismatches,
        "identical": mismatches == 0,
    }));
    if mismatches > 0 {
        return Err(CliError::Check(format!("{mismatches} bound cells differ from their recomputation")));
    }
    Ok(())
}

/// A `sweep.csv` points at the `bounds.csv` written next to it.
fn resolve_bounds_path(from: &Path) -> CliResult<PathBuf> {
    let head = fs::read_to_string(from)?;
    if head.starts_with("method,") {
        Ok(from.with_file_name("bounds.csv"))
    } else {
        Ok(from.to_path_buf())
    }
}

fn cmd_mc_cond(common: &Common, epsilon: f64, delta: f64, trials: usize) -> CliResult<()> {
    let cfg = resolve(common)?;
    check_config(&cfg)?;
    setup_pool(cfg.jobs);
    let seed = cfg.seeds[0];
    let a = problem::generate(cfg.m, cfg.n, cfg.kappa, 0.0, seed)?.a;
    let mut rng = SeededRng::new(preconditioner_seed(seed, 0));
    let report = match &common.c {
        Some(_) => validation::prob_cond_mc_with_c(&a, epsilon, delta, cfg.sample_count(), f64::NAN, trials, &mut rng)?,
        None => validation::prob_cond_mc(&a, epsilon, delta, trials, &mut rng)?,
    };
    let pass = report.min_coverage() >= report.threshold();
    print(&json!({
        "m": cfg.m,
        "n": cfg.n,
        "kappa": cfg.kappa,
        "seed": seed,
        "report": report,
        "threshold": report.threshold(),
        "pass": pass,
    }));
    Ok(())
}

fn cmd_validate(
    common: &Common,
    check: Check,
    eta_r: f64,
    epsilon: f64,
    trials: usize,
    problem_dir: Option<&Path>,
) -> CliResult<()> {
    let cfg = resolve(common)?;
    setup_pool(cfg.jobs);
    let p = load_or_generate(&cfg, problem_dir, eta_r)?;
    let (pc, _) = build_preconditioner(&p.a, sample_count_for(&cfg, p.n())?, p.seed, cfg.retries)?;
    let want = |c: Check| check == c || check == Check::All;
    let mut results = serde_json::Map::new();
    let mut failures = Vec::new();
    let mut record = |name: &str, pass: bool, detail: Value| {
        if !pass {
            failures.push(name.to_string());
        }
        results.insert(name.to_string(), json!({ "pass": pass, "detail": detail }));
    };

    if want(Check::Problem) {
        let c = check_json(&p);
        record("problem", c["holds"].as_bool().unwrap_or(false), c);
    }
    if want(Check::ResidualIdentity) {
        let d = validation::residual_identity_check(&p, &pc)?;
        record("residual-identity", d <= 1e-6, json!({ "relative_deviation": d, "tolerance": 1e-6 }));
    }
    if want(Check::ReciprocalSv) {
        let r = validation::reciprocal_sv_check(&p.a, &pc)?;
        let pass = r.max_deviation <= 1e-8 && r.kappa_deviation <= 1e-8;
        record("reciprocal-sv", pass, json!({ "check": r, "tolerance": 1e-8 }));
    }
    if want(Check::Nu) {
        let (comps, _) = measure_components(&p, &pc)?;
        record(
            "nu",
            comps.nu_in_range(),
            json!({ "nu_pne": comps.nu_pne, "nu_hpne": comps.nu_hpne }),
        );
    }
    let mut rng = SeededRng::new(preconditioner_seed(p.seed, 1000));
    for (c, name) in [(Check::PerturbPne, "perturb-pne"), (Check::PerturbHpne, "perturb-hpne")] {
        if want(c) {
            let t = if c == Check::PerturbPne {
                validation::perturb_check_t3(&p, &pc, epsilon, trials, &mut rng)?
            } else {
                validation::perturb_check_t2(&p, &pc, epsilon, trials, &mut rng)?
            };
            let dominated = t.iter().filter(|t| t.dominated).count();
            let worst = t
                .iter()
                .map(|t| t.actual_error / t.bound_value)
                .fold(0.0, f64::max);
            record(
                name,
                dominated == t.len(),
                json!({ "trials": t.len(), "dominated": dominated, "max_error_over_bound": worst, "epsilon": epsilon }),
            );
        }
    }
    print(&json!({ "seed": p.seed, "m": p.m(), "n": p.n(), "eta_r": p.eta_r, "checks": results }));
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("failed: {}", failures.join(", "))))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Generate { common, eta_r } => cmd_generate(common, *eta_r),
        Command::Precondition { common, problem } => cmd_precondition(common, problem.as_deref()),
        Command::Solve {
            common,
            eta_r,
            problem,
            preconditioner,
        } => cmd_solve(common, *eta_r, problem.as_deref(), preconditioner.as_deref()),
        Command::Sweep {
            common,
            log_min,
            log_max,
            points,
        } => cmd_sweep(common, *log_min, *log_max, *points),
        Command::Bounds { common, from, eta_r } => cmd_bounds(common, from.as_deref(), *eta_r),
        Command::McCond {
            common,
            epsilon,
            delta,
            trials,
        } => cmd_mc_cond(common, *epsilon, *delta, *trials),
        Command::Validate {
            common,
            check,
            eta_r,
            epsilon,
            trials,
            problem,
        } => cmd_validate(common, *check, *eta_r, *epsilon, *trials, problem.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
