//! Command-line front end: config ingestion, the `check`, `solve` and
//! `sweep` commands, and report files.
//!
//! Exit codes: 0 pass, 2 usage or config error, 3 condition refused,
//! 4 verification failure, 5 solver non-convergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::descent::SolverOptions;
use crate::ensemble::{fmt17, PlayerGrid, TrajectoryGrid};
use crate::equilibrium::{solve_equilibrium, CheckOptions, CollectiveControl, EquilibriumOptions, VerificationBundle};
use crate::error::Error;
use crate::model::{check_small_time_condition, PotentialSpec, ProblemSpec, SmallTimeCheck};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;
pub const EXIT_NONCONVERGENCE: i32 = 5;

/// Env var capping the worker pool.
pub const THREADS_ENV: &str = "MFG_NASH_THREADS";

#[derive(Parser, Debug)]
#[command(name = "mfg-nash", version, about = "Finite-player mean field game equilibria with verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run config (TOML, or JSON by `.json` extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Solve even when the small-time condition fails.
    #[arg(long, global = true)]
    pub force: bool,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evaluate the small-time condition.
    Check,
    /// Solve and verify one instance.
    Solve,
    /// Solve once per value of one parameter.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "T")]
    Horizon,
    #[value(name = "beta")]
    Beta,
    #[value(name = "N")]
    Players,
    #[value(name = "M")]
    Steps,
}

/// Where the terminal ensemble `X*` comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSource {
    /// Flat `N x d` list.
    Points { points: Vec<f64> },
    /// File in the trajectory CSV layout; its last time slice is used.
    Csv { path: PathBuf },
    /// Player `i` at `low + (i + ½)(high - low)/N` in every coordinate.
    Uniform {
        #[serde(default = "neg_one")]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    /// Independent normal coordinates.
    Gaussian {
        seed: u64,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        std: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn neg_one() -> f64 {
    -1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `N`; inferred from the points when the terminal source lists them.
    #[serde(default)]
    pub players: Option<usize>,
    /// `M`.
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemSpec<f64>,
    pub grid: GridConfig,
    pub terminal: TerminalSource,
    pub solver: SolverOptions<f64>,
    pub checks: CheckOptions<f64>,
    /// Not echoed: results do not depend on it.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub seed: u64,
}

const TOP_KEYS: &[&str] = &["problem", "grid", "terminal", "solver", "checks", "output_dir", "seed"];
const PROBLEM_KEYS: &[&str] = &["dimension", "horizon", "lagrangian", "phi", "psi"];
const GRID_KEYS: &[&str] = &["players", "steps"];

fn keys_of<S: Serialize>(default: &S) -> Vec<String> {
    match serde_json::to_value(default) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn unknown_keys(section: &str, value: &Value, known: &[String], errors: &mut Vec<String>) {
    if let Value::Object(m) = value {
        for k in m.keys() {
            if !known.iter().any(|x| x == k) {
                let path = if section.is_empty() { k.clone() } else { format!("{section}.{k}") };
                errors.push(format!("{path}: unknown key"));
            }
        }
    } else {
        errors.push(format!("{section}: expected a table"));
    }
}

fn section<'a>(root: &'a Map<String, Value>, key: &str, required: bool, errors: &mut Vec<String>) -> Option<&'a Value> {
    let v = root.get(key);
    if v.is_none() && required {
        errors.push(format!("{key}: missing required key"));
    }
    v
}

fn typed<T: for<'de> Deserialize<'de>>(path: &str, value: &Value, errors: &mut Vec<String>) -> Option<T> {
    match serde_json::from_value(value.clone()) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{path}: {e}"));
            None
        }
    }
}

fn strings(keys: &[&str]) -> Vec<String> {
    keys.iter().map(|s| s.to_string()).collect()
}

/// Reads and validates a config, reporting every problem found.
pub fn parse_config(path: &Path) -> Result<RunConfig, Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, is_json, base)
}

/// As [`parse_config`], with relative paths resolved against `base`.
pub fn parse_config_str(text: &str, is_json: bool, base: &Path) -> Result<RunConfig, Vec<String>> {
    let root: Value = if is_json {
        serde_json::from_str(text).map_err(|e| vec![format!("json: {e}")])?
    } else {
        toml::from_str(text).map_err(|e| vec![format!("toml: {e}")])?
    };
    let Value::Object(root) = root else {
        return Err(vec!["config must be a table".into()]);
    };
    let mut errors = Vec::new();
    unknown_keys("", &Value::Object(root.clone()), &strings(TOP_KEYS), &mut errors);

    let problem = section(&root, "problem", true, &mut errors).and_then(|p| {
        unknown_keys("problem", p, &strings(PROBLEM_KEYS), &mut errors);
        for k in ["dimension", "horizon"] {
            if p.get(k).is_none() {
                errors.push(format!("problem.{k}: missing required key"));
            }
        }
        let mut p = p.clone();
        if let Value::Object(m) = &mut p {
            for k in ["phi", "psi"] {
                m.entry(k).or_insert_with(|| json!({"kind": "zero"}));
            }
            for k in ["dimension", "horizon"] {
                if !m.contains_key(k) {
                    return None;
                }
            }
        }
        typed::<ProblemSpec<f64>>("problem", &p, &mut errors)
    });
    if let Some(p) = &problem {
        if let Err(e) = p.validate() {
            errors.push(format!("problem: {e}"));
        }
    }

    let grid = section(&root, "grid", true, &mut errors).and_then(|g| {
        unknown_keys("grid", g, &strings(GRID_KEYS), &mut errors);
        if g.get("steps").is_none() {
            errors.push("grid.steps: missing required key".into());
            return None;
        }
        typed::<GridConfig>("grid", g, &mut errors)
    });
    if let Some(g) = &grid {
        if g.steps < 2 {
            errors.push("grid.steps: must be at least 2".into());
        }
        if g.players == Some(0) {
            errors.push("grid.players: must be at least 1".into());
        }
    }

    let terminal = section(&root, "terminal", true, &mut errors)
        .and_then(|t| typed::<TerminalSource>("terminal", t, &mut errors))
        .map(|t| match t {
            TerminalSource::Csv { path } if path.is_relative() => TerminalSource::Csv { path: base.join(path) },
            other => other,
        });
    if let Some(TerminalSource::Csv { path }) = &terminal {
        if !path.exists() {
            errors.push(format!("terminal.path: {} does not exist", path.display()));
        }
    }

    let solver = match section(&root, "solver", false, &mut errors) {
        Some(s) => {
            unknown_keys("solver", s, &keys_of(&SolverOptions::<f64>::default()), &mut errors);
            typed::<SolverOptions<f64>>("solver", s, &mut errors)
        }
        None => Some(SolverOptions::default()),
    };
    if let Some(s) = &solver {
        if !(s.tol > 0.0) {
            errors.push("solver.tol: must be positive".into());
        }
        if !(s.backtrack > 0.0 && s.backtrack < 1.0) {
            errors.push("solver.backtrack: must lie in (0, 1)".into());
        }
        if !(s.armijo_c > 0.0 && s.armijo_c < 1.0) {
            errors.push("solver.armijo_c: must lie in (0, 1)".into());
        }
    }

    let checks = match section(&root, "checks", false, &mut errors) {
        Some(c) => {
            let defaults = CheckOptions::<f64>::default();
            unknown_keys("checks", c, &keys_of(&defaults), &mut errors);
            let known = serde_json::to_value(&defaults).unwrap_or(Value::Null);
            if let (Value::Object(c), Value::Object(known)) = (c, &known) {
                for (name, sub) in c {
                    if let Some(k) = known.get(name) {
                        unknown_keys(&format!("checks.{name}"), sub, &keys_of(k), &mut errors);
                    }
                }
            }
            typed::<CheckOptions<f64>>("checks", c, &mut errors)
        }
        None => Some(CheckOptions::default()),
    };

    let output_dir = match root.get("output_dir") {
        Some(Value::String(s)) => base.join(s),
        Some(_) => {
            errors.push("output_dir: expected a string".into());
            PathBuf::new()
        }
        None => PathBuf::from("."),
    };
    let seed = match root.get("seed") {
        Some(v) => v.as_u64().unwrap_or_else(|| {
            errors.push("seed: expected a non-negative integer".into());
            0
        }),
        None => 0,
    };

    if let (Some(p), Some(g), Some(t)) = (&problem, &grid, &terminal) {
        if let TerminalSource::Points { points } = t {
            if points.is_empty() || points.len() % p.dimension != 0 {
                errors.push(format!(
                    "terminal.points: {} values is not a multiple of dimension {}",
                    points.len(),
                    p.dimension
                ));
            } else if let Some(n) = g.players {
                if n * p.dimension != points.len() {
                    errors.push(format!("terminal.points: {} values for {n} players", points.len()));
                }
            }
        } else if g.players.is_none() && !matches!(t, TerminalSource::Csv { .. }) {
            errors.push("grid.players: missing required key for generated terminal ensembles".into());
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(RunConfig {
        problem: problem.expect("checked"),
        grid: grid.expect("checked"),
        terminal: terminal.expect("checked"),
        solver: solver.expect("checked"),
        checks: checks.expect("checked"),
        output_dir,
        seed,
    })
}

impl RunConfig {
    /// Resolves `X*` as a flat `N x d` vector.
    pub fn terminal_points(&self) -> crate::error::Result<Vec<f64>> {
        let d = self.problem.dimension;
        match &self.terminal {
            TerminalSource::Points { points } => Ok(points.clone()),
            TerminalSource::Csv { path } => {
                let grid = TrajectoryGrid::<f64>::read_csv(path)?;
                if grid.dim != d {
                    return Err(Error::DimensionMismatch {
                        argument: "terminal csv",
                        expected: d,
                        found: grid.dim,
                    });
                }
                Ok(grid.terminal().to_vec())
            }
            TerminalSource::Uniform { low, high } => {
                let n = self.players()?;
                Ok((0..n)
                    .flat_map(|i| {
                        let x = low + (i as f64 + 0.5) * (high - low) / n as f64;
                        std::iter::repeat_n(x, d)
                    })
                    .collect())
            }
            TerminalSource::Gaussian { seed, mean, std } => {
                let n = self.players()?;
                let normal = Normal::new(*mean, *std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..n * d).map(|_| normal.sample(&mut rng)).collect())
            }
        }
    }

    fn players(&self) -> crate::error::Result<usize> {
        let n = self
            .grid
            .players
            .ok_or_else(|| Error::InvalidArgument("grid.players is required".into()))?;
        PlayerGrid::new(n).map(|g| g.count)
    }

    pub fn equilibrium_options(&self) -> EquilibriumOptions<f64> {
        EquilibriumOptions {
            steps: self.grid.steps,
            solver: self.solver.clone(),
            checks: self.checks.clone(),
            seed: self.seed,
        }
    }
}

fn init_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().is_err() {
            warn!("worker pool already initialised; {THREADS_ENV} ignored");
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    init_threads();
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config is required");
        return EXIT_USAGE;
    };
    let mut config = match parse_config(path) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("invalid config {}:", path.display());
            for e in errors {
                eprintln!("  {e}");
            }
            return EXIT_USAGE;
        }
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.output {
        config.output_dir = o.clone();
    }
    if cli.force {
        config.solver.force = true;
    }
    if !config.problem.assumption_compliant() {
        warn!("quadratic potentials fall outside the bounded-derivative assumptions");
    }
    match &cli.command {
        Command::Check => cmd_check(&config, cli.quiet),
        Command::Solve => cmd_solve(&config, cli.quiet),
        Command::Sweep { param, values } => cmd_sweep(&config, *param, values, cli.quiet),
    }
}

fn print_condition(c: &SmallTimeCheck<f64>) {
    println!("small-time condition: {}", if c.holds { "holds" } else { "fails" });
    println!("  lhs    {:.6e}", c.lhs);
    println!("  rhs    {:.6e}", c.rhs);
    println!("  margin {:.6e}", c.margin);
    println!("  uniqueness constant {:.6e}", c.uniqueness_constant);
}

pub fn cmd_check(config: &RunConfig, quiet: bool) -> i32 {
    let c = check_small_time_condition(&config.problem);
    if !quiet {
        print_condition(&c);
    }
    if c.holds {
        EXIT_PASS
    } else {
        EXIT_REFUSED
    }
}

fn write_control_csv(control: &CollectiveControl<f64>, path: &Path) -> crate::error::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = control.alpha.dim;
    let mut header = vec!["t".to_string(), "omega".to_string()];
    header.extend((1..=d).map(|c| format!("v_{c}")));
    w.write_record(&header)?;
    for j in 0..control.time.steps {
        for i in 0..control.players.count {
            let mut row = vec![fmt17(control.time.node(j)), fmt17(control.players.atom::<f64>(i))];
            row.extend(control.alpha.at(j, i).iter().map(|&v| fmt17(v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `report.json` body: config echo, bundle, and the timing object.
pub fn report_value(config: &RunConfig, bundle: &VerificationBundle<f64>) -> Value {
    let mut v = serde_json::to_value(bundle).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert("config".into(), serde_json::to_value(config).unwrap_or(Value::Null));
        m.insert("timing".into(), serde_json::to_value(&bundle.timing).unwrap_or(Value::Null));
    }
    v
}

fn io_error(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_USAGE
}

pub fn cmd_solve(config: &RunConfig, quiet: bool) -> i32 {
    let condition = check_small_time_condition(&config.problem);
    if !condition.holds && !config.solver.force {
        if !quiet {
            print_condition(&condition);
        }
        eprintln!("refusing to solve: small-time condition fails (use --force to override)");
        return EXIT_REFUSED;
    }
    let x_star = match config.terminal_points() {
        Ok(x) => x,
        Err(e) => return io_error(e),
    };
    let (res, control, bundle) =
        match solve_equilibrium(&config.problem, &x_star, &config.equilibrium_options(), None) {
            Ok(r) => r,
            Err(Error::ConditionViolated { .. }) => return EXIT_REFUSED,
            Err(e) => return io_error(e),
        };
    if let Err(e) = fs::create_dir_all(&config.output_dir) {
        return io_error(e);
    }
    let dir = &config.output_dir;
    if let Err(e) = res.trajectory.write_csv(dir.join("trajectory.csv")) {
        return io_error(e);
    }
    if let Err(e) = write_control_csv(&control, &dir.join("control.csv")) {
        return io_error(e);
    }
    let report = report_value(config, &bundle);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = fs::write(dir.join("report.json"), text + "\n") {
        return io_error(e);
    }
    info!("wrote {}", dir.display());
    if !quiet {
        println!(
            "action {:.10e}  iterations {}  converged {}",
            res.action.total, res.iterations, res.converged
        );
        for (stage, err) in &bundle.errors {
            println!("  {stage}: error: {err}");
        }
        println!("pass {}", bundle.pass);
    }
    if !res.converged {
        EXIT_NONCONVERGENCE
    } else if !bundle.pass {
        EXIT_VERIFICATION
    } else {
        EXIT_PASS
    }
}

const SWEEP_HEADER: &[&str] = &[
    "value",
    "margin",
    "holds",
    "status",
    "min_nash_gap",
    "el_residual",
    "el_interior",
    "el_boundary",
    "hamiltonian",
    "hje_collective",
    "hje_individual",
    "picard_distance",
    "action",
];

fn apply_sweep(config: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig, String> {
    let mut c = config.clone();
    let integer = || {
        if value.fract() == 0.0 && value >= 1.0 {
            Ok(value as usize)
        } else {
            Err(format!("{value} is not a positive integer"))
        }
    };
    match param {
        SweepParam::Horizon => c.problem = c.problem.with_horizon(value),
        SweepParam::Beta => match &mut c.problem.phi {
            PotentialSpec::Cosine { beta, .. } => *beta = value,
            _ => return Err("beta sweeps need a cosine phi".into()),
        },
        SweepParam::Players => {
            if matches!(c.terminal, TerminalSource::Points { .. } | TerminalSource::Csv { .. }) {
                return Err("N sweeps need a generated terminal ensemble".into());
            }
            c.grid.players = Some(integer()?);
        }
        SweepParam::Steps => {
            let m = integer()?;
            if m < 2 {
                return Err("M must be at least 2".into());
            }
            c.grid.steps = m;
        }
    }
    Ok(c)
}

fn num(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_else(|| "nan".into())
}

pub fn cmd_sweep(config: &RunConfig, param: SweepParam, values: &[f64], quiet: bool) -> i32 {
    if values.is_empty() {
        eprintln!("error: --values needs at least one value");
        return EXIT_USAGE;
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        eprintln!("error: sweep value {v} must be finite and positive");
        return EXIT_USAGE;
    }
    let configs: Vec<RunConfig> = match values.iter().map(|&v| apply_sweep(config, param, v)).collect() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = fs::create_dir_all(&config.output_dir) {
        return io_error(e);
    }
    let path = config.output_dir.join("sweep.csv");
    let mut w = match csv::Writer::from_path(&path) {
        Ok(w) => w,
        Err(e) => return io_error(e),
    };
    if let Err(e) = w.write_record(SWEEP_HEADER) {
        return io_error(e);
    }
    for (&value, c) in values.iter().zip(&configs) {
        let condition = check_small_time_condition(&c.problem);
        let mut row = vec![fmt17(value), fmt17(condition.margin), condition.holds.to_string()];
        let outcome = if !condition.holds && !c.solver.force {
            Err("refused".to_string())
        } else {
            c.terminal_points()
                .and_then(|x| solve_equilibrium(&c.problem, &x, &c.equilibrium_options(), None))
                .map_err(|e| format!("error: {e}"))
        };
        match outcome {
            Ok((res, _, b)) => {
                let status = if !res.converged {
                    "unconverged"
                } else if b.pass {
                    "pass"
                } else {
                    "fail"
                };
                let r = b.residuals.as_ref();
                let interior = r.map(|r| r.el_collective.sup_norm);
                let boundary = r.map(|r| r.el_boundary.sup_norm);
                row.push(status.into());
                row.push(num(b.nash.as_ref().map(|n| n.min_gap)));
                row.push(num(interior.zip(boundary).map(|(a, b)| a.max(b))));
                row.push(num(interior));
                row.push(num(boundary));
                row.push(num(r.map(|r| r.hamiltonian.sup_norm)));
                row.push(num(b.hje.as_ref().map(|h| h.hje_collective.residual)));
                row.push(num(b.hje.as_ref().map(|h| h.hje_individual.residual)));
                row.push(num(b.picard.as_ref().map(|p| p.distance_to_minimizer)));
                row.push(fmt17(res.action.total));
            }
            Err(status) => {
                row.push(status.replace(',', ";"));
                row.extend(std::iter::repeat_n("nan".to_string(), SWEEP_HEADER.len() - 4));
            }
        }
        if !quiet {
            println!("{}", row.join(" "));
        }
        if let Err(e) = w.write_record(&row) {
            return io_error(e);
        }
    }
    if let Err(e) = w.flush() {
        return io_error(e);
    }
    EXIT_PASS
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUADRATIC: &str = r#"
[problem]
dimension = 1
horizon = 0.5
phi = { kind = "quadratic", a = 1.0 }
psi = { kind = "quadratic", a = 1.0 }

[grid]
steps = 64

[terminal]
source = "points"
points = [-1.0, 1.0]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config_str(QUADRATIC, false, Path::new(".")).unwrap();
        assert_eq!(c.grid.players, None);
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.checks, CheckOptions::default());
        assert_eq!(c.terminal_points().unwrap(), vec![-1.0, 1.0]);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn unknown_and_missing_keys_are_all_listed() {
        let text = r#"
[problem]
dimension = 1
phii = { kind = "zero" }

[grid]
stepz = 3

[solver]
tol = 1e-9
tolerance = 1

[checks.nash]
samples = 3
"#;
        let errors = parse_config_str(text, false, Path::new(".")).unwrap_err();
        for needle in [
            "problem.phii: unknown key",
            "problem.horizon: missing",
            "grid.stepz: unknown key",
            "grid.steps: missing",
            "terminal: missing",
            "solver.tolerance: unknown key",
            "checks.nash.samples: unknown key",
        ] {
            assert!(errors.iter().any(|e| e.starts_with(needle)), "{needle} not in {errors:?}");
        }
    }

    #[test]
    fn violating_config_parses() {
        let text = QUADRATIC.replace("horizon = 0.5", "horizon = 1.0");
        let c = parse_config_str(&text, false, Path::new(".")).unwrap();
        assert!(!check_small_time_condition(&c.problem).holds);
        assert_eq!(cmd_check(&c, true), EXIT_REFUSED);
        assert_eq!(cmd_solve(&c, true), EXIT_REFUSED);
    }

    #[test]
    fn json_is_accepted() {
        let text = r#"{"problem": {"dimension": 1, "horizon": 0.1},
                       "grid": {"players": 4, "steps": 8},
                       "terminal": {"source": "uniform"}}"#;
        let c = parse_config_str(text, true, Path::new(".")).unwrap();
        assert_eq!(c.problem.phi, PotentialSpec::Zero);
        assert_eq!(c.terminal_points().unwrap(), vec![-0.75, -0.25, 0.25, 0.75]);
        assert_eq!(cmd_check(&c, true), EXIT_PASS);
    }

    #[test]
    fn gaussian_terminal_is_seeded() {
        let text = r#"{"problem": {"dimension": 2, "horizon": 0.1},
                       "grid": {"players": 3, "steps": 8},
                       "terminal": {"source": "gaussian", "seed": 5}}"#;
        let c = parse_config_str(text, true, Path::new(".")).unwrap();
        let a = c.terminal_points().unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, c.terminal_points().unwrap());
    }

    #[test]
    fn sweep_rejects_bad_values() {
        let c = parse_config_str(QUADRATIC, false, Path::new(".")).unwrap();
        assert_eq!(cmd_sweep(&c, SweepParam::Horizon, &[], true), EXIT_USAGE);
        assert_eq!(cmd_sweep(&c, SweepParam::Horizon, &[-1.0], true), EXIT_USAGE);
        assert_eq!(cmd_sweep(&c, SweepParam::Steps, &[2.5], true), EXIT_USAGE);
        assert_eq!(cmd_sweep(&c, SweepParam::Beta, &[1.0], true), EXIT_USAGE);
        assert_eq!(cmd_sweep(&c, SweepParam::Players, &[3.0], true), EXIT_USAGE);
    }
}
