//! Argument parsing and dispatch for the `qtangent` binary.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 a verification
//! verdict failed (output is still written).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use qtangent_core::freeprob::{biane_H, stieltjes_invert, verify_identities, IdentityKind, INVERSION_LADDER};
use qtangent_core::kernels::biane_shifted_pdf;
use qtangent_core::simulate::{jump_bound, sup_jump_maxima, InitialCondition, JumpStats, TransitionSampler};
use qtangent_core::tangent::{convergence_study, StudyOptions, Window, DEFAULT_LADDER};
use qtangent_core::{KernelQuery, ProcessKind, QParams, SeedSpec, TangentCase, TangentKind, TimeGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

/// Evenly spaced points `lo:hi:count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.hi } else { self.lo + h * i as f64 })
            .collect()
    }
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts[..] else {
        return Err(format!("grid must look like lo:hi:count, got '{s}'"));
    };
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad grid start '{lo}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad grid end '{hi}'"))?;
    let count: usize = count.trim().parse().map_err(|_| format!("bad grid count '{count}'"))?;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(format!("grid bounds must be finite, got '{s}'"));
    }
    if count == 0 || (count > 1 && hi <= lo) {
        return Err(format!("grid needs count >= 1 and lo < hi, got '{s}'"));
    }
    Ok(Grid { lo, hi, count })
}

/// Comma-separated list of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberList(pub Vec<f64>);

/// Comma-separated, positive, strictly decreasing.
pub fn parse_ladder(s: &str) -> Result<NumberList, String> {
    let eps = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad ladder entry '{p}'")))
        .collect::<Result<Vec<_>, _>>()?;
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(format!("ladder entries must be positive, got '{s}'"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(format!("ladder must be strictly decreasing, got '{s}'"));
    }
    Ok(NumberList(eps))
}

fn parse_list(s: &str) -> Result<NumberList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number '{p}'")))
        .collect::<Result<Vec<_>, _>>()
        .map(NumberList)
}

fn parse_process(s: &str) -> Result<ProcessKind, String> {
    s.parse().map_err(|e: qtangent_core::Error| e.to_string())
}

fn parse_case(s: &str) -> Result<TangentKind, String> {
    s.parse().map_err(|e: qtangent_core::Error| e.to_string())
}

fn parse_identity(s: &str) -> Result<IdentityKind, String> {
    s.parse().map_err(|e: qtangent_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Freeprob,
}

#[derive(Debug, Parser)]
#[command(name = "qtangent", version, about = "Densities, simulations and tangent-limit studies for q-Gaussian processes")]
pub struct CliConfig {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a density or transition density on a grid.
    Density(DensityArgs),
    /// Simulate q-OU or q-BM trajectories.
    Simulate(SimulateArgs),
    /// Run an eps-ladder convergence study towards a tangent process.
    Tangent(TangentArgs),
    /// Empirical large-jump frequencies of q-BM against the fourth-moment bound.
    Jumps(JumpsArgs),
    /// Shifted 1/2-stable Biane transition density and its Stieltjes inversion.
    Biane(BianeArgs),
    /// Randomized checks of the free-probability identities.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    /// qnormal, qou, qbm, cauchy, biane_half, biane_shifted,
    /// half_stable_marginal or cauchy_marginal.
    #[arg(long, value_parser = parse_process)]
    pub process: ProcessKind,
    /// Deformation parameter in (-1, 1) (q-families only).
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    /// Start time (transition kernels).
    #[arg(long, default_value_t = 0.0)]
    pub t1: f64,
    /// End time; the time of a marginal law.
    #[arg(long, default_value_t = 1.0)]
    pub t2: f64,
    /// Start state (transition kernels).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub y1: f64,
    /// Evaluation points `lo:hi:count`.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    pub grid: Grid,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// qou or qbm.
    #[arg(long, value_parser = parse_process)]
    pub process: ProcessKind,
    #[arg(long, allow_negative_numbers = true)]
    pub q: f64,
    /// Start time.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long)]
    pub t1: f64,
    /// Number of time steps on `[t0, t1]`.
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    /// Base seed; path i uses its own derived stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `stationary`, `origin`, or a starting state.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<String>,
    /// Directory for the per-path CSV files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// JSON output file (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TangentArgs {
    /// qou_interior, qou_boundary, qbm_interior or qbm_boundary.
    #[arg(long, value_parser = parse_case)]
    pub case: TangentKind,
    #[arg(long, allow_negative_numbers = true)]
    pub q: f64,
    /// Base time (q-BM cases).
    #[arg(long)]
    pub s: Option<f64>,
    /// Base point (interior cases).
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    /// Comma-separated eps values, strictly decreasing [default: 0.2,0.1,0.05,0.02,0.01].
    #[arg(long, value_parser = parse_ladder)]
    pub ladder: Option<NumberList>,
    /// Largest accepted L1 distance at the last rung.
    #[arg(long, default_value_t = 0.02)]
    pub threshold: f64,
    /// Relative increase allowed between successive rungs.
    #[arg(long, default_value_t = 0.1)]
    pub slack: f64,
    /// Grid points used for the L1 and sup distances.
    #[arg(long, default_value_t = 4001)]
    pub resolution: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JumpsArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub q: f64,
    /// Start of the time window.
    #[arg(long = "start", default_value_t = 0.0)]
    pub start: f64,
    /// End of the time window.
    #[arg(long = "end", default_value_t = 1.0)]
    pub end: f64,
    /// Comma-separated jump thresholds.
    #[arg(long, value_parser = parse_list)]
    pub a: NumberList,
    #[arg(long, default_value_t = 500)]
    pub paths: usize,
    /// Time steps per path.
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BianeArgs {
    /// Start time, 0 < s < t.
    #[arg(long)]
    pub s: f64,
    /// End time.
    #[arg(long)]
    pub t: f64,
    /// Start state, x > 0.
    #[arg(long)]
    pub x: f64,
    /// Evaluation points `lo:hi:count`.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Grid,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::Freeprob)]
    pub suite: Suite,
    /// Run a single identity instead of the whole suite.
    #[arg(long, value_parser = parse_identity)]
    pub kind: Option<IdentityKind>,
    /// Random points per identity.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
}

impl From<qtangent_core::Error> for Failure {
    fn from(e: qtangent_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn envelope(command: &str, result: impl Serialize) -> Result<String, Failure> {
    let v = json!({
        "tool": "qtangent",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Failure::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn csv<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [f64; N]>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| float(v)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn run_density(a: &DensityArgs) -> Outcome {
    if a.process.uses_q() && a.q.is_none() {
        return Err(Failure::Usage(format!("--q is required for process {}", a.process)));
    }
    let xs = a.grid.points();
    let pdf = xs
        .iter()
        .map(|&y2| {
            KernelQuery {
                process: a.process,
                q: a.q,
                t1: a.t1,
                t2: a.t2,
                y1: a.y1,
                y2,
            }
            .evaluate()
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let content = match a.format {
        Format::Csv => csv(["x", "pdf"], xs.iter().zip(&pdf).map(|(&x, &p)| [x, p])),
        Format::Json => envelope(
            "density",
            json!({
                "process": a.process,
                "q": a.q,
                "t1": a.t1,
                "t2": a.t2,
                "y1": a.y1,
                "x": xs,
                "pdf": pdf,
            }),
        )?,
    };
    emit(a.out.as_deref(), &content)?;
    Ok(true)
}

fn parse_init(raw: Option<&str>, process: ProcessKind, t0: f64) -> Result<InitialCondition, Failure> {
    match raw {
        None if process == ProcessKind::Qbm && t0 == 0.0 => Ok(InitialCondition::Origin),
        None => Ok(InitialCondition::Stationary),
        Some("stationary") => Ok(InitialCondition::Stationary),
        Some("origin") => Ok(InitialCondition::Origin),
        Some(v) => v
            .parse::<f64>()
            .map(InitialCondition::Fixed)
            .map_err(|_| Failure::Usage(format!("--init must be stationary, origin or a number, got '{v}'"))),
    }
}

fn run_simulate(a: &SimulateArgs) -> Outcome {
    if !matches!(a.process, ProcessKind::Qou | ProcessKind::Qbm) {
        return Err(Failure::Usage(format!("simulate supports qou and qbm, not {}", a.process)));
    }
    if a.paths == 0 {
        return Err(Failure::Usage("--paths must be at least 1".into()));
    }
    let grid = TimeGrid::new(a.t0, a.t1, a.steps)?;
    let init = parse_init(a.init.as_deref(), a.process, a.t0)?;
    let sampler = TransitionSampler::new(QParams::new(a.q)?)?;
    let paths = sampler.simulate_paths(a.process, grid, init, a.seed, a.paths)?;
    match a.format {
        Format::Csv => {
            fs::create_dir_all(&a.out_dir)
                .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out_dir.display())))?;
            let mut listing = String::new();
            for (i, path) in paths.iter().enumerate() {
                let file = a.out_dir.join(format!("{}_path{i}.csv", a.process));
                let body = csv(["t", "value"], path.times.iter().zip(&path.values).map(|(&t, &v)| [t, v]));
                emit(Some(&file), &body)?;
                let _ = writeln!(listing, "{}", file.display());
            }
            emit(None, &listing)?;
        }
        Format::Json => {
            let content = envelope(
                "simulate",
                json!({
                    "process": a.process,
                    "q": a.q,
                    "seed": a.seed,
                    "grid": grid,
                    "paths": paths.iter().map(|p| json!({
                        "stream": p.seed.stream_index,
                        "times": p.times,
                        "values": p.values,
                    })).collect::<Vec<Value>>(),
                }),
            )?;
            emit(a.out.as_deref(), &content)?;
        }
    }
    Ok(true)
}

fn run_tangent(a: &TangentArgs) -> Outcome {
    let case = TangentCase::from_parts(a.case, a.q, a.s, a.x)?;
    let ladder = a.ladder.clone().map(|l| l.0).unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    if a.resolution < 3 {
        return Err(Failure::Usage("--resolution must be at least 3".into()));
    }
    let opts = StudyOptions {
        threshold: a.threshold,
        slack: a.slack,
        resolution: a.resolution,
    };
    let window = Window::covering(&case)?;
    let report = convergence_study(&case, &ladder, &window, &opts)?;
    let content = match a.format {
        Format::Json => envelope("tangent", &report)?,
        Format::Csv => {
            let mut s = String::from("eps,l1,sup,clipped\n");
            for r in &report.ladder {
                let _ = writeln!(s, "{},{},{},{}", float(r.eps), float(r.l1), float(r.sup), r.clipped);
            }
            s
        }
    };
    emit(a.out.as_deref(), &content)?;
    Ok(report.passed())
}

#[derive(Serialize)]
struct JumpRow {
    a: f64,
    exceed_count: usize,
    fraction: f64,
    binomial_std_error: f64,
    bound: f64,
    within_bound: bool,
}

fn run_jumps(a: &JumpsArgs) -> Outcome {
    let thresholds = a.a.0.clone();
    if thresholds.is_empty() {
        return Err(Failure::Usage("--a needs at least one threshold".into()));
    }
    for &th in &thresholds {
        jump_bound(a.q, a.start, a.end, th)?;
    }
    if a.paths == 0 {
        return Err(Failure::Usage("--paths must be at least 1".into()));
    }
    let maxima = sup_jump_maxima(a.q, a.start, a.end, a.paths, a.steps, SeedSpec::new(a.seed, 0))?;
    let rows = thresholds
        .iter()
        .map(|&th| {
            let stats = JumpStats::from_maxima(&maxima, th)?;
            let bound = jump_bound(a.q, a.start, a.end, th)?;
            Ok(JumpRow {
                a: th,
                exceed_count: stats.exceed_count,
                fraction: stats.fraction(),
                binomial_std_error: stats.binomial_std_error(),
                bound,
                within_bound: stats.fraction() <= bound + 3.0 * stats.binomial_std_error(),
            })
        })
        .collect::<Result<Vec<_>, qtangent_core::Error>>()?;
    let all_within = rows.iter().all(|r| r.within_bound);
    let content = match a.format {
        Format::Json => envelope(
            "jumps",
            json!({
                "q": a.q,
                "start": a.start,
                "end": a.end,
                "paths": a.paths,
                "steps": a.steps,
                "seed": a.seed,
                "max_abs_increment": maxima.iter().copied().fold(0.0, f64::max),
                "thresholds": rows,
                "pass": all_within,
            }),
        )?,
        Format::Csv => {
            let mut s = String::from("a,exceed_count,fraction,binomial_std_error,bound,within_bound\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    float(r.a),
                    r.exceed_count,
                    float(r.fraction),
                    float(r.binomial_std_error),
                    float(r.bound),
                    r.within_bound
                );
            }
            s
        }
    };
    emit(a.out.as_deref(), &content)?;
    Ok(all_within)
}

fn run_biane(a: &BianeArgs) -> Outcome {
    let ys = a.grid.points();
    if let Some(&y) = ys.iter().find(|&&y| y.is_nan() || y <= 0.0) {
        return Err(Failure::Usage(format!("biane grid points must be positive, got {y}")));
    }
    biane_H(a.s, a.t, a.x, qtangent_core::ComplexPoint::new(-1.0, 0.0))?;
    let mut pdf = Vec::with_capacity(ys.len());
    let mut inverted = Vec::with_capacity(ys.len());
    for &y in &ys {
        pdf.push(biane_shifted_pdf(a.s, a.t, a.x, y)?);
        let inv = stieltjes_invert(|z| biane_H(a.s, a.t, a.x, z), y, &INVERSION_LADDER)?;
        inverted.push(inv.estimate);
    }
    let content = match a.format {
        Format::Csv => csv(
            ["y", "pdf", "inversion"],
            ys.iter().zip(pdf.iter().zip(&inverted)).map(|(&y, (&p, &v))| [y, p, v]),
        ),
        Format::Json => envelope(
            "biane",
            json!({
                "s": a.s,
                "t": a.t,
                "x": a.x,
                "eps_ladder": INVERSION_LADDER,
                "y": ys,
                "pdf": pdf,
                "inversion": inverted,
            }),
        )?,
    };
    emit(a.out.as_deref(), &content)?;
    Ok(true)
}

fn run_verify(a: &VerifyArgs) -> Outcome {
    let kinds: Vec<IdentityKind> = match a.kind {
        Some(k) => vec![k],
        None => match a.suite {
            Suite::Freeprob => IdentityKind::ALL.to_vec(),
        },
    };
    let seed = SeedSpec::new(a.seed, 0);
    let reports = kinds
        .iter()
        .map(|&k| verify_identities(k, a.samples, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let pass = reports.iter().all(|r| r.pass);
    let content = envelope(
        "verify",
        json!({
            "suite": "freeprob",
            "samples": a.samples,
            "seed": a.seed,
            "reports": reports,
            "pass": pass,
        }),
    )?;
    emit(a.out.as_deref(), &content)?;
    Ok(pass)
}

fn dispatch(cfg: &CliConfig) -> Outcome {
    match &cfg.command {
        Command::Density(a) => run_density(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Tangent(a) => run_tangent(a),
        Command::Jumps(a) => run_jumps(a),
        Command::Biane(a) => run_biane(a),
        Command::Verify(a) => run_verify(a),
    }
}

fn one_line(msg: &str) -> String {
    msg.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("invalid arguments")
        .to_string()
}

/// Parse `argv` (including the program name), run the command and return
/// the process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match CliConfig::try_parse_from(argv) {
        Ok(cfg) => cfg,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    eprintln!("qtangent: {}", one_line(&e.to_string()).trim_start_matches("error: "));
                    EXIT_USAGE
                }
            };
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        if n == 0 {
            eprintln!("qtangent: --threads must be at least 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("qtangent: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| dispatch(&cfg)) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFY,
        Err(Failure::Usage(msg)) => {
            eprintln!("qtangent: {}", one_line(&msg));
            EXIT_USAGE
        }
    }
}
