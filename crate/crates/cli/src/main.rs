//! `qsde-cert`: error certificates for truncated and eliminated quantum stochastic models.

mod request;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use qsde_cert::approx::{optimize, ApproxState, OptimizeOutcome, Schedule};
use qsde_cert::scenarios::{kerr_schedule, published_kerr_state, AeSetup, KerrSetup, AE_SCALES, KERR_LEVELS};
use qsde_cert::truncation::{CertificateReport, CSV_HEADER};
use qsde_cert::verification::{run_suite, Mutation, SuiteOptions};

use request::BoundRequest;

#[derive(Parser)]
#[command(name = "qsde-cert", version, about = "Error certificates for truncated and eliminated quantum stochastic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Truncation bounds for the driven Kerr cavity.
    KerrTable(KerrArgs),
    /// Elimination bounds for the atom-cavity model.
    AeTable(AeArgs),
    /// Certificate for a JSON bound request.
    Bound(BoundArgs),
    /// Optimize an approximant and write it as JSON.
    Optimize(OptimizeArgs),
    /// Run the numerical verification suite.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Output {
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct KerrModelArgs {
    #[arg(long, default_value_t = 5.0)]
    t_final: f64,
    #[arg(long, default_value_t = 10)]
    intervals: usize,
    /// Real part of the drive amplitude.
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha_im: f64,
    #[arg(long, default_value_t = 25.0)]
    lambda: f64,
    #[arg(long, default_value_t = 50.0, allow_hyphen_values = true)]
    delta: f64,
    /// Kerr coefficient, −delta/60 when omitted.
    #[arg(long, allow_hyphen_values = true)]
    chi: Option<f64>,
}

impl KerrModelArgs {
    fn setup(&self, r: usize, s: usize) -> Result<KerrSetup, Failure> {
        check_time(self.t_final, self.intervals)?;
        Ok(KerrSetup {
            lambda: self.lambda,
            delta: self.delta,
            chi: self.chi.unwrap_or(-self.delta / 60.0),
            alpha: C64::new(self.alpha, self.alpha_im),
            t_final: self.t_final,
            intervals: self.intervals,
            r,
            s,
        })
    }
}

#[derive(Args)]
struct KerrArgs {
    /// Single truncation level.
    #[arg(long, conflicts_with = "k_list")]
    k: Option<usize>,
    /// Comma-separated truncation levels (default 19,29,...,99).
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 2)]
    s: usize,
    #[command(flatten)]
    model: KerrModelArgs,
    /// Certify the published single-term minimizer (the default).
    #[arg(long, conflicts_with = "optimize")]
    use_paper_psi: bool,
    /// Optimize a single-term approximant at every level instead.
    #[arg(long)]
    optimize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_evals: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct AeModelArgs {
    #[arg(long, default_value_t = 25.0)]
    gamma: f64,
    /// Atom-cavity coupling.
    #[arg(long = "g", default_value_t = 5.0)]
    coupling: f64,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    alpha_im: f64,
    #[arg(long, default_value_t = 1.0)]
    t_final: f64,
    #[arg(long, default_value_t = 1000)]
    intervals: usize,
    /// Number of approximant terms.
    #[arg(long, default_value_t = 5)]
    terms: usize,
    /// Intervals per sequential optimization block.
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    /// Inside each block, search this many intervals at a time.
    #[arg(long)]
    group_len: Option<usize>,
    #[arg(long, default_value_t = 1)]
    sweeps: usize,
    /// Highest cavity level kept by the elimination builder.
    #[arg(long, default_value_t = 4)]
    j_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_evals: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

impl AeModelArgs {
    fn setup(&self) -> Result<AeSetup, Failure> {
        check_time(self.t_final, self.intervals)?;
        if self.terms == 0 {
            return Err(usage("--terms must be at least 1"));
        }
        if self.blocks == 0 || self.group_len == Some(0) || self.sweeps == 0 {
            return Err(usage("--blocks, --group-len and --sweeps must be at least 1"));
        }
        Ok(AeSetup {
            gamma: self.gamma,
            g: self.coupling,
            alpha: C64::new(self.alpha, self.alpha_im),
            t_final: self.t_final,
            intervals: self.intervals,
            terms: self.terms,
            block_len: self.blocks,
            j_max: self.j_max,
        })
    }

    fn schedule(&self, setup: &AeSetup) -> Schedule {
        let mut sched = setup.schedule(self.seed);
        sched.group_len = self.group_len;
        sched.sweeps = self.sweeps;
        if let Some(n) = self.max_evals {
            sched.max_evals = n;
        }
        if let Some(n) = self.restarts {
            sched.restarts = n;
        }
        sched
    }
}

#[derive(Args)]
struct AeArgs {
    /// Comma-separated scale parameters (default 1e4,...,1e8).
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<f64>>,
    #[arg(long, conflicts_with = "k_list")]
    k: Option<f64>,
    #[command(flatten)]
    model: AeModelArgs,
    /// Certify this approximant instead of optimizing one.
    #[arg(long)]
    approx: Option<PathBuf>,
    /// Save the optimized approximant here.
    #[arg(long)]
    save_approx: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BoundArgs {
    /// JSON bound request.
    #[arg(long)]
    request: PathBuf,
    /// Write the parsed request back out in canonical form.
    #[arg(long)]
    save_request: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Scenario {
    Kerr,
    Ae,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    /// Truncation level for the Kerr scenario.
    #[arg(long, default_value_t = 19)]
    k: usize,
    /// Start from this approximant instead of the default guess.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_evals: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Drive intervals; the scenario default when omitted.
    #[arg(long)]
    intervals: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    alpha: f64,
    /// Intervals per sequential block (elimination scenario).
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, default_value_t = 5)]
    terms: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MutationArg {
    FlipDriveCoupling,
}

#[derive(Args)]
struct VerifyArgs {
    /// Smaller grids and fewer random samples.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the suite against a deliberately broken generator.
    #[arg(long, value_enum)]
    mutate: Option<MutationArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Failed(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Failed(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn check_time(t_final: f64, intervals: usize) -> Result<(), Failure> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(usage(format!("--t-final must be positive, got {t_final}")));
    }
    if intervals == 0 {
        return Err(usage("--intervals must be at least 1"));
    }
    Ok(())
}

fn check_rs(r: usize, s: usize) -> Result<(), Failure> {
    if r == 0 || s == 0 {
        return Err(usage("--r and --s must be at least 1"));
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn read_approx(path: &Path) -> anyhow::Result<ApproxState> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ApproxState::from_json(&text).with_context(|| format!("parsing approximant {}", path.display()))
}

fn write_approx(path: &Path, state: &ApproxState) -> anyhow::Result<()> {
    let mut text = state.to_json()?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Row {
    #[serde(flatten)]
    certificate: CertificateReport,
    cost: f64,
}

#[derive(Serialize)]
struct Table {
    rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost: Option<f64>,
}

fn render(table: &Table, format: Format) -> anyhow::Result<String> {
    match format {
        Format::Json => to_json(table),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)?;
            for row in &table.rows {
                w.write_record(row.certificate.csv_fields())?;
            }
            Ok(String::from_utf8(w.into_inner()?)?)
        }
    }
}

fn kerr_schedule_for(setup: &KerrSetup, seed: u64, max_evals: Option<usize>, restarts: Option<usize>) -> Schedule {
    let mut schedule = kerr_schedule(seed);
    // The two-piece amplitude partition only fits the default horizon.
    if setup.t_final != KerrSetup::default().t_final {
        schedule.partition = None;
    }
    if let Some(n) = max_evals {
        schedule.max_evals = n;
    }
    if let Some(n) = restarts {
        schedule.restarts = n;
    }
    schedule
}

fn kerr_table(args: &KerrArgs) -> Result<(), Failure> {
    check_rs(args.r, args.s)?;
    let levels = match (&args.k, &args.k_list) {
        (Some(k), _) => vec![*k],
        (None, Some(list)) => list.clone(),
        (None, None) => KERR_LEVELS.to_vec(),
    };
    if levels.is_empty() || levels.contains(&0) {
        return Err(usage("truncation levels must be at least 1"));
    }
    let setup = args.model.setup(args.r, args.s)?;
    let schedule = kerr_schedule_for(&setup, args.seed, args.max_evals, args.restarts);
    let rows = levels
        .par_iter()
        .map(|&k| -> anyhow::Result<Row> {
            let state = if args.optimize {
                setup.optimize(k, &schedule)?.state
            } else {
                published_kerr_state(k)?
            };
            let certificate = setup.certificate(k, &state).with_context(|| format!("certificate at k = {k}"))?;
            let cost = setup.cost(k, &state)?;
            Ok(Row { certificate, cost })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = Table { rows, cost: None };
    emit(args.output.out.as_deref(), &render(&table, args.output.format)?)?;
    Ok(())
}

fn ae_scales(k: Option<f64>, list: &Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
    let ks = match (k, list) {
        (Some(k), _) => vec![k],
        (None, Some(l)) => l.clone(),
        (None, None) => AE_SCALES.to_vec(),
    };
    if ks.is_empty() || ks.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
        return Err(usage("scale parameters must be positive and finite"));
    }
    Ok(ks)
}

fn ae_optimize(setup: &AeSetup, schedule: &Schedule, init: Option<ApproxState>) -> anyhow::Result<OptimizeOutcome> {
    let limit = setup.limit()?;
    let guess = match init {
        Some(s) => s.with_factor_dims(limit.factor_dims())?,
        None => setup.initial_guess()?,
    };
    Ok(optimize(&limit, &setup.reference()?, &setup.drive()?, &guess, schedule)?)
}

fn ae_table(args: &AeArgs) -> Result<(), Failure> {
    let ks = ae_scales(args.k, &args.k_list)?;
    let setup = args.model.setup()?;
    let state = match &args.approx {
        Some(p) => read_approx(p)?.with_factor_dims(&[2])?,
        None => {
            let outcome = ae_optimize(&setup, &args.model.schedule(&setup), None)?;
            if outcome.search_failure {
                eprintln!("warning: optimizer met non-finite costs");
            }
            outcome.state
        }
    };
    if let Some(p) = &args.save_approx {
        write_approx(p, &state)?;
    }
    let cost = setup.cost(&state)?;
    eprintln!("optimized cost J = {cost:.6e}");
    let rows = ks
        .par_iter()
        .map(|&k| -> anyhow::Result<Row> {
            let certificate = setup.certificate(k, &state).with_context(|| format!("certificate at k = {k}"))?;
            Ok(Row { certificate, cost })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let table = Table { rows, cost: Some(cost) };
    emit(args.output.out.as_deref(), &render(&table, args.output.format)?)?;
    Ok(())
}

fn bound(args: &BoundArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.request).with_context(|| format!("reading {}", args.request.display()))?;
    let req = BoundRequest::from_json(&text)?;
    check_rs(req.r, req.s)?;
    if let Some(p) = &args.save_request {
        fs::write(p, req.to_json()?).with_context(|| format!("writing {}", p.display()))?;
    }
    let report = req.evaluate()?;
    emit(args.out.as_deref(), &to_json(&report)?)?;
    Ok(())
}

fn optimize_cmd(args: &OptimizeArgs) -> Result<(), Failure> {
    let init = args.init.as_deref().map(read_approx).transpose()?;
    let outcome = match args.scenario {
        Scenario::Kerr => {
            if args.k == 0 {
                return Err(usage("--k must be at least 1"));
            }
            let d = KerrSetup::default();
            let setup = KerrSetup {
                alpha: C64::new(args.alpha, 0.0),
                t_final: args.t_final.unwrap_or(d.t_final),
                intervals: args.intervals.unwrap_or(d.intervals),
                ..d
            };
            check_time(setup.t_final, setup.intervals)?;
            let schedule = kerr_schedule_for(&setup, args.seed, args.max_evals, args.restarts);
            let model = setup.model(args.k)?;
            let guess = match init {
                Some(s) => s.with_factor_dims(model.factor_dims())?,
                None => setup.initial_guess(args.k)?,
            };
            optimize(&model, &setup.vacuum(args.k)?, &setup.drive()?, &guess, &schedule)?
        }
        Scenario::Ae => {
            if args.blocks == 0 || args.terms == 0 {
                return Err(usage("--blocks and --terms must be at least 1"));
            }
            let d = AeSetup::default();
            let setup = AeSetup {
                alpha: C64::new(args.alpha, 0.0),
                t_final: args.t_final.unwrap_or(d.t_final),
                intervals: args.intervals.unwrap_or(d.intervals),
                terms: args.terms,
                block_len: args.blocks,
                ..d
            };
            check_time(setup.t_final, setup.intervals)?;
            let mut schedule = setup.schedule(args.seed);
            if let Some(n) = args.max_evals {
                schedule.max_evals = n;
            }
            if let Some(n) = args.restarts {
                schedule.restarts = n;
            }
            ae_optimize(&setup, &schedule, init)?
        }
    };
    eprintln!(
        "cost {:.6e} -> {:.6e} after {} evaluations in {} stages",
        outcome.initial_cost, outcome.cost, outcome.evaluations, outcome.stages
    );
    let mut text = outcome.state.to_json()?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let opts = SuiteOptions {
        quick: args.quick,
        seed: args.seed,
        mutation: args.mutate.map(|MutationArg::FlipDriveCoupling| Mutation::FlipDriveCoupling),
    };
    let report = run_suite(&opts)?;
    emit(args.out.as_deref(), &to_json(&report)?)?;
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
        Err(Failure::Failed(anyhow!("verification failed: {}", names.join(", "))))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("QSDE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| usage(format!("QSDE_THREADS must be a positive integer, got {raw:?}")))?;
    if n == 0 {
        return Err(usage("QSDE_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Failed(e.into()))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    match &cli.command {
        Command::KerrTable(a) => kerr_table(a),
        Command::AeTable(a) => ae_table(a),
        Command::Bound(a) => bound(a),
        Command::Optimize(a) => optimize_cmd(a),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
