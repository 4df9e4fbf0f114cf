use clap::{Args, Parser, Subcommand, ValueEnum};
use nestwalk::cost_model::{fit_exponents, optimize, CostMode, CsvRow, Objective};
use nestwalk::ledger::CostLedger;
use nestwalk::three_distinctness::{generate, is_triple, oracle_solve, solve, GeneratorSpec, Instance, SolveConfig, SolveReport};
use nestwalk::verify::{run_suite, VERSION};
use nestwalk::walk::Mode;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "nestwalk", version, about = "Nested quantum walk search simulator with a 3-Distinctness model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find a 3-collision; exit 0 when found, 1 when none, 2 on error.
    Solve(SolveArgs),
    /// Run the deterministic property battery; exit 0 when every check passes.
    Verify(VerifyArgs),
    /// Optimize walk-set sizes and fit the exponents; CSV output.
    Cost(CostArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Abstract,
    Concrete,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Abstract => Mode::Abstract,
            ModeArg::Concrete => Mode::Concrete,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    /// Instance JSON {"n", "values", "planted"}; overrides the generator.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Generator length.
    #[arg(long, default_value_t = 24)]
    n: usize,
    /// Generate an instance without a 3-collision.
    #[arg(long)]
    no_planted: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    s1: Option<usize>,
    #[arg(long)]
    s2: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Abstract)]
    mode: ModeArg,
    /// Independent runs with seeds seed, seed+1, ...; exit 0 only if every run finds a triple.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb one garbage state (negative control).
    #[arg(long)]
    perturb_psi: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CostModeArg {
    Query,
    Time,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ObjectiveArg {
    Sum,
    Dominant,
}

#[derive(Args, Debug, Serialize)]
struct CostArgs {
    /// Single n; otherwise the range 2^lo ..= 2^hi.
    #[arg(long)]
    n: Option<f64>,
    #[arg(long, default_value_t = 10)]
    lo: u32,
    #[arg(long, default_value_t = 24)]
    hi: u32,
    #[arg(long, value_enum, default_value_t = CostModeArg::Query)]
    mode: CostModeArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Sum)]
    objective: ObjectiveArg,
    /// Accepted for uniformity; the cost model is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    version: &'a str,
    config: &'a SolveArgs,
    seed: u64,
    found: bool,
    triple: Option<(usize, usize, usize)>,
    verified: bool,
    params: Params,
    ledger: &'a CostLedger,
    partitions: usize,
}

#[derive(Serialize)]
struct Params {
    s1: usize,
    s2: usize,
    m: Option<usize>,
    n2: Option<usize>,
}

#[derive(Serialize)]
struct TrialsOutput<'a> {
    version: &'a str,
    config: &'a SolveArgs,
    seed: u64,
    trials: u64,
    found: u64,
    results: Vec<SolveOutput<'a>>,
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| e.to_string())
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let inst: Instance = serde_json::from_str(&text).map_err(|e| format!("malformed instance {}: {e}", path.display()))?;
    inst.validate().map_err(|e| format!("invalid instance {}: {e}", path.display()))?;
    Ok(inst)
}

fn summarize<'a>(args: &'a SolveArgs, seed: u64, values: &[u64], report: &'a SolveReport) -> SolveOutput<'a> {
    let last = report.partitions.iter().rev().find_map(|p| p.params);
    let verified = report.triple.is_some_and(|t| is_triple(values, t)) || (report.triple.is_none() && oracle_solve(values).is_none());
    SolveOutput {
        version: VERSION,
        config: args,
        seed,
        found: report.triple.is_some(),
        triple: report.triple,
        verified,
        params: Params { s1: report.s1, s2: report.s2, m: last.map(|p| p.m), n2: last.map(|p| p.n2) },
        ledger: &report.ledger,
        partitions: report.partitions.len(),
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode, String> {
    let config = SolveConfig { mode: args.mode.into(), s1: args.s1, s2: args.s2, m: args.m, ..SolveConfig::default() };
    let seeds: Vec<u64> = (0..args.trials.max(1)).map(|t| args.seed.wrapping_add(t)).collect();
    let fixed = args.instance.as_deref().map(load_instance).transpose()?;
    let instance_for = |seed: u64| -> Instance {
        fixed.clone().unwrap_or_else(|| generate(GeneratorSpec { n: args.n, planted: !args.no_planted, extra_pairs: 0, value_range: 0 }, seed))
    };
    let runs: Vec<Result<(Instance, SolveReport), String>> = nestwalk::par::map_seeds(0..seeds.len() as u64, |i| {
        let seed = seeds[i as usize];
        let inst = instance_for(seed);
        solve(&inst.values, seed, &config).map(|r| (inst, r)).map_err(|e| e.to_string())
    });
    let runs: Vec<(Instance, SolveReport)> = runs.into_iter().collect::<Result<_, _>>()?;
    let results: Vec<SolveOutput> = runs.iter().zip(&seeds).map(|((inst, r), &s)| summarize(args, s, &inst.values, r)).collect();
    let all_found = results.iter().all(|r| r.found);
    let text = if results.len() == 1 {
        serde_json::to_string_pretty(&results[0])
    } else {
        let found = results.iter().filter(|r| r.found).count() as u64;
        serde_json::to_string_pretty(&TrialsOutput { version: VERSION, config: args, seed: args.seed, trials: seeds.len() as u64, found, results })
    }
    .map_err(|e| e.to_string())?;
    write_output(&args.out, &(text + "\n"))?;
    Ok(if all_found { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    config: &'a VerifyArgs,
    #[serde(flatten)]
    report: nestwalk::verify::VerifyReport,
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode, String> {
    let report = run_suite(args.seed, args.perturb_psi);
    let pass = report.pass;
    for c in &report.checks {
        eprintln!("{:<34} {:<4} max deviation {:.3e} (tolerance {:.0e})", c.name, if c.pass { "ok" } else { "FAIL" }, c.max_deviation, c.tolerance);
    }
    let text = serde_json::to_string_pretty(&VerifyOutput { config: args, report }).map_err(|e| e.to_string())?;
    write_output(&args.out, &(text + "\n"))?;
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct CostCsvRow<'a> {
    version: &'a str,
    seed: u64,
    mode: CostModeArg,
    objective: ObjectiveArg,
    n: f64,
    s1: f64,
    s2: f64,
    cost: f64,
    term_s1: f64,
    term_s2_sqrt_n_over_s1: f64,
    term_n_over_sqrt_s1: f64,
    term_n_over_sqrt_s2: f64,
    term_implementation: f64,
    balance_max_over_min: f64,
}

impl<'a> CostCsvRow<'a> {
    fn new(args: &CostArgs, r: CsvRow) -> Self {
        CostCsvRow {
            version: VERSION,
            seed: args.seed,
            mode: args.mode,
            objective: args.objective,
            n: r.n,
            s1: r.s1,
            s2: r.s2,
            cost: r.cost,
            term_s1: r.term_s1,
            term_s2_sqrt_n_over_s1: r.term_s2_sqrt_n_over_s1,
            term_n_over_sqrt_s1: r.term_n_over_sqrt_s1,
            term_n_over_sqrt_s2: r.term_n_over_sqrt_s2,
            term_implementation: r.term_implementation,
            balance_max_over_min: r.balance_max_over_min,
        }
    }
}

fn cmd_cost(args: &CostArgs) -> Result<ExitCode, String> {
    let mode = match args.mode {
        CostModeArg::Query => CostMode::Query,
        CostModeArg::Time => CostMode::Time,
    };
    let objective = match args.objective {
        ObjectiveArg::Sum => Objective::Sum,
        ObjectiveArg::Dominant => Objective::DominantTerm,
    };
    let rows = match args.n {
        Some(n) if n >= 8.0 => vec![optimize(n, mode, objective)],
        Some(n) => return Err(format!("n = {n} is below the supported minimum 8")),
        None => {
            if args.lo >= args.hi {
                return Err("--lo must be below --hi".into());
            }
            let fit = fit_exponents(args.lo, args.hi, mode, objective);
            eprintln!(
                "fitted slopes over n = 2^{}..2^{}: s1* {:.4}, s2* {:.4}, cost* {:.4} (targets 5/7 = {:.4}, 4/7 = {:.4})",
                args.lo,
                args.hi,
                fit.s1_slope,
                fit.s2_slope,
                fit.cost_slope,
                5.0 / 7.0,
                4.0 / 7.0
            );
            fit.rows
        }
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in &rows {
        w.serialize(CostCsvRow::new(args, CsvRow::from(o)))
            .map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    write_output(&args.out, &String::from_utf8(bytes).map_err(|e| e.to_string())?)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Cost(a) => cmd_cost(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
