mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asr_core::bounds::{check_surface, lower_coeffs, write_report_csv};
use asr_core::impact::{backward_solve_permanent, price_permanent, solve_price_permanent};
use asr_core::sim::{read_path_csv, simulate_batch, write_record_csv, ExecutionRecord, Player};
use asr_core::solver::{price, write_surface_csv};
use asr_core::sweep::{run_sweeps, standard_sweeps, write_sweep_csv};
use asr_core::{backward_solve, solve_price, AsrError, Policy, PriceResult, SolveMode, ValueSurface};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "asr", version, about = "Price and execute accelerated share repurchase contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; the built-in reference case when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Base)]
    mode: Mode,
    /// Restrict trades to purchases.
    #[arg(long, global = true)]
    buy_only: bool,
    /// Number of simulated paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Play one external `day,price` path instead of simulated ones.
    #[arg(long, global = true)]
    path_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Indifference price and first trade.
    Price,
    /// Full cost surface and policy as CSV.
    Solve,
    /// Play the optimal strategy along price paths.
    Simulate,
    /// Comparative statics tables.
    Sweep,
    /// Check the surface against the analytic cost bounds.
    Check,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Base,
    Permanent,
}

enum Failure {
    Config(String),
    Solver(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Validation(_) => 4,
        }
    }
}

impl From<AsrError> for Failure {
    fn from(e: AsrError) -> Self {
        match e {
            AsrError::InvalidInput { .. } => Failure::Config(e.to_string()),
            _ => Failure::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(format!("i/o: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("config error", m),
                Failure::Solver(m) => ("solver error", m),
                Failure::Validation(m) => ("validation failed", m),
            };
            eprintln!("asr: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Config)?,
        None => RunConfig::reference(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(k) = cli.paths {
        cfg.paths = k;
    }
    cfg.solve.buy_only |= cli.buy_only;
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load(cli)?;
    fs::create_dir_all(&cfg.out)?;
    match cli.command {
        Command::Price => cmd_price(&cfg, cli.mode),
        Command::Solve => cmd_solve(&cfg, cli.mode),
        Command::Simulate => cmd_simulate(&cfg, cli.mode, cli.path_csv.as_deref()),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Check => cmd_check(&cfg, cli.mode),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn print_price(r: &PriceResult, cfg: &RunConfig) {
    println!("mode            {}", r.mode);
    println!("buy_only        {}", r.buy_only);
    println!("gamma           {}", r.gamma);
    println!("horizon         {}", r.horizon);
    println!("inventory steps {}", r.inventory_steps);
    println!("lattice nodes   {}", r.nodes);
    println!("nominal         {}", cfg.models.contract.nominal);
    println!("pi              {:.2}", r.pi);
    println!("pi_per_share    {:.6}", r.pi_per_share);
    println!("v0              {:.2}", r.v0);
    println!("seconds         {:.2}", r.seconds);
}

fn write_price_csv(dir: &Path, r: &PriceResult) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(create(dir, "price.csv")?);
    w.serialize(r).map_err(|e| Failure::Solver(e.to_string()))?;
    w.flush()?;
    Ok(())
}

fn solve_full(cfg: &RunConfig, mode: Mode) -> Result<(ValueSurface, Policy, PriceResult), Failure> {
    let start = std::time::Instant::now();
    let (s, p, mut r) = match mode {
        Mode::Base => {
            let (s, p) = backward_solve(&cfg.models, &cfg.solve)?;
            let r = price(&s, &cfg.models, &cfg.solve)?;
            (s, p, r)
        }
        Mode::Permanent => {
            let (s, p) = backward_solve_permanent(&cfg.models, &cfg.impact, &cfg.solve)?;
            let r = price_permanent(&s, &cfg.models, &cfg.impact, &cfg.solve)?;
            (s, p, r)
        }
    };
    r.seconds = start.elapsed().as_secs_f64();
    Ok((s, p, r))
}

fn cmd_price(cfg: &RunConfig, mode: Mode) -> Result<(), Failure> {
    let r = match mode {
        Mode::Base => solve_price(&cfg.models, &cfg.solve)?,
        Mode::Permanent => solve_price_permanent(&cfg.models, &cfg.impact, &cfg.solve)?,
    };
    print_price(&r, cfg);
    write_price_csv(&cfg.out, &r)
}

fn cmd_solve(cfg: &RunConfig, mode: Mode) -> Result<(), Failure> {
    let (s, p, r) = solve_full(cfg, mode)?;
    write_surface_csv(create(&cfg.out, "surface.csv")?, &s, &p, cfg.models.market.dt)?;
    print_price(&r, cfg);
    write_price_csv(&cfg.out, &r)
}

fn cmd_simulate(cfg: &RunConfig, mode: Mode, path_csv: Option<&Path>) -> Result<(), Failure> {
    let (s, p, r) = solve_full(cfg, mode)?;
    let impact = (s.mode == SolveMode::Permanent).then_some(&cfg.impact);
    let player = Player::new(&cfg.models, &cfg.solve, &s, &p, impact)?;
    let horizon = cfg.models.contract.horizon;
    let dir = cfg.out.join("paths");
    fs::create_dir_all(&dir)?;

    let records: Vec<ExecutionRecord> = match path_csv {
        Some(file) => {
            let input = File::open(file).map_err(|e| Failure::Config(format!("{}: {e}", file.display())))?;
            let path = read_path_csv(input, &cfg.models.market, horizon, cfg.seed).map_err(|e| match e {
                AsrError::Solver { .. } => Failure::from(e),
                other => Failure::Config(format!("{}: {other}", file.display())),
            })?;
            vec![player.play(&path)?]
        }
        None => simulate_batch(&player, cfg.source, cfg.seed, cfg.paths)?.0,
    };

    let mut summary = csv::Writer::from_writer(create(&cfg.out, "simulate.csv")?);
    summary
        .write_record(["path", "delivery_day", "objective"])
        .map_err(|e| Failure::Solver(e.to_string()))?;
    for (k, rec) in records.iter().enumerate() {
        write_record_csv(create(&dir, &format!("path_{k:04}.csv"))?, rec)?;
        summary
            .write_record([k.to_string(), rec.delivery_day.to_string(), format!("{}", rec.objective)])
            .map_err(|e| Failure::Solver(e.to_string()))?;
    }
    summary.flush()?;
    let n = records.len().max(1) as f64;
    println!("pi_per_share    {:.6}", r.pi_per_share);
    println!("paths           {}", records.len());
    println!(
        "mean delivery   {:.2}",
        records.iter().map(|r| r.delivery_day as f64).sum::<f64>() / n
    );
    println!("mean objective  {:.2}", records.iter().map(|r| r.objective).sum::<f64>() / n);
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig) -> Result<(), Failure> {
    let specs = if cfg.sweeps.is_empty() {
        standard_sweeps()
    } else {
        cfg.sweeps.clone()
    };
    let results = run_sweeps(&specs, &cfg.models, &cfg.solve)?;
    write_sweep_csv(create(&cfg.out, "sweep.csv")?, &results)?;
    let mut failed = Vec::new();
    for r in &results {
        println!("{}:", r.parameter.name());
        for row in &r.rows {
            match &row.error {
                None => println!("  {:<10} pi/Q {:>10.5}  v0 {:>12.0}  {:>6.1} s", row.value, row.pi_per_share, row.v0, row.seconds),
                Some(e) => {
                    println!("  {:<10} failed: {e}", row.value);
                    failed.push(format!("{}={}", r.parameter.name(), row.value));
                }
            }
        }
        println!("  ordering as expected: {:?}", r.monotone);
        if let Some(b) = r.buy_only_dominates {
            println!("  buy-only never cheaper: {b}");
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(format!("failed points: {}", failed.join(", "))))
    }
}

fn cmd_check(cfg: &RunConfig, mode: Mode) -> Result<(), Failure> {
    if mode == Mode::Permanent {
        return Err(Failure::Config("the cost bounds apply to base mode only".into()));
    }
    let (s, _) = backward_solve(&cfg.models, &cfg.solve)?;
    let report = check_surface(&s, &lower_coeffs(&cfg.models)?, &cfg.models)?;
    write_report_csv(create(&cfg.out, "bounds.csv")?, &report)?;
    println!("checked         {}", report.checked);
    println!("violations      {}", report.violations);
    println!("lower margin    {:.6e}", report.worst_lower_margin);
    println!("upper margin    {:.6e}", report.worst_upper_margin);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "{} bound violations at tolerance {:e}",
            report.violations, report.tolerance
        )))
    }
}
