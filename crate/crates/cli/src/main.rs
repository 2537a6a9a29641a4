use std::path::{Path, PathBuf};
use std::process::ExitCode;

use breaklens::ingest::{aggregate_as_of, parse_timestamp, read_records_file, CategorySet, VintagePolicy};
use breaklens::montecarlo::{coverage_study, CoverageConfig};
use breaklens::pipeline::{self, RunConfig};
use breaklens::rdd::{Estimand, Kernel};
use breaklens::series::write_series_file;
use breaklens::{Error, Month, MonthRange, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "breaklens",
    version,
    about = "Trend-break and discontinuity estimates on vintage-reconstructed import series"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured estimate and write results, tables and figure data.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare extracted series with their reconstructions and search vintages.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Also write table5.csv and vintage_search.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build one monthly series from raw records as of a vintage.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        /// Submission cutoff (RFC 3339 or YYYY-MM-DD), or "latest".
        #[arg(long)]
        vintage: String,
        /// Category set name (built-in, or defined in --config).
        #[arg(long)]
        series: String,
        #[arg(long)]
        out: PathBuf,
        /// Config file supplying user-defined category sets.
        #[arg(long)]
        config: Option<PathBuf>,
        /// First month (defaults to the earliest record in the set).
        #[arg(long)]
        start: Option<Month>,
        /// Last month (defaults to the latest record in the set).
        #[arg(long)]
        end: Option<Month>,
    },
    /// Monte Carlo coverage of the robust intervals on a curved design.
    Simulate {
        #[arg(long, default_value_t = 20170801)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        #[arg(long, default_value_t = 500)]
        n_per_side: usize,
        #[arg(long, value_enum, default_value_t = EstimandArg::Level)]
        estimand: EstimandArg,
        /// Local polynomial order (defaults by estimand).
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, value_enum, default_value_t = KernelArg::Triangular)]
        kernel: KernelArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimandArg {
    Level,
    Slope,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Triangular,
    Uniform,
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let cfg = RunConfig::from_file(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(config: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let (output, written) = pipeline::run_pipeline(&cfg, out)?;
    print!("{}", output.tables.table3);
    if let Some(t) = &output.tables.table4 {
        println!();
        print!("{t}");
    }
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

fn audit(config: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    if cfg.audit.is_none() {
        return Err(Error::Config("no [audit] section".into()));
    }
    let records = pipeline::load_records(&cfg)?;
    let store = pipeline::aggregate_all(&cfg, &records)?;
    let audit = pipeline::run_audit(&cfg, &records, &store)?.expect("audit configured");
    let results = pipeline::Results {
        layout: pipeline::TableLayout {
            cutoff: cfg.trend_break.cutoff,
            series: cfg.series.iter().map(|s| s.label.clone()).collect(),
            panels: Vec::new(),
            estimands: Vec::new(),
        },
        trend_breaks: Vec::new(),
        rdd: Vec::new(),
        audit: Some(audit),
        shares: None,
    };
    let tables = pipeline::render_tables(&results)?;
    let table5 = tables.table5.unwrap_or_default();
    print!("{table5}");
    if let Some(s) = &tables.vintage_search {
        println!();
        print!("{s}");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        write(&dir.join("table5.csv"), &table5)?;
        if let Some(s) = &tables.vintage_search {
            write(&dir.join("vintage_search.csv"), s)?;
        }
    }
    Ok(())
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

struct IngestArgs {
    data: PathBuf,
    vintage: String,
    series: String,
    out: PathBuf,
    config: Option<PathBuf>,
    start: Option<Month>,
    end: Option<Month>,
}

fn ingest(a: IngestArgs) -> Result<()> {
    let set = match &a.config {
        Some(p) => RunConfig::from_file(p)?.category_set(&a.series)?,
        None => CategorySet::builtin(&a.series)
            .ok_or_else(|| Error::Config(format!("unknown category set {}", a.series)))?,
    };
    let policy = match a.vintage.trim() {
        "latest" => None,
        s => Some(VintagePolicy::as_of(parse_timestamp(s)?)),
    };
    let records = read_records_file(&a.data)?;
    let periods = records.iter().filter(|r| set.contains(r.hs2)).map(|r| r.period);
    let (lo, hi) = periods.fold((None, None), |(lo, hi): (Option<Month>, Option<Month>), m| {
        (Some(lo.map_or(m, |x| x.min(m))), Some(hi.map_or(m, |x| x.max(m))))
    });
    let start = a.start.or(lo);
    let end = a.end.or(hi);
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::Degenerate(format!("no records in category set {}", set.name)));
    };
    let months = MonthRange::new(start, end)?;
    let series = aggregate_as_of(&records, policy.as_ref(), &set, &months);
    write_series_file(&a.out, &series)?;
    log::info!("{} months of {} written to {}", months.len(), set.name, a.out.display());
    Ok(())
}

fn simulate(cfg: CoverageConfig) -> Result<()> {
    let report = coverage_study(&cfg)?;
    let json = serde_json::to_string(&report).map_err(|e| Error::Degenerate(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out } => run(&config, out.as_deref()),
        Command::Audit { config, out } => audit(&config, out.as_deref()),
        Command::Ingest {
            data,
            vintage,
            series,
            out,
            config,
            start,
            end,
        } => ingest(IngestArgs {
            data,
            vintage,
            series,
            out,
            config,
            start,
            end,
        }),
        Command::Simulate {
            seed,
            reps,
            n_per_side,
            estimand,
            order,
            kernel,
        } => {
            let estimand = match estimand {
                EstimandArg::Level => Estimand::Level,
                EstimandArg::Slope => Estimand::Slope,
            };
            simulate(CoverageConfig {
                replications: reps,
                n_per_side,
                estimand,
                poly_order: order.unwrap_or(estimand.default_order()),
                kernel: match kernel {
                    KernelArg::Triangular => Kernel::Triangular,
                    KernelArg::Uniform => Kernel::Uniform,
                },
                seed,
                ..CoverageConfig::default()
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code() as u8)
        }
    }
}
