use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sos_scout::cli::{emit_report, render_json, render_text, run_scenario, ReportFormat, RunConfig};

#[derive(Parser)]
#[command(name = "sos-scout", version, about = "Certify positivity of a cohomology class on a flow and build a global surface of section")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on a JSON configuration.
    Run {
        config: PathBuf,
        /// Directory for report files.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<ReportFormat>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the occupation grid size.
        #[arg(long)]
        grid: Option<usize>,
        /// Writes the LP in CPLEX LP format.
        #[arg(long)]
        lp_export: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("SOS_SCOUT_THREADS") else { return Ok(()) };
    let n: usize = value.parse().map_err(|_| format!("SOS_SCOUT_THREADS must be a positive integer, got {value:?}"))?;
    if n == 0 {
        return Err("SOS_SCOUT_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<i32, Box<dyn std::error::Error>> {
    configure_threads()?;
    let Command::Run { config, out, format, seed, grid, lp_export } = cli.command;
    let mut cfg = RunConfig::load(&config)?;
    if let Some(seed) = seed {
        cfg.settings.seed = seed;
    }
    if let Some(grid) = grid {
        cfg.settings.grid = grid;
    }
    let output = cfg.output.clone().unwrap_or(sos_scout::cli::OutputConfig { dir: None, format: None });
    let format = format.or(output.format).unwrap_or(ReportFormat::Text);
    let out = out.or(output.dir.map(PathBuf::from));
    let report = run_scenario(&cfg)?;
    if let (Some(path), Some(lp)) = (lp_export, &report.lp) {
        lp.write_lp(&path)?;
    }
    match (&out, format) {
        (Some(dir), _) => {
            for p in emit_report(&report, format, dir)? {
                eprintln!("wrote {}", p.display());
            }
            if format == ReportFormat::Text {
                print!("{}", render_text(&report));
            }
        }
        (None, ReportFormat::Json) => print!("{}", render_json(&report)?),
        (None, ReportFormat::CsvBundle) => {
            for p in emit_report(&report, format, std::path::Path::new("."))? {
                eprintln!("wrote {}", p.display());
            }
        }
        (None, ReportFormat::Text) => print!("{}", render_text(&report)),
    }
    Ok(report.outcome().exit_code())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
