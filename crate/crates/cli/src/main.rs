use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectral_sketch::{Seed, Variant};
use specsketch::{run_stream, selftest, write_outputs, CliError, RunConfig};

/// Sketch a dynamic graph stream and decode a spectral sparsifier.
#[derive(Parser, Debug)]
#[command(name = "specsketch", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the bundled property checks at n = 16 and n = 64.
    Selftest(RunArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Update stream (`n <count>`, then `+ u v` / `- u v`); `-` or absent reads stdin.
    input: Option<PathBuf>,
    /// Expected vertex count, checked against the stream header.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Γ, the base of the level schedule.
    #[arg(long)]
    gamma_base: Option<f64>,
    #[arg(long, default_value = "ballcarve", value_parser = parse_variant)]
    variant: Variant,
    /// Master seed, up to 64 hex digits.
    #[arg(long, default_value = "1", value_parser = parse_seed)]
    seed: Seed,
    /// Rows of each resistance embedding.
    #[arg(long)]
    qjl: Option<usize>,
    /// Peeling degree threshold.
    #[arg(long)]
    d_threshold: Option<f64>,
    /// Connectivity threshold for low-connectivity recovery.
    #[arg(long)]
    lambda_threshold: Option<f64>,
    /// Heavy-edge resistance threshold.
    #[arg(long)]
    beta: Option<f64>,
    /// Check the output against the exact relative spectrum.
    #[arg(long)]
    verify: bool,
    /// Sparsifier destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the binary sketch checkpoint here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_seed(s: &str) -> Result<Seed, String> {
    Seed::from_hex(s).map_err(|e| e.to_string())
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            n: self.n,
            eps: self.eps,
            gamma_base: self.gamma_base,
            variant: self.variant,
            seed: self.seed,
            qjl: self.qjl,
            d_threshold: self.d_threshold,
            lambda_threshold: self.lambda_threshold,
            beta: self.beta,
            verify: self.verify,
            out: self.out.clone(),
            checkpoint: self.checkpoint.clone(),
        }
    }
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = args.config();
    cfg.validate()?;
    let report = match args.input.as_deref().filter(|p| p.as_os_str() != "-") {
        Some(p) => run_stream(&cfg, BufReader::new(std::fs::File::open(p)?))?,
        None => run_stream(&cfg, std::io::stdin().lock())?,
    };
    write_outputs(&cfg, &report)?;
    eprint!("{report}");
    match (report.verdict, report.spectrum) {
        (Some(false), Some((lo, hi))) => Err(CliError::Verify { lo, hi, eps: cfg.eps }),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Some(Command::Selftest(args)) => {
            let rep = selftest(&args.config());
            println!("{rep}");
            if rep.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        None => match run(&cli.run) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
