use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sarred::experiment::{
    diagnose_to_dir, evaluate_dir, reconstruct_dir, simulate_to_dir, sweep_to_dir, Status,
};
use sarred::io::RunConfig;

#[derive(Parser)]
#[command(name = "sarred", version, about = "Sparse 3D array-SAR imaging experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write scenes and masked noisy echoes for every (sr, snr, seed).
    Simulate(Common),
    /// Reconstruct every cell from the echoes in the output directory.
    Reconstruct(Common),
    /// Simulate, reconstruct and score the whole grid in one go.
    Sweep(Common),
    /// Score reconstructed volumes against the scenes and write results.csv.
    Evaluate(Common),
    /// Adjoint, RED gradient and denoiser monotonicity checks.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run config; the built-in desk preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set solver.t_max=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Common {
    fn load(&self) -> sarred::Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

fn run(cli: Cli) -> sarred::Result<bool> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            let obs = simulate_to_dir(&cfg, &c.out)?;
            println!("wrote {} echoes to {}", obs.len(), c.out.display());
            Ok(true)
        }
        Command::Reconstruct(c) => {
            let cfg = c.load()?;
            let failed = reconstruct_dir(&cfg, &c.out, c.jobs)?;
            if failed > 0 {
                eprintln!("{failed} cells failed; see timings.csv");
            }
            Ok(failed == 0)
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let out = sweep_to_dir(&cfg, &c.out, c.jobs)?;
            for row in out.rows() {
                if row.failed() {
                    eprintln!(
                        "{} sr={} snr={} seed={}: {}",
                        row.method, row.sr, row.snr_db, row.seed, row.error
                    );
                } else {
                    println!(
                        "{:<9} sr={:<5} snr={:<5} seed={:<3} psnr={:>8.3} ssim={:.4} nmse={:.4} it={}",
                        row.method, row.sr, row.snr_db, row.seed, row.psnr_db, row.ssim, row.nmse, row.iterations
                    );
                }
            }
            Ok(out.all_succeeded())
        }
        Command::Evaluate(c) => {
            let cfg = c.load()?;
            let rows = evaluate_dir(&cfg, &c.out)?;
            let failed = rows.iter().filter(|r| r.failed()).count();
            for r in rows.iter().filter(|r| r.failed()) {
                eprintln!("{} sr={} snr={} seed={}: {}", r.method, r.sr, r.snr_db, r.seed, r.error);
            }
            println!("scored {} cells, {failed} failed", rows.len());
            Ok(failed == 0)
        }
        Command::Diagnose(c) => {
            let cfg = c.load()?;
            let report = diagnose_to_dir(&cfg, &c.out)?;
            print!("{}", report.render());
            let warned = report
                .findings
                .iter()
                .filter(|f| f.status == Status::Warn)
                .count();
            if warned > 0 {
                eprintln!("{warned} diagnostics raised warnings");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
