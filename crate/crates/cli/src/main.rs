use clap::Parser;
use qpaths::cli_io::{
    exit_code, run, write_report, write_trace_csv, Command, Endpoints, PathKind, RunConfig,
    RunReport, ScheduleKind,
};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Estimate log normalizing constants along q-deformed annealing paths.
#[derive(Debug, Parser)]
#[command(name = "qpaths", version)]
struct Args {
    /// anneal-toy, smc, ais, bdmc, heuristic-q or grid-q
    command: Command,
    /// geometric, qpath, moment or escort
    #[arg(long, default_value = "geometric")]
    path_kind: PathKind,
    /// Path order; required for qpath.
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    /// Particles (SMC) or independent chains (AIS).
    #[arg(long, visible_alias = "chains", default_value_t = 1000)]
    particles: usize,
    /// Number of annealing steps for a linear schedule.
    #[arg(short = 'k', long = "k", default_value_t = 32)]
    k: usize,
    #[arg(long, default_value = "linear")]
    schedule: ScheduleKind,
    /// MCMC transitions per intermediate distribution.
    #[arg(long, default_value_t = 1)]
    moves: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Binary-label CSV, label in the first column.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long, default_value = "report.json")]
    output: PathBuf,
    /// Toy endpoints: gaussian, student or identical.
    #[arg(long, default_value = "gaussian")]
    endpoints: Endpoints,
    /// Degrees of freedom for Student-t endpoints.
    #[arg(long, default_value_t = 3.0)]
    nu: f64,
    #[arg(long, default_value_t = 0.2)]
    step_size: f64,
    #[arg(long, default_value_t = 10)]
    leapfrog: usize,
    /// Step-size adaptation iterations per intermediate distribution.
    #[arg(long, default_value_t = 20)]
    warmup: usize,
    /// Reference-quality run: at least 50k particles and 20 moves.
    #[arg(long)]
    ground_truth: bool,
    /// Also write step,beta,ess,acceptance rows here.
    #[arg(long)]
    trace_csv: Option<PathBuf>,
}

impl Args {
    fn config(&self) -> RunConfig {
        RunConfig {
            command: self.command,
            path_kind: self.path_kind,
            q: self.q,
            particles: self.particles,
            k: self.k,
            schedule: self.schedule,
            moves: self.moves,
            seed: self.seed,
            dataset: self.dataset.clone(),
            output: self.output.clone(),
            endpoints: self.endpoints,
            nu: self.nu,
            step_size: self.step_size,
            leapfrog: self.leapfrog,
            warmup: self.warmup,
            ground_truth: self.ground_truth,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let config = args.config();
    let start = Instant::now();

    let report = match run(&config) {
        Ok(r) => r,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err}");
            if code != 2 {
                let failed =
                    RunReport::failed(config, err.to_string(), start.elapsed().as_secs_f64());
                if let Err(e) = write_report(&failed, &args.output) {
                    eprintln!("error: could not write failure report: {e}");
                }
            }
            return ExitCode::from(code as u8);
        }
    };

    let written = write_report(&report, &args.output).and_then(|_| match &args.trace_csv {
        Some(p) => write_trace_csv(&report, p),
        None => Ok(()),
    });
    if let Err(err) = written {
        eprintln!("error: {err}");
        return ExitCode::from(exit_code(&err) as u8);
    }
    println!("{}", report.summary_line());
    ExitCode::SUCCESS
}
