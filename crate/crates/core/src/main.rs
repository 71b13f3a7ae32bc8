use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stickyflow::config::{ExperimentConfig, Suite};
use stickyflow::suites;
use stickyflow::Error;

/// Numerical checks for sticky Brownian motion and its Wiener flow of kernels.
///
/// Exit codes: 0 all checks passed, 1 a statistical or numerical check failed,
/// 2 configuration error.
#[derive(Parser, Debug)]
#[command(name = "stickyflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Joint law of (X_t, W) against G_f(W_t^+) and the marginal law at 0.
    ///
    /// CSV: joint_law.csv (f,g,delta,std_error,z,pass);
    /// marginal_histogram.csv (bin_low,bin_high,count_sim,count_law).
    WarrenCheck(Common),
    /// Time-change occupation times at 0 against the closed-form law.
    ///
    /// CSV: occupation_histogram.csv (bin_low,bin_high,count_sim,count_law);
    /// occupation_ks.csv (source_steps,ks_statistic,p_value,mean_sim,mean_law).
    OccupationCheck(Common),
    /// Conservativity, g ODE, boundary identity and Chapman-Kolmogorov.
    ///
    /// CSV: density.csv (x,y,density,atom).
    SemigroupCheck(Common),
    /// Flow of maps and kernels: composition and G-intertwining identities.
    ///
    /// CSV: g_identities.csv (f,err_first,err_second).
    FlowCheck(Common),
    /// Step-halving study of the flow equation residual.
    ///
    /// CSV: residual.csv (f,x,n_steps,rms_residual).
    SdeResidual(Common),
    /// Truncated chaos expansion against G_f(W_t^+) and its P+ form.
    ///
    /// CSV: terms.csv (f,path_id,order,value,value_pplus,reference);
    /// mse.csv (f,n_max,mse,std_error); c1.csv (f,s,c1,c1_pplus).
    ChaosCheck(Common),
}

/// Flags shared by every subcommand. Each suite also writes checks.csv (check,value,bound,pass).
#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Stickiness.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Time horizon.
    #[arg(long, allow_negative_numbers = true)]
    t: Option<f64>,
    /// Time steps (source steps for occupation-check, coarsest level for sde-residual).
    #[arg(long)]
    steps: Option<usize>,
    /// Monte Carlo sample size.
    #[arg(long)]
    paths: Option<usize>,
    /// Master seed; every random stream is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` overrides, applied after the file and before the flags above.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Command {
    fn split(&self) -> (Suite, &Common) {
        match self {
            Command::WarrenCheck(c) => (Suite::Warren, c),
            Command::OccupationCheck(c) => (Suite::Occupation, c),
            Command::SemigroupCheck(c) => (Suite::Semigroup, c),
            Command::FlowCheck(c) => (Suite::Flow, c),
            Command::SdeResidual(c) => (Suite::SdeResidual, c),
            Command::ChaosCheck(c) => (Suite::Chaos, c),
        }
    }
}

fn build_config(suite: Suite, args: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::defaults(suite);
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for kv in &args.set {
        cfg.apply_text(kv)?;
    }
    if let Some(v) = args.theta {
        cfg.theta = v;
    }
    if let Some(v) = args.t {
        cfg.t_horizon = v;
    }
    if let Some(v) = args.steps {
        cfg.n_time_steps = v;
    }
    if let Some(v) = args.paths {
        cfg.n_paths = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = args.threads {
        cfg.threads = v;
    }
    cfg.validate(suite)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (suite, args) = cli.command.split();
    let cfg = match build_config(suite, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        print!("{cfg}");
        return ExitCode::SUCCESS;
    }
    if cfg.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            eprintln!("config error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let started = std::time::Instant::now();
    match suites::run(suite, &cfg) {
        Ok(report) => {
            print!("{}", report.summary());
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            println!("elapsed {:.1}s", started.elapsed().as_secs_f64());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ (Error::Config(_) | Error::InvalidParameter { .. } | Error::CostGuard(_))) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
