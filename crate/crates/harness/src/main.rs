use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use risloc::chirp::{build_subspace, GammaInterval};
use risloc_harness::config::{ExperimentConfig, Method};
use risloc_harness::output::write_experiment;
use risloc_harness::scene::trial_seed;
use risloc_harness::trial::run_trial_report;
use risloc_harness::{run_error_vs_k, run_rmse_vs_snr, Context, HarnessError};

#[derive(Parser)]
#[command(name = "risloc", version, about = "Near-field RIS localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Base seed for per-trial seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated methods: proposed, proposed-sm, omp, music-ris.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and print the scene and every estimate.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// SNR in dB; `inf` for noiseless.
        #[arg(long, default_value_t = 15.0)]
        snr: f64,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// RMSE of azimuth, elevation and range versus SNR.
    RmseVsSnr {
        #[command(flatten)]
        common: Common,
    },
    /// Average positioning error versus the number of users.
    ErrorVsK {
        #[command(flatten)]
        common: Common,
    },
    /// Print the worst-case chirp subspace error for J = 1..5.
    CalibrateSubspace {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        max_j: usize,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seeds.base = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    if let Some(ms) = &common.methods {
        cfg.methods = ms
            .iter()
            .map(|m| Method::parse(m).ok_or_else(|| HarnessError::Config(format!("unknown method {m}"))))
            .collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn print_table(rows: &[risloc_harness::output::AggregateRow]) {
    println!(
        "{:<12} {:>7} {:>2} {:>4} {:>11} {:>11} {:>10} {:>10}",
        "method", "snr_db", "k", "ok", "rmse_az", "rmse_el", "rmse_r", "mean_pe"
    );
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
    for r in rows {
        println!(
            "{:<12} {:>7} {:>2} {:>4} {:>11} {:>11} {:>10} {:>10}",
            r.method,
            r.snr_db,
            r.k,
            r.trials_ok,
            f(r.rmse_azimuth),
            f(r.rmse_elevation),
            f(r.rmse_range),
            f(r.mean_positioning_error)
        );
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { common, snr, k, trial } => {
            let cfg = load(&common)?;
            let seed = trial_seed(cfg.seeds.base, k, trial);
            let ctx = Context::new(cfg)?;
            let rep = run_trial_report(&ctx, snr, k, trial, seed)?;
            println!("seed {seed}, snr {snr} dB, noise variance {:.3e}", rep.measurement.noise_var);
            println!("truth:");
            for u in &rep.scene {
                println!(
                    "  azimuth {:+.5} rad  elevation {:+.5} rad  range {:.4} m",
                    u.azimuth, u.elevation, u.range
                );
            }
            for (method, est) in &rep.estimates {
                println!("{}:", method.name());
                match est {
                    Ok(list) => {
                        for e in list {
                            println!(
                                "  azimuth {:+.5} rad  elevation {:+.5} rad  range {:.4} m  |gain| {:.3e}{}",
                                e.azimuth,
                                e.elevation,
                                e.range,
                                e.gain.norm(),
                                if e.clamped { "  (clamped)" } else { "" }
                            );
                        }
                    }
                    Err(msg) => println!("  failed: {msg}"),
                }
            }
            for r in &rep.rows {
                println!(
                    "{:<12} positioning error {} m  iters {}  {:.2} s  {}",
                    r.method,
                    r.positioning_error.map_or("-".into(), |v| format!("{v:.4}")),
                    r.solver_iters,
                    r.wall_time_s,
                    r.status
                );
            }
        }
        Command::RmseVsSnr { common } => {
            let cfg = load(&common)?;
            let ctx = Context::new(cfg)?;
            let rows = run_rmse_vs_snr(&ctx)?;
            let table = write_experiment(&common.out, "rmse_vs_snr", &ctx.config, &rows)?;
            print_table(&table);
        }
        Command::ErrorVsK { common } => {
            let cfg = load(&common)?;
            let ctx = Context::new(cfg)?;
            let rows = run_error_vs_k(&ctx)?;
            let table = write_experiment(&common.out, "error_vs_k", &ctx.config, &rows)?;
            print_table(&table);
        }
        Command::CalibrateSubspace { common, max_j } => {
            let cfg = load(&common)?;
            let g = cfg.geometry()?;
            let s = &cfg.subspace;
            let iv = GammaInterval::from_ranges(s.r_min, s.r_max, g.wavelength(), s.guard)?;
            println!("j,worst_case_error_h,worst_case_error_v");
            for j in 1..=max_j {
                let h = build_subspace(g.n_h(), g.d_h(), iv, j, s.grid_size)?;
                let v = build_subspace(g.n_v(), g.d_v(), iv, j, s.grid_size)?;
                println!("{j},{:.6e},{:.6e}", h.worst_case_error(), v.worst_case_error());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
