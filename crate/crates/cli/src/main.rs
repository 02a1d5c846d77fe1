//! `mlmoments`: command-line experiments on Mittag-Leffler moments, Povzner
//! bounds and DSMC runs. Exit codes: 0 success, 2 usage, 3 numeric failure,
//! 4 budget abort.

mod commands;
mod settings;

use clap::{Parser, Subcommand};
use mlmoments::io::{sha256_hex, OutputRecord, RunManifest};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(mlmoments::Error),
}

impl From<mlmoments::Error> for CliError {
    fn from(e: mlmoments::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        use mlmoments::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Domain(_)
                | E::Parse { .. }
                | E::Io(_)
                | E::MissingMoments { .. }
                | E::MissingEpsilon(_)
                | E::MissingTime(_) => 2,
                E::Budget { .. } => 4,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mlmoments",
    version,
    about = "Mittag-Leffler moment experiments for the homogeneous Boltzmann equation"
)]
struct Cli {
    /// Random seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; without it the main table goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Configuration file, or a run manifest to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration value, `section.key=value`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate E_a(x) over a grid.
    MlEval {
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        x: Option<String>,
    },
    /// ε_q and its normalized decay for one kernel.
    EpsProfile {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        /// Tail order; sets β by the admissibility rule.
        #[arg(long)]
        s: Option<f64>,
    },
    /// Direct angular weight against the Povzner bound on random configurations.
    PovznerSweep {
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        rq: Option<String>,
    },
    /// Beta-function sums and their normalized ratios.
    BetaSums {
        /// a4 or a5.
        #[arg(long)]
        lemma: Option<String>,
        #[arg(long)]
        params: Option<String>,
        /// Integer range lo..hi or list.
        #[arg(long)]
        q: Option<String>,
    },
    /// Trajectory moments against the generation envelope.
    MomentEnvelope {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        orders: Option<String>,
    },
    /// Run the particle solver and write the moment trajectory.
    DsmcRun {
        #[arg(long)]
        particles: Option<u64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// maxwellian, bimaxwellian, compact or heavy_tail.
        #[arg(long)]
        ic: Option<String>,
    },
    /// Propagation and generation verdicts for a trajectory.
    TailReport {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        alpha0: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// T_n scan of the partial sums for one (s, α).
    BootstrapScan {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n_max: Option<u32>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::MlEval { .. } => "ml-eval",
            Command::EpsProfile { .. } => "eps-profile",
            Command::PovznerSweep { .. } => "povzner-sweep",
            Command::BetaSums { .. } => "beta-sums",
            Command::MomentEnvelope { .. } => "moment-envelope",
            Command::DsmcRun { .. } => "dsmc-run",
            Command::TailReport { .. } => "tail-report",
            Command::BootstrapScan { .. } => "bootstrap-scan",
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = settings::load(cli.config.as_deref(), &cli.set)?;
    settings::put(&mut cfg, "", "seed", &cli.seed)?;
    let seed = settings::seed(&cfg)?;
    let name = cli.command.name();
    use settings::put;
    let report = match &cli.command {
        Command::MlEval { a, x } => {
            put(&mut cfg, "ml", "a", a)?;
            put(&mut cfg, "ml", "x", x)?;
            commands::ml_eval(&cfg)?
        }
        Command::EpsProfile { preset, beta, s } => {
            put(&mut cfg, "eps", "beta", beta)?;
            put(&mut cfg, "eps", "s", s)?;
            if let Some(p) = preset {
                settings::apply_preset(&mut cfg, p)?;
            }
            commands::eps_profile(&cfg)?
        }
        Command::PovznerSweep { preset, samples, rq } => {
            put(&mut cfg, "povzner", "samples", samples)?;
            put(&mut cfg, "povzner", "rq", rq)?;
            if let Some(p) = preset {
                settings::apply_preset(&mut cfg, p)?;
            }
            commands::povzner(&cfg, seed)?
        }
        Command::BetaSums { lemma, params, q } => {
            put(&mut cfg, "beta", "lemma", lemma)?;
            put(&mut cfg, "beta", "params", params)?;
            put(&mut cfg, "beta", "q", q)?;
            commands::beta_sums(&cfg)?
        }
        Command::MomentEnvelope { trajectory, orders } => {
            put(&mut cfg, "envelope", "orders", orders)?;
            commands::moment_envelope(&cfg, trajectory)?
        }
        Command::DsmcRun { particles, horizon, ic } => {
            put(&mut cfg, "run", "particles", particles)?;
            put(&mut cfg, "run", "horizon", horizon)?;
            put(&mut cfg, "ic", "family", ic)?;
            commands::dsmc_run(&cfg, seed)?
        }
        Command::TailReport {
            trajectory,
            s,
            alpha0,
            gamma,
        } => {
            put(&mut cfg, "ml", "s", s)?;
            put(&mut cfg, "ml", "alpha0", alpha0)?;
            put(&mut cfg, "tail", "gamma", gamma)?;
            commands::tail_report(&cfg, trajectory)?
        }
        Command::BootstrapScan {
            trajectory,
            s,
            alpha,
            n_max,
        } => {
            put(&mut cfg, "ml", "s", s)?;
            put(&mut cfg, "ml", "alpha", alpha)?;
            put(&mut cfg, "ml", "n_max", n_max)?;
            commands::bootstrap(&cfg, trajectory)?
        }
    };
    match &cli.out {
        None => {
            use std::io::Write;
            let (_, bytes) = &report.files[0];
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
            let mut manifest = RunManifest::new(name, seed, &cfg);
            if let serde_json::Value::Object(m) = &report.summary {
                manifest.parameters = m.clone().into_iter().collect();
            }
            for (file, bytes) in &report.files {
                std::fs::write(dir.join(file), bytes).map_err(|e| CliError::Usage(format!("{file}: {e}")))?;
                manifest.outputs.push(OutputRecord {
                    path: file.clone(),
                    sha256: sha256_hex(bytes),
                });
            }
            std::fs::write(dir.join("manifest.json"), manifest.render())
                .map_err(|e| CliError::Usage(format!("manifest: {e}")))?;
            println!(
                "{}",
                serde_json::to_string(&report.summary).expect("json value serializes")
            );
        }
    }
    Ok(())
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
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mlmoments: {e}");
            ExitCode::from(e.code())
        }
    }
}
