mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, SEED_ENV};

/// Exit statuses.
pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_TRAINING: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "stresskit",
    version,
    about = "Subject-independent stress detection from wrist EDA, BVP and skin temperature"
)]
struct Cli {
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable), e.g. `--set nn.dropout=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Cap on worker threads (windows and folds); 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed; falls back to STRESSKIT_SEED, then to the configured value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Classifier: nn or rf.
    #[arg(long)]
    model: Option<String>,
    /// Trial: eda, bvp, st or fusion.
    #[arg(long)]
    signals: Option<String>,
    /// Directory holding the feature cache.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Directory for checkpoints and reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic cohort in the neutral dataset format.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        subjects: Option<usize>,
        /// Recording length per subject, seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Window every subject and write the feature cache, drop log and feature dictionary.
    Extract {
        /// Dataset root with one directory per subject.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        window_size: Option<f64>,
        #[arg(long)]
        window_shift: Option<f64>,
        /// Recompute even when the cache matches the inputs.
        #[arg(long)]
        force: bool,
    },
    /// Train one model per LOSO fold; writes checkpoints and the evaluation report.
    Train(ModelArgs),
    /// LOSO evaluation; scores saved checkpoints when `--models` is given.
    Evaluate {
        #[command(flatten)]
        args: ModelArgs,
        /// Checkpoint directory written by `train` (one file per subject).
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Summarise every report found in a results directory.
    Report {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn after_help() -> String {
    let mut s = String::from("Configuration keys (defaults shown; set via --config FILE or --set KEY=VALUE):\n");
    for (k, v) in RunConfig::keys() {
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s.push_str(&format!(
        "\nEnvironment:\n  {SEED_ENV}  seed used when neither --seed nor a `seed` key is given\n\n\
         Exit status: 0 success, 2 input or ingestion error, 3 training failure, 64 usage error\n"
    ));
    s
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    let mut seed_set = false;
    if let Some(path) = &cli.config {
        let keys = cfg.apply_file(path)?;
        seed_set |= keys.iter().any(|k| k == "seed");
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got `{o}`"))?;
        cfg.set(k.trim(), v)?;
        seed_set |= k.trim() == "seed";
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    } else if !seed_set {
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| format!("{SEED_ENV} must be a non-negative integer, got `{v}`"))?;
        }
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let mut set_str = |k: &str, v: Option<String>| -> Result<(), String> {
        match v {
            Some(v) => cfg.set(k, &v),
            None => Ok(()),
        }
    };
    match &cli.command {
        Command::Synth {
            out,
            subjects,
            duration,
        } => {
            set_str("data_dir", path(out))?;
            set_str("synth.n_subjects", subjects.map(|v| v.to_string()))?;
            set_str("synth.duration_s", duration.map(|v| v.to_string()))?;
        }
        Command::Extract {
            data,
            out,
            window_size,
            window_shift,
            ..
        } => {
            set_str("data_dir", path(data))?;
            set_str("features_dir", path(out))?;
            set_str("window.window_size_s", window_size.map(|v| v.to_string()))?;
            set_str("window.window_shift_s", window_shift.map(|v| v.to_string()))?;
        }
        Command::Train(a) | Command::Evaluate { args: a, .. } => {
            set_str("model", a.model.clone())?;
            set_str("signals", a.signals.clone())?;
            set_str("features_dir", path(&a.features))?;
            set_str("output_dir", path(&a.out))?;
        }
        Command::Report { out } => set_str("output_dir", path(out))?,
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let help = after_help();
    let cmd = <Cli as clap::CommandFactory>::command().after_help(help);
    let cli = match cmd.try_get_matches().and_then(|m| <Cli as clap::FromArgMatches>::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
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

    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if cfg.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    let result = match &cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Extract { force, .. } => commands::extract(&cfg, *force),
        Command::Train(_) => commands::train(&cfg),
        Command::Evaluate { models, .. } => commands::evaluate(&cfg, models.as_deref()),
        Command::Report { .. } => commands::report(&cfg),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
