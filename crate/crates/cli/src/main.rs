use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use risk_lsvi::experiments::{self, EvalPolicy, RunConfig};
use risk_lsvi::Error;

#[derive(Parser)]
#[command(name = "risk-lsvi", version, about = "Risk-averse least-squares value iteration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write weights.json, curve.csv and train.json.
    Train(Overrides),
    /// Roll out a policy and write validation.csv, cdf.csv and summary.json.
    Evaluate {
        #[command(flatten)]
        overrides: Overrides,
        /// Weights file from `train`; its stored config is the base unless --config is given.
        #[arg(long, conflicts_with_all = ["oracle", "uniform"])]
        weights: Option<PathBuf>,
        /// Analytical thresholds (assignment) or the exact DP policy (tabular).
        #[arg(long, conflicts_with = "uniform")]
        oracle: bool,
        /// Uniformly random actions.
        #[arg(long)]
        uniform: bool,
    },
    /// Print the analytical threshold table of the assignment problem.
    Oracle {
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a tabular MDP file exactly and print the value table.
    Dp(Overrides),
    /// Compare two validation.csv files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    risk_kind: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta_schedule: Option<String>,
    #[arg(long)]
    evaluation: Option<String>,
    #[arg(long)]
    p_renew: Option<f64>,
    #[arg(long)]
    delta_mode: Option<String>,
    #[arg(long)]
    reward_model: Option<String>,
    #[arg(long)]
    bandit_init: Option<String>,
    /// MDP document for the tabular environment.
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    validation_episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    validation_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses a unit enum variant by its serialized name; `_` and `-` are interchangeable.
fn variant<T: serde::de::DeserializeOwned>(flag: &str, raw: &str) -> Result<T, Error> {
    let attempt = |s: String| serde_json::from_value::<T>(serde_json::Value::String(s));
    attempt(raw.replace('_', "-"))
        .or_else(|_| attempt(raw.replace('-', "_")))
        .map_err(|_| Error::Input(format!("invalid value {raw:?} for --{flag}")))
}

impl Overrides {
    fn resolve(&self, base: Option<RunConfig>) -> Result<RunConfig, Error> {
        let mut cfg = match (&self.config, base) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(base)) => base,
            (None, None) => RunConfig::default(),
        };
        if let Some(v) = &self.env {
            cfg.env = variant("env", v)?;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = Some(v);
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = &self.risk_kind {
            cfg.risk_kind = variant("risk-kind", v)?;
        }
        if let Some(v) = self.kappa {
            cfg.kappa = v;
        }
        if let Some(v) = &self.alpha {
            cfg.alpha = v.clone();
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = &self.beta_schedule {
            cfg.beta_schedule = variant("beta-schedule", v)?;
        }
        if let Some(v) = &self.evaluation {
            cfg.evaluation = variant("evaluation", v)?;
        }
        if let Some(v) = self.p_renew {
            cfg.p_renew = v;
        }
        if let Some(v) = &self.delta_mode {
            cfg.delta_mode = variant("delta-mode", v)?;
        }
        if let Some(v) = &self.reward_model {
            cfg.reward_model = variant("reward-model", v)?;
        }
        if let Some(v) = &self.bandit_init {
            cfg.bandit_init = variant("bandit-init", v)?;
        }
        if let Some(v) = &self.mdp {
            cfg.mdp = Some(v.clone());
        }
        if let Some(v) = self.validation_episodes {
            cfg.validation_episodes = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.validation_seed {
            cfg.validation_seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        Ok(cfg)
    }
}

/// Run config stored in a weights file by `train`.
fn stored_config(path: &PathBuf) -> Result<Option<RunConfig>, Error> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Ok(None);
    };
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("malformed weights file: {e}")))?;
    match v.pointer("/config/run") {
        Some(run) => Ok(Some(
            serde_json::from_value(run.clone()).map_err(|e| Error::Input(format!("stored config: {e}")))?,
        )),
        None => Ok(None),
    }
}

fn print_json<S: serde::Serialize>(value: &S) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(o) => {
            let cfg = o.resolve(None)?;
            print_json(&experiments::run_train(&cfg)?)
        }
        Command::Evaluate {
            overrides,
            weights,
            oracle,
            uniform,
        } => {
            let (policy, base) = match weights {
                Some(p) => {
                    let base = stored_config(&p)?;
                    (EvalPolicy::Weights(p), base)
                }
                None if oracle => (EvalPolicy::Oracle, None),
                None if uniform => (EvalPolicy::Uniform, None),
                None => return Err(Error::Input("evaluate needs --weights, --oracle or --uniform".into())),
            };
            let cfg = overrides.resolve(base)?;
            print_json(&experiments::run_evaluate(&cfg, &policy)?)
        }
        Command::Oracle { horizon, out } => {
            let table = experiments::run_oracle(horizon)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("thresholds.json"), serde_json::to_string_pretty(&table)?)?;
            }
            print_json(&table)
        }
        Command::Dp(overrides) => {
            let mut cfg = overrides.resolve(None)?;
            cfg.env = experiments::EnvKind::Tabular;
            let mdp = cfg.mdp.clone().ok_or_else(|| Error::Input("dp needs --mdp".into()))?;
            let table = experiments::run_dp(&mdp, &cfg.risk()?)?;
            if overrides.out.is_some() {
                std::fs::create_dir_all(&cfg.out)?;
                std::fs::write(cfg.out.join("values.json"), serde_json::to_string_pretty(&table)?)?;
            }
            print_json(&table)
        }
        Command::Compare { a, b, out, seed } => print_json(&experiments::run_compare(&a, &b, &out, seed)?),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
