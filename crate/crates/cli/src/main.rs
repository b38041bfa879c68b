use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fedpriv_core::attacks::AttackKind;
use fedpriv_core::config::{DataConfig, Preset, RunConfig};
use fedpriv_core::data::{DatasetLayout, SUBJECTS_FILE};
use fedpriv_core::model::Strategy;
use fedpriv_core::pipeline::{attack_all, train_all, write_config_echo};
use fedpriv_core::report::{emit_report, file_entry, FileEntry, ATTACKS_DIR, CONFIG_FILE};
use fedpriv_core::{data, Error};

#[derive(Parser, Debug)]
#[command(name = "fedpriv", version, about = "Federated HAR training and privacy attack simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every configured strategy on every configured CV split.
    Train {
        #[command(flatten)]
        source: ConfigSource,
        /// Output run directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Only these strategies (repeatable or comma separated).
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<Strategy>,
    },
    /// Run an inference attack using a run directory's config and seeds.
    Attack {
        /// Run directory written by `train`.
        run: PathBuf,
        /// gender, bmi or membership.
        #[arg(long)]
        attack: AttackKind,
        /// Only these strategies (default: those the run trained).
        #[arg(long, value_delimiter = ',')]
        strategy: Vec<Strategy>,
        /// Override the attack's local epochs (repeatable or comma separated).
        #[arg(long, value_delimiter = ',')]
        epochs: Vec<usize>,
    },
    /// Write the configured synthetic population as CSV trials.
    Synth {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, default_value = "synthetic")]
        out: PathBuf,
        /// motion_sense or mobi_act.
        #[arg(long, default_value = "motion_sense")]
        layout: String,
    },
    /// Turn run and attack artifacts into figure CSVs.
    Report {
        run: PathBuf,
        /// Defaults to `<run>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ConfigSource {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// smoke or paper.
    #[arg(long)]
    preset: Option<Preset>,
    /// Overrides the global seed (and the synthetic generator's seed).
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigSource {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut run = match (&self.config, self.preset) {
            (Some(path), _) => {
                let mut run = RunConfig::load(path).map_err(Failure::usage)?;
                if let DataConfig::Files { path: data, .. } = &mut run.data {
                    if data.is_relative() {
                        *data = path.parent().unwrap_or(Path::new(".")).join(&*data);
                    }
                }
                run
            }
            (None, Some(p)) => RunConfig::preset(p),
            (None, None) => RunConfig::paper(),
        };
        if let Some(seed) = self.seed {
            run.seed = seed;
            if let DataConfig::Synthetic(s) = &mut run.data {
                s.seed = seed;
            }
        }
        run.validate().map_err(Failure::usage)?;
        Ok(run)
    }
}

/// An error with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    fn usage(error: Error) -> Self {
        Failure { code: 2, error }
    }

    fn runtime(error: Error) -> Self {
        let code = match error {
            Error::Config(_) => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    version: &'static str,
    command: String,
    config_hash: String,
    seed: u64,
    started_unix: u64,
    finished_unix: u64,
    files: Vec<FileEntry>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_manifest(root: &Path, name: &str, command: &str, run: &RunConfig, started: u64, files: &[PathBuf]) -> Result<(), Failure> {
    let mut entries = files
        .iter()
        .map(|f| file_entry(root, f))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::runtime)?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        command: command.into(),
        config_hash: run.hash(),
        seed: run.seed,
        started_unix: started,
        finished_unix: now(),
        files: entries,
    };
    let path = root.join(name);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Failure::runtime(Error::Io { path, source: e }))
}

fn run_config_of(run_dir: &Path) -> Result<RunConfig, Failure> {
    let path = run_dir.join(CONFIG_FILE);
    if !path.is_file() {
        return Err(Failure::usage(Error::Input(format!(
            "{} is not a run directory (no {CONFIG_FILE})",
            run_dir.display()
        ))));
    }
    RunConfig::load(&path).map_err(Failure::usage)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let started = now();
    match cli.command {
        Command::Train { source, out, strategy } => {
            let mut run = source.load()?;
            if !strategy.is_empty() {
                run.strategies = strategy;
            }
            let pop = run.data.load().map_err(Failure::runtime)?;
            let files = train_all(&run, &pop, &out).map_err(Failure::runtime)?;
            write_manifest(&out, "manifest.json", "train", &run, started, &files)?;
            log::info!("wrote {} files to {}", files.len() + 1, out.display());
        }
        Command::Attack {
            run: run_dir,
            attack,
            strategy,
            epochs,
        } => {
            let mut run = run_config_of(&run_dir)?;
            if !strategy.is_empty() {
                run.strategies = strategy;
            }
            if !epochs.is_empty() {
                run.attack.epoch_sweep = epochs;
            }
            run.validate().map_err(Failure::usage)?;
            let pop = run.data.load().map_err(Failure::runtime)?;
            let (reports, files) = attack_all(&run, &pop, attack, &run_dir).map_err(Failure::runtime)?;
            for r in &reports {
                println!(
                    "{attack}\t{}\tepochs={}\taccuracy={:.4}\tstd={:.4}",
                    r.strategy, r.local_epochs, r.mean, r.std
                );
            }
            let name = format!("manifest_{attack}.json");
            write_manifest(&run_dir.join(ATTACKS_DIR), &name, "attack", &run, started, &files)?;
        }
        Command::Synth { source, out, layout } => {
            let run = source.load()?;
            let DataConfig::Synthetic(cfg) = &run.data else {
                return Err(Failure::usage(Error::Config("synth needs a synthetic data source".into())));
            };
            let layout: DatasetLayout = layout.parse().map_err(Failure::usage)?;
            let ds = data::synth_generate(cfg).map_err(Failure::usage)?;
            let mut files = ds.write_csv(&out, layout).map_err(Failure::runtime)?;
            files.push(write_config_echo(&run, &out).map_err(Failure::runtime)?);
            write_manifest(&out, "manifest.json", "synth", &run, started, &files)?;
            log::info!("wrote {} users to {} ({SUBJECTS_FILE} + trials)", ds.profiles.len(), out.display());
        }
        Command::Report { run, out } => {
            run_config_of(&run)?;
            let out = out.unwrap_or_else(|| run.join("report"));
            let files = emit_report(&run, &out).map_err(|e| match e {
                Error::Input(_) | Error::Format { .. } => Failure::usage(e),
                e => Failure::runtime(e),
            })?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
