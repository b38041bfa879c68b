//! Whole-run drivers behind the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use crate::attacks::{output, run_attack, AttackKind, AttackReport};
use crate::config::{Population, RunConfig};
use crate::data::make_folds;
use crate::error::{Error, Result};
use crate::federation::artifacts::{write_round_log, UpdateDumper, ROUND_LOG_FILE};
use crate::federation::{prepare_clients, run_training_with, TrainingOutcome};
use crate::report::{fold_dir, ATTACKS_DIR, CONFIG_FILE};
use crate::model::Strategy;
use crate::seed::{derive_seed, Stream};

/// Writes the config echo that later commands read back.
pub fn write_config_echo(run: &RunConfig, root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join(CONFIG_FILE);
    fs::write(&path, run.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Trains one strategy on one CV split. Every strategy sees the same
/// clients, initial weights and shuffling for a given split.
pub fn train_split(
    run: &RunConfig,
    pop: &Population,
    strategy: Strategy,
    repetition: usize,
    fold: usize,
    dumper: Option<&mut UpdateDumper>,
) -> Result<TrainingOutcome> {
    let plan = make_folds(&pop.windows, run.cv.repetitions, run.cv.folds, derive_seed(run.seed, Stream::Folds, &[0]))?;
    let seed = derive_seed(run.seed, Stream::LocalTrain, &[repetition as u64, fold as u64]);
    let clients = prepare_clients(&pop.profiles, &pop.windows, &plan, repetition, fold, seed)?;
    let mut exp = run.experiment(strategy);
    exp.seed = seed;
    let mut none = NoObserver;
    match dumper {
        Some(d) => run_training_with(clients, &exp, d),
        None => run_training_with(clients, &exp, &mut none),
    }
}

struct NoObserver;

impl crate::federation::RunObserver for NoObserver {}

/// Trains every configured strategy on every configured CV split, writing
/// round logs and update dumps below `root`. Returns the files written.
pub fn train_all(run: &RunConfig, pop: &Population, root: &Path) -> Result<Vec<PathBuf>> {
    let mut written = vec![write_config_echo(run, root)?];
    for &strategy in &run.strategies {
        for (rep, fold) in run.cv.runs() {
            let dir = fold_dir(root, strategy, rep, fold);
            let mut dumper = UpdateDumper::new(&dir, run.artifacts.dump_updates);
            let out = train_split(run, pop, strategy, rep, fold, Some(&mut dumper))?;
            let last = out.log.entries.last().expect("at least one round");
            log::info!(
                "{} rep {rep} fold {fold}: {} rounds, accuracy {:.4}",
                strategy.name(),
                last.round,
                last.mean_test_accuracy
            );
            let log_path = dir.join(ROUND_LOG_FILE);
            write_round_log(&log_path, &out.log)?;
            written.push(log_path);
            written.extend(dumper.finish()?);
        }
    }
    Ok(written)
}

/// Local epoch counts an attack is evaluated at.
pub fn attack_epochs(run: &RunConfig) -> Vec<usize> {
    if run.attack.epoch_sweep.is_empty() {
        vec![run.attack.local_epochs.unwrap_or(run.training.local_epochs)]
    } else {
        run.attack.epoch_sweep.clone()
    }
}

/// Runs `kind` against every configured strategy and epoch count and
/// writes the report CSVs below `root`.
pub fn attack_all(run: &RunConfig, pop: &Population, kind: AttackKind, root: &Path) -> Result<(Vec<AttackReport>, Vec<PathBuf>)> {
    let mut reports = Vec::new();
    for &strategy in &run.strategies {
        for epochs in attack_epochs(run) {
            let r = run_attack(kind, pop, run, strategy, epochs)?;
            log::info!("{kind} attack on {} at {epochs} epochs: {:.4}", strategy.name(), r.mean);
            reports.push(r);
        }
    }
    let files = output::write_reports(&root.join(ATTACKS_DIR), kind, &reports)?;
    Ok((reports, files.to_vec()))
}
