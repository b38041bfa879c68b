//! Plot-ready CSV series derived from run artifacts.
//!
//! | file | columns |
//! |------|---------|
//! | `user_accuracy_cdf.csv` | strategy, user, accuracy, fraction |
//! | `accuracy_by_round.csv` | strategy, round, mean_accuracy, runs |
//! | `attack_by_epochs.csv` | attack, target, strategy, local_epochs, mean, std |
//! | `attack_user_cdf.csv` | attack, target, strategy, local_epochs, user, accuracy, fraction |
//! | `membership.csv` | strategy, local_epochs, mean, std |
//!
//! Per-user utility is the final-round test accuracy averaged over the CV
//! runs a user took part in.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{output, AttackKind, AttackReport};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::federation::artifacts::{read_round_log, ROUND_LOG_FILE};
use crate::federation::RoundLog;
use crate::model::Strategy;

pub const CONFIG_FILE: &str = "config.toml";
pub const ATTACKS_DIR: &str = "attacks";
pub const REPORT_MANIFEST: &str = "report_manifest.json";
pub const FIGURE_FILES: [&str; 5] = [
    "user_accuracy_cdf.csv",
    "accuracy_by_round.csv",
    "attack_by_epochs.csv",
    "attack_user_cdf.csv",
    "membership.csv",
];

/// Directory holding one CV run of one strategy.
pub fn fold_dir(root: &Path, strategy: Strategy, repetition: usize, fold: usize) -> PathBuf {
    root.join(strategy.name()).join(format!("rep_{repetition:02}_fold_{fold:02}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdfSeries {
    pub values: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Empirical CDF: at each sorted value, the share of values at or below it.
pub fn cdf(values: &[f64]) -> Result<CdfSeries> {
    if values.is_empty() {
        return Err(Error::Input("cdf of an empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut fractions = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[j + 1] == v[i] {
            j += 1;
        }
        let f = if j + 1 == n { 1.0 } else { (j + 1) as f64 / n as f64 };
        fractions[i..=j].fill(f);
        i = j + 1;
    }
    Ok(CdfSeries { values: v, fractions })
}

/// First round (counted from 1) whose mean test accuracy reaches `threshold`.
pub fn rounds_to_accuracy(log: &RoundLog, threshold: f64) -> Result<Option<u32>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Input(format!("threshold {threshold} outside (0, 1]")));
    }
    Ok(log
        .entries
        .iter()
        .find(|e| e.mean_test_accuracy >= threshold)
        .map(|e| e.round))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Path of `file` relative to `root`, with forward slashes.
pub fn file_entry(root: &Path, file: &Path) -> Result<FileEntry> {
    let rel = file.strip_prefix(root).unwrap_or(file);
    Ok(FileEntry {
        path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
        sha256: sha256_file(file)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub config_hash: String,
    pub files: Vec<FileEntry>,
}

/// Everything the report reads from a run directory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    /// (strategy, repetition, fold, log) for every CV run found.
    pub logs: Vec<(Strategy, usize, usize, RoundLog)>,
    pub attacks: Vec<(AttackKind, AttackReport)>,
}

impl RunArtifacts {
    /// Reads the config echo, every round log the config implies and any
    /// attack CSVs. A run without config or without a single round log is
    /// an input error.
    pub fn read(run_dir: &Path) -> Result<Self> {
        let cfg_path = run_dir.join(CONFIG_FILE);
        if !cfg_path.is_file() {
            return Err(Error::Input(format!("{} has no {CONFIG_FILE}", run_dir.display())));
        }
        let config = RunConfig::load(&cfg_path)?;
        let mut logs = Vec::new();
        for &s in &config.strategies {
            for (rep, fold) in config.cv.runs() {
                let path = fold_dir(run_dir, s, rep, fold).join(ROUND_LOG_FILE);
                if path.is_file() {
                    logs.push((s, rep, fold, read_round_log(&path, s)?));
                }
            }
        }
        if logs.is_empty() {
            return Err(Error::Input(format!("{} contains no round logs", run_dir.display())));
        }
        let mut attacks = Vec::new();
        let dir = run_dir.join(ATTACKS_DIR);
        for kind in AttackKind::ALL {
            let (f, u) = (output::fold_file(&dir, kind), output::user_file(&dir, kind));
            if f.is_file() && u.is_file() {
                attacks.extend(output::read_reports(&f, &u)?.into_iter().map(|r| (kind, r)));
            }
        }
        Ok(RunArtifacts { config, logs, attacks })
    }
}

fn user_accuracy_cdf(a: &RunArtifacts) -> Result<String> {
    let mut out = String::from("strategy,user,accuracy,fraction\n");
    for &s in &a.config.strategies {
        let mut per_user: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for (_, _, _, log) in a.logs.iter().filter(|l| l.0 == s) {
            if let Some(last) = log.entries.last() {
                for (&u, &acc) in log.clients.iter().zip(&last.client_accuracy) {
                    let e = per_user.entry(u).or_default();
                    e.0 += acc;
                    e.1 += 1;
                }
            }
        }
        if per_user.is_empty() {
            continue;
        }
        let mut rows: Vec<(u32, f64)> = per_user.into_iter().map(|(u, (sum, n))| (u, sum / n as f64)).collect();
        rows.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
        let series = cdf(&rows.iter().map(|r| r.1).collect::<Vec<_>>())?;
        for ((u, acc), f) in rows.iter().zip(&series.fractions) {
            writeln!(out, "{},{u},{acc},{f}", s.name()).unwrap();
        }
    }
    Ok(out)
}

fn accuracy_by_round(a: &RunArtifacts) -> String {
    let mut out = String::from("strategy,round,mean_accuracy,runs\n");
    for &s in &a.config.strategies {
        let mut by_round: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for (_, _, _, log) in a.logs.iter().filter(|l| l.0 == s) {
            for e in &log.entries {
                let r = by_round.entry(e.round).or_default();
                r.0 += e.mean_test_accuracy;
                r.1 += 1;
            }
        }
        for (round, (sum, n)) in by_round {
            writeln!(out, "{},{round},{},{n}", s.name(), sum / n as f64).unwrap();
        }
    }
    out
}

fn attack_by_epochs(a: &RunArtifacts) -> String {
    let mut out = String::from("attack,target,strategy,local_epochs,mean,std\n");
    let mut rows: Vec<&AttackReport> = a
        .attacks
        .iter()
        .filter(|(k, _)| *k != AttackKind::Membership)
        .map(|(_, r)| r)
        .collect();
    rows.sort_by(|x, y| (&x.target, &x.strategy, x.local_epochs).cmp(&(&y.target, &y.strategy, y.local_epochs)));
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.attack, r.target, r.strategy, r.local_epochs, r.mean, r.std).unwrap();
    }
    out
}

fn attack_user_cdf(a: &RunArtifacts) -> Result<String> {
    let mut out = String::from("attack,target,strategy,local_epochs,user,accuracy,fraction\n");
    for (_, r) in &a.attacks {
        if r.per_user.is_empty() {
            continue;
        }
        let mut users = r.per_user.clone();
        users.sort_by(|x, y| x.accuracy().total_cmp(&y.accuracy()).then(x.user.cmp(&y.user)));
        let series = cdf(&users.iter().map(|u| u.accuracy()).collect::<Vec<_>>())?;
        for (u, f) in users.iter().zip(&series.fractions) {
            writeln!(
                out,
                "{},{},{},{},{},{},{f}",
                r.attack,
                r.target,
                r.strategy,
                r.local_epochs,
                u.user,
                u.accuracy()
            )
            .unwrap();
        }
    }
    Ok(out)
}

fn membership(a: &RunArtifacts) -> String {
    let mut out = String::from("strategy,local_epochs,mean,std\n");
    for (_, r) in a.attacks.iter().filter(|(k, _)| *k == AttackKind::Membership) {
        writeln!(out, "{},{},{},{}", r.strategy, r.local_epochs, r.mean, r.std).unwrap();
    }
    out
}

/// Writes the figure CSVs and a manifest into `out_dir`.
pub fn emit_report(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let a = RunArtifacts::read(run_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let contents = [
        user_accuracy_cdf(&a)?,
        accuracy_by_round(&a),
        attack_by_epochs(&a),
        attack_user_cdf(&a)?,
        membership(&a),
    ];
    let mut written = Vec::new();
    let mut files = Vec::new();
    for (name, text) in FIGURE_FILES.iter().zip(contents) {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        files.push(file_entry(out_dir, &path)?);
        written.push(path);
    }
    let manifest = ReportManifest {
        config_hash: a.config.hash(),
        files,
    };
    let path = out_dir.join(REPORT_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::{EarlyStop, RoundEntry};

    #[test]
    fn cdf_examples() {
        let c = cdf(&[0.5]).unwrap();
        assert_eq!((c.values, c.fractions), (vec![0.5], vec![1.0]));
        let c = cdf(&[0.8, 0.4, 0.2, 0.4]).unwrap();
        assert_eq!(c.values, vec![0.2, 0.4, 0.4, 0.8]);
        assert_eq!(c.fractions, vec![0.25, 0.75, 0.75, 1.0]);
        assert!(cdf(&[]).is_err());
        let c = cdf(&[0.1; 7]).unwrap();
        assert_eq!(c.fractions, vec![1.0; 7]);
    }

    fn log(acc: &[f64]) -> RoundLog {
        RoundLog {
            strategy: Strategy::Vanilla,
            clients: vec![0],
            entries: acc
                .iter()
                .enumerate()
                .map(|(i, &a)| RoundEntry {
                    round: i as u32 + 1,
                    mean_test_loss: 1.0,
                    mean_test_accuracy: a,
                    client_accuracy: vec![a],
                    client_loss: vec![1.0],
                    early_stop: EarlyStop::Continue,
                })
                .collect(),
        }
    }

    #[test]
    fn first_crossing() {
        assert_eq!(rounds_to_accuracy(&log(&[0.5, 0.91, 0.89]), 0.9).unwrap(), Some(2));
        assert_eq!(rounds_to_accuracy(&log(&[0.5, 0.86]), 0.9).unwrap(), None);
        assert!(rounds_to_accuracy(&log(&[0.5]), 1.01).is_err());
        assert!(rounds_to_accuracy(&log(&[0.5]), 0.0).is_err());
        assert_eq!(rounds_to_accuracy(&log(&[1.0]), 1.0).unwrap(), Some(1));
    }

    mod props {
        use super::super::cdf;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cdf_is_monotone_and_ends_at_one(v in proptest::collection::vec(0.0f64..1.0, 1..40)) {
                let c = cdf(&v).unwrap();
                prop_assert_eq!(*c.fractions.last().unwrap(), 1.0);
                prop_assert!(c.fractions[0] >= 1.0 / v.len() as f64);
                prop_assert!(c.fractions.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
