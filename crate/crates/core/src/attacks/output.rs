//! CSV form of attack reports.
//!
//! `attack_<kind>_folds.csv`: attack, strategy, target, local_epochs,
//! repetition, fold, accuracy, tested.
//! `attack_<kind>_users.csv`: attack, strategy, target, local_epochs, user,
//! correct, tested, accuracy.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::cv::{AttackReport, FoldAccuracy, UserScore};
use crate::attacks::AttackKind;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct FoldRow {
    attack: String,
    strategy: String,
    target: String,
    local_epochs: usize,
    repetition: usize,
    fold: usize,
    accuracy: f64,
    tested: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct UserRow {
    attack: String,
    strategy: String,
    target: String,
    local_epochs: usize,
    user: u32,
    correct: usize,
    tested: usize,
    accuracy: f64,
}

pub fn fold_file(dir: &Path, kind: AttackKind) -> PathBuf {
    dir.join(format!("attack_{}_folds.csv", kind.name()))
}

pub fn user_file(dir: &Path, kind: AttackKind) -> PathBuf {
    dir.join(format!("attack_{}_users.csv", kind.name()))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes both CSV files for `reports` and returns their paths.
pub fn write_reports(dir: &Path, kind: AttackKind, reports: &[AttackReport]) -> Result<[PathBuf; 2]> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (fp, up) = (fold_file(dir, kind), user_file(dir, kind));
    let mut folds = writer(&fp)?;
    let mut users = writer(&up)?;
    for r in reports {
        for f in &r.folds {
            folds
                .serialize(FoldRow {
                    attack: r.attack.clone(),
                    strategy: r.strategy.clone(),
                    target: r.target.clone(),
                    local_epochs: r.local_epochs,
                    repetition: f.repetition,
                    fold: f.fold,
                    accuracy: f.accuracy,
                    tested: f.tested,
                })
                .map_err(|e| Error::format(&fp, e.to_string()))?;
        }
        for u in &r.per_user {
            users
                .serialize(UserRow {
                    attack: r.attack.clone(),
                    strategy: r.strategy.clone(),
                    target: r.target.clone(),
                    local_epochs: r.local_epochs,
                    user: u.user,
                    correct: u.correct,
                    tested: u.tested,
                    accuracy: u.accuracy(),
                })
                .map_err(|e| Error::format(&up, e.to_string()))?;
        }
    }
    folds.flush().map_err(|e| Error::io(&fp, e))?;
    users.flush().map_err(|e| Error::io(&up, e))?;
    Ok([fp, up])
}

/// Rebuilds reports from the two CSV files, in order of first appearance.
pub fn read_reports(folds_path: &Path, users_path: &Path) -> Result<Vec<AttackReport>> {
    let mut reports: Vec<AttackReport> = Vec::new();
    let find = |reports: &mut Vec<AttackReport>, a: &str, s: &str, t: &str, e: usize| -> usize {
        if let Some(i) = reports
            .iter()
            .position(|r| r.attack == a && r.strategy == s && r.target == t && r.local_epochs == e)
        {
            return i;
        }
        reports.push(AttackReport {
            attack: a.into(),
            strategy: s.into(),
            target: t.into(),
            local_epochs: e,
            folds: Vec::new(),
            mean: 0.0,
            std: 0.0,
            per_user: Vec::new(),
            correct: 0,
            tested: 0,
        });
        reports.len() - 1
    };
    let mut rd = csv::Reader::from_path(folds_path).map_err(|e| Error::format(folds_path, e.to_string()))?;
    for row in rd.deserialize::<FoldRow>() {
        let row = row.map_err(|e| Error::format(folds_path, e.to_string()))?;
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(Error::format(folds_path, format!("accuracy {} outside [0, 1]", row.accuracy)));
        }
        let i = find(&mut reports, &row.attack, &row.strategy, &row.target, row.local_epochs);
        reports[i].folds.push(FoldAccuracy {
            repetition: row.repetition,
            fold: row.fold,
            accuracy: row.accuracy,
            tested: row.tested,
        });
    }
    let mut rd = csv::Reader::from_path(users_path).map_err(|e| Error::format(users_path, e.to_string()))?;
    for row in rd.deserialize::<UserRow>() {
        let row = row.map_err(|e| Error::format(users_path, e.to_string()))?;
        let i = find(&mut reports, &row.attack, &row.strategy, &row.target, row.local_epochs);
        reports[i].per_user.push(UserScore {
            user: row.user,
            correct: row.correct,
            tested: row.tested,
        });
    }
    for r in &mut reports {
        let n = r.folds.len() as f64;
        if r.folds.is_empty() {
            return Err(Error::format(folds_path, format!("no folds for {} {}", r.attack, r.strategy)));
        }
        r.mean = r.folds.iter().map(|f| f.accuracy).sum::<f64>() / n;
        r.std = if r.folds.len() > 1 {
            (r.folds.iter().map(|f| (f.accuracy - r.mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        r.correct = r.per_user.iter().map(|u| u.correct).sum();
        r.tested = r.per_user.iter().map(|u| u.tested).sum();
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(strategy: &str, epochs: usize) -> AttackReport {
        let folds: Vec<FoldAccuracy> = (0..5)
            .map(|f| FoldAccuracy {
                repetition: 0,
                fold: f,
                accuracy: [0.5, 0.75, 1.0, 0.25, 0.5][f],
                tested: 4,
            })
            .collect();
        let mean = 0.6;
        let std = (folds.iter().map(|f| (f.accuracy - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        AttackReport {
            attack: "attribute".into(),
            strategy: strategy.into(),
            target: "female".into(),
            local_epochs: epochs,
            folds,
            mean,
            std,
            per_user: vec![
                UserScore {
                    user: 1,
                    correct: 1,
                    tested: 1,
                },
                UserScore {
                    user: 4,
                    correct: 0,
                    tested: 1,
                },
            ],
            correct: 1,
            tested: 2,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let reports = vec![report("vanilla", 2), report("fedper", 2), report("vanilla", 20)];
        let [f, u] = write_reports(dir.path(), AttackKind::Gender, &reports).unwrap();
        let back = read_reports(&f, &u).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.iter().zip(&reports) {
            assert_eq!(a.folds, b.folds);
            assert_eq!(a.per_user, b.per_user);
            assert!((a.mean - b.mean).abs() < 1e-12);
            assert!((a.std - b.std).abs() < 1e-12);
        }
        let text = std::fs::read_to_string(&f).unwrap();
        assert!(text.starts_with("attack,strategy,target,local_epochs,repetition,fold,accuracy,tested\n"));
    }
}
