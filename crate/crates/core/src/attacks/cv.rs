use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::attacks::forest::{fold_seed, rf_predict, rf_train, ForestParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed::{rng_for, Stream};

/// One observation for the attacker.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSample {
    pub features: Vec<f64>,
    pub label: u8,
    pub client: u32,
    /// Samples sharing a group never straddle a train/test split.
    pub group: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldAccuracy {
    pub repetition: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub tested: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserScore {
    pub user: u32,
    pub correct: usize,
    pub tested: usize,
}

impl UserScore {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.tested as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub attack: String,
    pub strategy: String,
    pub target: String,
    /// Local epochs used by the clients whose updates were attacked.
    pub local_epochs: usize,
    pub folds: Vec<FoldAccuracy>,
    pub mean: f64,
    /// Sample standard deviation of the fold accuracies.
    pub std: f64,
    pub per_user: Vec<UserScore>,
    pub correct: usize,
    pub tested: usize,
}

impl AttackReport {
    /// Pooled accuracy over every test prediction.
    pub fn pooled_accuracy(&self) -> f64 {
        self.correct as f64 / self.tested as f64
    }
}

/// Group assignment for one repetition: groups are shuffled, split by label
/// and dealt round-robin so each fold gets a share of both classes.
pub fn group_folds(samples: &[AttackSample], k: usize, seed: u64, repetition: usize) -> Result<BTreeMap<u32, usize>> {
    let mut label_of: BTreeMap<u32, u8> = BTreeMap::new();
    for s in samples {
        if let Some(&l) = label_of.get(&s.group) {
            if l != s.label {
                return Err(Error::Input(format!("group {} mixes labels", s.group)));
            }
        }
        label_of.insert(s.group, s.label);
    }
    if k < 2 {
        return Err(Error::Config("attack cross-validation needs at least 2 folds".into()));
    }
    if label_of.len() < k {
        return Err(Error::Config(format!(
            "attack cross-validation needs at least {k} groups, found {}",
            label_of.len()
        )));
    }
    let mut rng = rng_for(seed, Stream::AttackCv, &[repetition as u64]);
    let mut assignment = BTreeMap::new();
    let mut next = 0;
    for label in [0u8, 1] {
        let mut groups: Vec<u32> = label_of.iter().filter(|(_, &l)| l == label).map(|(&g, _)| g).collect();
        groups.shuffle(&mut rng);
        for g in groups {
            assignment.insert(g, next % k);
            next += 1;
        }
    }
    Ok(assignment)
}

/// Repeated group-aware k-fold evaluation of a freshly trained forest.
pub fn attack_cv(
    samples: &[AttackSample],
    repetitions: usize,
    k: usize,
    forest: ForestParams,
    exec: Execution,
) -> Result<AttackReport> {
    if repetitions == 0 {
        return Err(Error::Config("attack cross-validation needs at least one repetition".into()));
    }
    let mut folds = Vec::new();
    let mut per_user: BTreeMap<u32, UserScore> = BTreeMap::new();
    for rep in 0..repetitions {
        let assignment = group_folds(samples, k, forest.seed, rep)?;
        for fold in 0..k {
            let (test, train): (Vec<&AttackSample>, Vec<&AttackSample>) =
                samples.iter().partition(|s| assignment[&s.group] == fold);
            let x: Vec<Vec<f64>> = train.iter().map(|s| s.features.clone()).collect();
            let y: Vec<u8> = train.iter().map(|s| s.label).collect();
            let params = ForestParams {
                seed: fold_seed(forest.seed, rep, fold),
                ..forest
            };
            let model = rf_train(&x, &y, params, exec)?;
            let mut correct = 0;
            for s in &test {
                let ok = rf_predict(&model, &s.features)?.0 == s.label;
                correct += usize::from(ok);
                let u = per_user.entry(s.client).or_insert(UserScore {
                    user: s.client,
                    correct: 0,
                    tested: 0,
                });
                u.tested += 1;
                u.correct += usize::from(ok);
            }
            folds.push(FoldAccuracy {
                repetition: rep,
                fold,
                accuracy: correct as f64 / test.len() as f64,
                tested: test.len(),
            });
        }
    }
    let n = folds.len() as f64;
    let mean = folds.iter().map(|f| f.accuracy).sum::<f64>() / n;
    let std = if folds.len() > 1 {
        (folds.iter().map(|f| (f.accuracy - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let per_user: Vec<UserScore> = per_user.into_values().collect();
    Ok(AttackReport {
        attack: String::new(),
        strategy: String::new(),
        target: String::new(),
        local_epochs: 0,
        mean,
        std,
        correct: per_user.iter().map(|u| u.correct).sum(),
        tested: per_user.iter().map(|u| u.tested).sum(),
        folds,
        per_user,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(groups: u32, per_group: usize) -> Vec<AttackSample> {
        (0..groups)
            .flat_map(|g| {
                (0..per_group).map(move |i| {
                    let label = (g % 2) as u8;
                    AttackSample {
                        features: vec![label as f64 * 10.0 + i as f64 * 0.1, g as f64],
                        label,
                        client: g,
                        group: g,
                    }
                })
            })
            .collect()
    }

    #[test]
    fn perfect_classifier() {
        let r = attack_cv(&separable(10, 3), 3, 5, ForestParams::new(15, 5, 0), Execution::Sequential).unwrap();
        assert_eq!(r.folds.len(), 15);
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.std, 0.0);
        assert_eq!(r.per_user.len(), 10);
        assert!(r.per_user.iter().all(|u| u.tested == 9 && u.correct == 9));
    }

    #[test]
    fn folds_partition_groups_without_leakage() {
        let s = separable(12, 2);
        for rep in 0..5 {
            let a = group_folds(&s, 5, 7, rep).unwrap();
            assert_eq!(a.len(), 12);
            for fold in 0..5 {
                let n = a.values().filter(|&&f| f == fold).count();
                assert!((2..=3).contains(&n));
                // Both classes appear outside every test fold.
                let train_labels: Vec<u8> = s.iter().filter(|x| a[&x.group] != fold).map(|x| x.label).collect();
                assert!(train_labels.contains(&0) && train_labels.contains(&1));
            }
        }
    }

    #[test]
    fn eighty_twenty_split() {
        let a = group_folds(&separable(10, 1), 5, 1, 0).unwrap();
        for fold in 0..5 {
            assert_eq!(a.values().filter(|&&f| f == fold).count(), 2);
        }
    }

    #[test]
    fn too_few_groups() {
        assert!(matches!(
            attack_cv(&separable(4, 3), 1, 5, ForestParams::new(5, 3, 0), Execution::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn report_is_deterministic() {
        let mut s = separable(10, 2);
        s.iter_mut().for_each(|x| x.features[0] = (x.client as f64 * 1.7).sin());
        let p = ForestParams::new(20, 4, 3);
        let a = attack_cv(&s, 2, 5, p, Execution::Sequential).unwrap();
        let b = attack_cv(&s, 2, 5, p, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
