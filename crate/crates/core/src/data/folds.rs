use rand::seq::SliceRandom;

use crate::data::window::{Activity, LabeledWindow};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

/// Repeated stratified k-fold assignment of each user's windows.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    k: usize,
    /// `fold_of[user][repetition][window]`
    fold_of: Vec<Vec<Vec<usize>>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn repetitions(&self) -> usize {
        self.fold_of.first().map_or(0, Vec::len)
    }

    pub fn users(&self) -> usize {
        self.fold_of.len()
    }

    pub fn test_indices(&self, user: usize, repetition: usize, fold: usize) -> Vec<usize> {
        self.indices(user, repetition, |f| f == fold)
    }

    pub fn train_indices(&self, user: usize, repetition: usize, fold: usize) -> Vec<usize> {
        self.indices(user, repetition, |f| f != fold)
    }

    fn indices(&self, user: usize, repetition: usize, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.fold_of[user][repetition]
            .iter()
            .enumerate()
            .filter(|(_, &f)| keep(f))
            .map(|(i, _)| i)
            .collect()
    }

    /// Splits a user's windows into (train, test) for one fold.
    pub fn split<T: Clone>(&self, user: usize, repetition: usize, fold: usize, items: &[T]) -> (Vec<T>, Vec<T>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (item, &f) in items.iter().zip(&self.fold_of[user][repetition]) {
            if f == fold {
                test.push(item.clone());
            } else {
                train.push(item.clone());
            }
        }
        (train, test)
    }
}

/// Per user and repetition: shuffle each activity's windows, then deal them
/// round-robin into `k` folds, continuing the dealing position across
/// activities so fold sizes differ by at most one.
pub fn make_folds(windows: &[Vec<LabeledWindow>], repetitions: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if repetitions == 0 {
        return Err(Error::Config("need at least one repetition".into()));
    }
    let mut fold_of = Vec::with_capacity(windows.len());
    for (u, ws) in windows.iter().enumerate() {
        if ws.len() < k {
            let id = ws.first().map_or(u as u32, |w| w.user);
            return Err(Error::Config(format!(
                "user {id} has {} windows, fewer than {k} folds",
                ws.len()
            )));
        }
        let mut per_rep = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let mut rng = rng_for(seed, Stream::Folds, &[u as u64, rep as u64]);
            let mut assignment = vec![0usize; ws.len()];
            let mut next = 0usize;
            for a in Activity::ALL {
                let mut idx: Vec<usize> = (0..ws.len()).filter(|&i| ws[i].activity == a).collect();
                idx.shuffle(&mut rng);
                for i in idx {
                    assignment[i] = next % k;
                    next += 1;
                }
            }
            per_rep.push(assignment);
        }
        fold_of.push(per_rep);
    }
    Ok(FoldPlan { k, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn user(n: usize, labels: impl Fn(usize) -> Activity) -> Vec<LabeledWindow> {
        (0..n)
            .map(|i| LabeledWindow {
                signal: Tensor::zeros(vec![6, 2]),
                activity: labels(i),
                user: 7,
            })
            .collect()
    }

    #[test]
    fn hundred_windows_in_five_folds_of_twenty() {
        let ws = vec![user(100, |i| Activity::from_index(i % 6).unwrap())];
        let plan = make_folds(&ws, 10, 5, 0).unwrap();
        for rep in 0..10 {
            let mut all: Vec<usize> = Vec::new();
            for f in 0..5 {
                let t = plan.test_indices(0, rep, f);
                assert_eq!(t.len(), 20);
                all.extend(t);
            }
            all.sort_unstable();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn folds_are_stratified_by_activity() {
        // Skewed: walking twice as frequent.
        let labels = |i: usize| match i % 7 {
            0 | 1 => Activity::Walking,
            r => Activity::from_index(r - 1).unwrap(),
        };
        let ws = vec![user(83, labels)];
        let plan = make_folds(&ws, 3, 5, 42).unwrap();
        for rep in 0..3 {
            for f in 0..5 {
                let test = plan.test_indices(0, rep, f);
                for a in Activity::ALL {
                    let global = ws[0].iter().filter(|w| w.activity == a).count() as f64;
                    let here = test.iter().filter(|&&i| ws[0][i].activity == a).count() as f64;
                    assert!((here - global / 5.0).abs() <= 1.0, "{a:?}: {here} vs {}", global / 5.0);
                }
            }
        }
    }

    #[test]
    fn too_few_windows_names_user() {
        let err = make_folds(&[user(4, |_| Activity::Sitting)], 1, 5, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("user 7"));
    }

    #[test]
    fn split_matches_indices() {
        let ws = vec![user(12, |i| Activity::from_index(i % 2).unwrap())];
        let plan = make_folds(&ws, 1, 3, 1).unwrap();
        let ids: Vec<usize> = (0..12).collect();
        let (train, test) = plan.split(0, 0, 1, &ids);
        assert_eq!(test, plan.test_indices(0, 0, 1));
        assert_eq!(train, plan.train_indices(0, 0, 1));
    }
}
