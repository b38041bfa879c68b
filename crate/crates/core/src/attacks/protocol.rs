//! The two honest-but-curious server experiments.
//!
//! Attribute inference: every client trains on its 80% split, the server
//! averages only the positive-class updates, broadcasts that biased model,
//! and every client fine-tunes it on its remaining 20%. The attacker sees
//! the fine-tuned updates.
//!
//! Membership inference: a seeded half of the users train one round on
//! their 80% split and only their updates are averaged. Everyone then
//! fine-tunes the result on their 20% split and the attacker tells members
//! from the rest.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attacks::canonical::{canonicalize, canonicalize_delta};
use crate::attacks::cv::{attack_cv, AttackReport, AttackSample};
use crate::attacks::forest::ForestParams;
use crate::config::{FeatureMode, Population, RunConfig};
use crate::data::{bmi_label, make_folds, BmiClass, Gender};
use crate::error::{Error, Result};
use crate::federation::{aggregate, client_round_epochs, prepare_clients, DataSplit};
use crate::model::{init_model, Strategy, UpdateRecord};
use crate::seed::{derive_seed, rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Gender,
    Bmi,
    Membership,
}

impl AttackKind {
    pub const ALL: [AttackKind; 3] = [AttackKind::Gender, AttackKind::Bmi, AttackKind::Membership];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Gender => "gender",
            AttackKind::Bmi => "bmi",
            AttackKind::Membership => "membership",
        }
    }

    /// What label 1 means.
    pub fn positive_class(self) -> &'static str {
        match self {
            AttackKind::Gender => "female",
            AttackKind::Bmi => "overweight",
            AttackKind::Membership => "member",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack {s:?} (gender, bmi, membership)")))
    }
}

/// Per-user labels for `kind`; membership draws a seeded half of the users.
fn labels(kind: AttackKind, pop: &Population, seed: u64) -> Result<Vec<u8>> {
    let labels: Vec<u8> = match kind {
        AttackKind::Gender => pop.profiles.iter().map(|p| u8::from(p.gender == Gender::Female)).collect(),
        AttackKind::Bmi => pop
            .profiles
            .iter()
            .map(|p| bmi_label(p).map(|c| u8::from(c == BmiClass::Overweight)))
            .collect::<Result<_>>()?,
        AttackKind::Membership => {
            let n = pop.profiles.len();
            if n < 4 {
                return Err(Error::Config(format!("membership inference needs at least 4 users, found {n}")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_for(seed, Stream::Members, &[]));
            let mut l = vec![0u8; n];
            order[..n / 2].iter().for_each(|&i| l[i] = 1);
            l
        }
    };
    for class in [0u8, 1] {
        if !labels.contains(&class) {
            return Err(Error::Config(format!(
                "{kind} attack needs users on both sides, none has label {class} ({} = 1)",
                kind.positive_class()
            )));
        }
    }
    Ok(labels)
}

/// Runs the protocol for every configured split and returns the attacker's
/// observations, one per user and split.
pub fn attack_samples(
    kind: AttackKind,
    pop: &Population,
    run: &RunConfig,
    strategy: Strategy,
    local_epochs: usize,
) -> Result<Vec<AttackSample>> {
    if local_epochs == 0 {
        return Err(Error::Config("attack local epochs must be at least 1".into()));
    }
    let mut exp = run.experiment(strategy);
    exp.training.local_epochs = local_epochs;
    exp.validate()?;
    let net = exp.architecture.network()?;
    let plan = make_folds(&pop.windows, 1, run.cv.folds, derive_seed(run.seed, Stream::Folds, &[1]))?;
    // One starting model for every split, so the splits differ only in data.
    let init = init_model(&exp.architecture, strategy, derive_seed(run.seed, Stream::Protocol, &[]))?;
    // Members stay members across splits, so each user keeps one label.
    let labels = labels(kind, pop, run.seed)?;
    let mut samples = Vec::new();
    for split in 0..run.attack.protocol_splits {
        let seed = derive_seed(run.seed, Stream::Protocol, &[split as u64 + 1]);
        exp.seed = seed;
        let mut clients = prepare_clients(&pop.profiles, &pop.windows, &plan, 0, split, seed)?;
        if strategy == Strategy::Fedper {
            clients.iter_mut().for_each(|c| c.private = Some(init.private()));
        }
        let start = init.shared();
        let first: Vec<UpdateRecord> = exp
            .execution
            .map_mut(&mut clients, |_, c| {
                client_round_epochs(&net, &start, c, &exp, 1, local_epochs, DataSplit::Train)
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let selected: Vec<UpdateRecord> = first
            .into_iter()
            .zip(&labels)
            .filter(|(_, &l)| l == 1)
            .map(|(r, _)| r)
            .collect();
        let broadcast = aggregate(&selected)?;
        let tuned: Vec<UpdateRecord> = exp
            .execution
            .map_mut(&mut clients, |_, c| {
                client_round_epochs(&net, &broadcast, c, &exp, 2, local_epochs, DataSplit::Test)
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let features = exp
            .execution
            .map(&tuned, |_, r| match run.attack.features {
                FeatureMode::Raw => canonicalize(&net, r),
                FeatureMode::Delta => canonicalize_delta(&net, r, &broadcast),
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for ((f, r), &label) in features.into_iter().zip(&tuned).zip(&labels) {
            samples.push(AttackSample {
                features: f,
                label,
                client: r.client(),
                group: r.client(),
            });
        }
    }
    Ok(samples)
}

/// Runs the protocol and scores the attacker with repeated group k-fold CV.
pub fn run_attack(
    kind: AttackKind,
    pop: &Population,
    run: &RunConfig,
    strategy: Strategy,
    local_epochs: usize,
) -> Result<AttackReport> {
    let samples = attack_samples(kind, pop, run, strategy, local_epochs)?;
    score(kind, &samples, run, strategy, local_epochs)
}

/// Cross-validated forest accuracy on already collected samples.
pub fn score(
    kind: AttackKind,
    samples: &[AttackSample],
    run: &RunConfig,
    strategy: Strategy,
    local_epochs: usize,
) -> Result<AttackReport> {
    let a = &run.attack;
    let forest = ForestParams::new(a.n_trees, a.max_depth, derive_seed(run.seed, Stream::AttackCv, &[]));
    let mut report = attack_cv(samples, a.cv_repetitions, a.cv_folds, forest, run.execution)?;
    report.attack = if kind == AttackKind::Membership { "membership" } else { "attribute" }.into();
    report.strategy = strategy.name().into();
    report.target = kind.positive_class().into();
    report.local_epochs = local_epochs;
    Ok(report)
}

pub fn attribute_attack(
    pop: &Population,
    run: &RunConfig,
    strategy: Strategy,
    target: AttackKind,
    local_epochs: usize,
) -> Result<AttackReport> {
    if target == AttackKind::Membership {
        return Err(Error::Config("attribute attacks target gender or bmi".into()));
    }
    run_attack(target, pop, run, strategy, local_epochs)
}

pub fn membership_attack(pop: &Population, run: &RunConfig, strategy: Strategy, local_epochs: usize) -> Result<AttackReport> {
    run_attack(AttackKind::Membership, pop, run, strategy, local_epochs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DataConfig;

    fn smoke() -> (RunConfig, Population) {
        let run = RunConfig::smoke();
        let pop = run.data.load().unwrap();
        (run, pop)
    }

    #[test]
    fn samples_cover_every_user_once_per_split() {
        let (run, pop) = smoke();
        let s = attack_samples(AttackKind::Gender, &pop, &run, Strategy::Vanilla, 1).unwrap();
        assert_eq!(s.len(), pop.profiles.len() * run.attack.protocol_splits);
        let len = s[0].features.len();
        assert!(s.iter().all(|x| x.features.len() == len));
        let net = run.architecture.network().unwrap();
        let full: usize = net.layers().iter().map(|l| l.weight_shape().iter().product::<usize>() + l.units()).sum();
        assert_eq!(len, full);
    }

    #[test]
    fn fedper_features_exclude_dense_layers() {
        let (run, pop) = smoke();
        let s = attack_samples(AttackKind::Bmi, &pop, &run, Strategy::Fedper, 1).unwrap();
        let net = run.architecture.network().unwrap();
        let conv: usize = net.layers()[..2]
            .iter()
            .map(|l| l.weight_shape().iter().product::<usize>() + l.units())
            .sum();
        assert!(s.iter().all(|x| x.features.len() == conv));
    }

    #[test]
    fn membership_is_half_and_seeded() {
        let (run, pop) = smoke();
        let a = labels(AttackKind::Membership, &pop, 3).unwrap();
        assert_eq!(a.iter().filter(|&&l| l == 1).count(), pop.profiles.len() / 2);
        assert_eq!(a, labels(AttackKind::Membership, &pop, 3).unwrap());
        assert_ne!(a, labels(AttackKind::Membership, &pop, 4).unwrap());
        let _ = run;
    }

    #[test]
    fn too_few_users_for_membership() {
        let mut run = RunConfig::smoke();
        if let DataConfig::Synthetic(s) = &mut run.data {
            s.n_users = 2;
        }
        let pop = run.data.load().unwrap();
        assert!(matches!(labels(AttackKind::Membership, &pop, 0), Err(Error::Config(_))));
    }

    #[test]
    fn one_sided_attribute_is_config_error() {
        let (_, mut pop) = smoke();
        pop.profiles.iter_mut().for_each(|p| p.gender = Gender::Male);
        assert!(matches!(labels(AttackKind::Gender, &pop, 0), Err(Error::Config(_))));
    }

    #[test]
    fn report_is_reproducible() {
        let (run, pop) = smoke();
        let a = run_attack(AttackKind::Gender, &pop, &run, Strategy::Ldp, 1).unwrap();
        let b = run_attack(AttackKind::Gender, &pop, &run, Strategy::Ldp, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.folds.iter().all(|f| (0.0..=1.0).contains(&f.accuracy)));
        assert_eq!(a.strategy, "ldp");
        assert_eq!(a.target, "female");
    }
}
