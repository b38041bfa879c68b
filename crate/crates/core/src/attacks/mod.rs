//! Attribute and membership inference from what the server observes.

mod canonical;
mod cv;
mod forest;
pub mod output;
mod protocol;

pub use canonical::{canonicalize, canonicalize_delta};
pub use cv::{attack_cv, group_folds, AttackReport, AttackSample, FoldAccuracy, UserScore};
pub use forest::{rf_predict, rf_train, ForestParams, RandomForest, Tree};
pub use protocol::{attack_samples, attribute_attack, membership_attack, run_attack, score, AttackKind};
