//! The activity-recognition network, its shared/private split, and local
//! training and evaluation.

mod arch;
mod train;
mod update;

pub use arch::{init_model, HarArchitecture, Strategy};
pub use train::{evaluate, local_train, Evaluation, TrainOptions};
pub use update::{split_update, UpdateRecord, UPDATE_HEADER};
