//! Round-based orchestration of Vanilla FedAvg, FedPer and LDP.

mod aggregate;
pub mod artifacts;
mod client;
mod ldp;
mod run;

pub use crate::model::UpdateRecord;
pub use aggregate::aggregate;
pub(crate) use client::{client_round_epochs, DataSplit};
pub use client::{assemble, client_round, prepare_clients, ClientState};
pub use ldp::apply_ldp_noise;
pub use run::{
    check_early_stop, run_training, run_training_with, EarlyStop, RoundEntry, RoundLog, RunObserver, TrainingOutcome,
};
