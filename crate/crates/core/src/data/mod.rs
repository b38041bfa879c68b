//! Motion-sensor windows, user metadata, cross-validation folds and the
//! synthetic surrogate population.

mod folds;
mod loader;
mod normalize;
mod profile;
pub mod synth;
mod window;

pub use folds::{make_folds, FoldPlan};
pub use loader::{load_trials, DatasetLayout, LoadedDataset, SUBJECTS_FILE, TRIAL_COLUMNS};
pub use normalize::{normalize, NormStats};
pub use profile::{bmi_label, BmiClass, Gender, UserProfile};
pub use synth::{synth_generate, SynthConfig, SyntheticDataset};
pub use window::{window_signal, Activity, LabeledWindow, CHANNELS};
