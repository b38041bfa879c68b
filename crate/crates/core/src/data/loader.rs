//! Reader for motion-sensor trials stored as CSV.
//!
//! Directory layout:
//!
//! ```text
//! <root>/subjects.csv                   user_id,gender,weight_kg,height_m,age
//! <root>/<user>_<activity>_<trial>.csv  time,acc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z
//! ```
//!
//! The activity code in the file name is interpreted per [`DatasetLayout`];
//! trials of activities outside the six shared ones are skipped and counted.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::profile::{Gender, UserProfile};
use crate::data::window::{window_signal, Activity, LabeledWindow, CHANNELS};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const SUBJECTS_FILE: &str = "subjects.csv";
pub const TRIAL_COLUMNS: [&str; 7] = ["time", "acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"];
const SUBJECT_COLUMNS: [&str; 5] = ["user_id", "gender", "weight_kg", "height_m", "age"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetLayout {
    /// Codes `wlk jog ups dws sit std`.
    MotionSense,
    /// Codes `WAL JOG STU STN SIT STD`; the remaining MobiAct activities
    /// (falls, jumps, car entry/exit, ...) are skipped.
    MobiAct,
}

impl std::str::FromStr for DatasetLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motion_sense" => Ok(DatasetLayout::MotionSense),
            "mobi_act" => Ok(DatasetLayout::MobiAct),
            _ => Err(Error::Config(format!("unknown layout {s:?} (motion_sense, mobi_act)"))),
        }
    }
}

impl DatasetLayout {
    pub fn activity(self, code: &str) -> Option<Activity> {
        let code = code.trim();
        let named = Activity::ALL.into_iter().find(|a| a.name() == code);
        if named.is_some() {
            return named;
        }
        match self {
            DatasetLayout::MotionSense => match code {
                "wlk" => Some(Activity::Walking),
                "jog" => Some(Activity::Jogging),
                "ups" => Some(Activity::Upstairs),
                "dws" => Some(Activity::Downstairs),
                "sit" => Some(Activity::Sitting),
                "std" => Some(Activity::Standing),
                _ => None,
            },
            DatasetLayout::MobiAct => match code {
                "WAL" => Some(Activity::Walking),
                "JOG" => Some(Activity::Jogging),
                "STU" => Some(Activity::Upstairs),
                "STN" => Some(Activity::Downstairs),
                "SIT" => Some(Activity::Sitting),
                "STD" => Some(Activity::Standing),
                _ => None,
            },
        }
    }

    pub fn code(self, activity: Activity) -> &'static str {
        match (self, activity) {
            (DatasetLayout::MotionSense, Activity::Walking) => "wlk",
            (DatasetLayout::MotionSense, Activity::Jogging) => "jog",
            (DatasetLayout::MotionSense, Activity::Upstairs) => "ups",
            (DatasetLayout::MotionSense, Activity::Downstairs) => "dws",
            (DatasetLayout::MotionSense, Activity::Sitting) => "sit",
            (DatasetLayout::MotionSense, Activity::Standing) => "std",
            (DatasetLayout::MobiAct, Activity::Walking) => "WAL",
            (DatasetLayout::MobiAct, Activity::Jogging) => "JOG",
            (DatasetLayout::MobiAct, Activity::Upstairs) => "STU",
            (DatasetLayout::MobiAct, Activity::Downstairs) => "STN",
            (DatasetLayout::MobiAct, Activity::Sitting) => "SIT",
            (DatasetLayout::MobiAct, Activity::Standing) => "STD",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    /// Sorted by user id.
    pub profiles: Vec<UserProfile>,
    /// `windows[i]` belongs to `profiles[i]`.
    pub windows: Vec<Vec<LabeledWindow>>,
    /// Trials whose activity is not one of the six shared activities.
    pub skipped_trials: usize,
}

pub fn load_trials(root: &Path, layout: DatasetLayout, window_len: usize, stride: usize) -> Result<LoadedDataset> {
    if !root.is_dir() {
        return Err(Error::Input(format!("{} is not a directory", root.display())));
    }
    let subjects = root.join(SUBJECTS_FILE);
    if !subjects.is_file() {
        return Err(Error::Input(format!("{} has no {SUBJECTS_FILE}", root.display())));
    }
    let profiles = read_subjects(&subjects)?;

    let mut trials: BTreeMap<u32, Vec<(Activity, u32, PathBuf)>> = BTreeMap::new();
    let mut skipped = 0usize;
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if name == SUBJECTS_FILE || !name.ends_with(".csv") {
            continue;
        }
        let stem = &name[..name.len() - 4];
        let parts: Vec<&str> = stem.splitn(3, '_').collect();
        let [user, code, trial] = parts[..] else {
            return Err(Error::format(&path, "trial file name must be <user>_<activity>_<trial>.csv"));
        };
        let user: u32 = user
            .parse()
            .map_err(|_| Error::format(&path, "user id in file name is not an integer"))?;
        let trial: u32 = trial
            .parse()
            .map_err(|_| Error::format(&path, "trial number in file name is not an integer"))?;
        match layout.activity(code) {
            Some(a) => trials.entry(user).or_default().push((a, trial, path)),
            None => skipped += 1,
        }
    }
    if trials.is_empty() {
        return Err(Error::Input(format!("no usable trial files in {}", root.display())));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} trials with activities outside the shared six");
    }

    let mut out_profiles = Vec::new();
    let mut out_windows = Vec::new();
    for (user, mut files) in trials {
        let profile = profiles
            .iter()
            .find(|p| p.user == user)
            .cloned()
            .ok_or_else(|| Error::Input(format!("user {user} has trials but no row in {SUBJECTS_FILE}")))?;
        files.sort_by_key(|(a, t, _)| (*a, *t));
        let mut windows = Vec::new();
        for (activity, _, path) in files {
            let stream = read_trial(&path)?;
            for signal in window_signal(&stream, window_len, stride)? {
                windows.push(LabeledWindow { signal, activity, user });
            }
        }
        out_profiles.push(profile);
        out_windows.push(windows);
    }
    Ok(LoadedDataset {
        profiles: out_profiles,
        windows: out_windows,
        skipped_trials: skipped,
    })
}

fn column_positions(path: &Path, headers: &csv::StringRecord, wanted: &[&str]) -> Result<Vec<usize>> {
    wanted
        .iter()
        .map(|&col| {
            headers
                .iter()
                .position(|h| h.trim() == col)
                .ok_or_else(|| Error::format(path, format!("missing column {col}")))
        })
        .collect()
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

fn read_subjects(path: &Path) -> Result<Vec<UserProfile>> {
    let mut rdr = open(path)?;
    let headers = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    let pos = column_positions(path, &headers, &SUBJECT_COLUMNS)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let field = |i: usize| rec.get(pos[i]).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: {} is not a number", row + 1, SUBJECT_COLUMNS[i])))
        };
        let gender = match field(1).to_ascii_lowercase().as_str() {
            "female" | "f" | "0" => Gender::Female,
            "male" | "m" | "1" => Gender::Male,
            other => return Err(Error::format(path, format!("row {}: unknown gender {other:?}", row + 1))),
        };
        let profile = UserProfile {
            user: field(0)
                .parse()
                .map_err(|_| Error::format(path, format!("row {}: user_id is not an integer", row + 1)))?,
            gender,
            weight_kg: num(2)?,
            height_m: num(3)?,
            age: num(4)?,
        };
        profile.validate()?;
        out.push(profile);
    }
    Ok(out)
}

fn read_trial(path: &Path) -> Result<Tensor> {
    let mut rdr = open(path)?;
    let headers = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    let pos = column_positions(path, &headers, &TRIAL_COLUMNS)?;
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); CHANNELS];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        for c in 0..CHANNELS {
            let v: f64 = rec.get(pos[c + 1]).unwrap_or("").parse().map_err(|_| {
                Error::format(path, format!("row {}: {} is not a number", row + 1, TRIAL_COLUMNS[c + 1]))
            })?;
            channels[c].push(v);
        }
    }
    let n = channels[0].len();
    if n == 0 {
        return Err(Error::format(path, "trial has no samples"));
    }
    Tensor::new(vec![CHANNELS, n], channels.concat())
}
