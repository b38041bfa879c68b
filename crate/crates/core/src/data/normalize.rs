use serde::{Deserialize, Serialize};

use crate::data::window::{LabeledWindow, CHANNELS};
use crate::error::{Error, Result};

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population statistics over every sample of every window. A channel
    /// with zero variance gets std 1 and a warning.
    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a LabeledWindow>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; CHANNELS];
        let mut sq = [0.0; CHANNELS];
        let mut seen: Vec<&LabeledWindow> = Vec::new();
        for w in windows {
            let t = w.signal.shape()[1];
            for c in 0..CHANNELS {
                sum[c] += w.signal.data()[c * t..(c + 1) * t].iter().sum::<f64>();
            }
            count += t;
            seen.push(w);
        }
        if count == 0 {
            return Err(Error::Input("cannot compute normalization statistics of no windows".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        for w in &seen {
            let t = w.signal.shape()[1];
            for c in 0..CHANNELS {
                sq[c] += w.signal.data()[c * t..(c + 1) * t]
                    .iter()
                    .map(|v| (v - mean[c]).powi(2))
                    .sum::<f64>();
            }
        }
        let std = sq
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let var = s / count as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    log::warn!("channel {c} has zero variance; clamping to 1");
                    1.0
                }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn apply(&self, window: &mut LabeledWindow) {
        let t = window.signal.shape()[1];
        let data = window.signal.data_mut();
        for c in 0..CHANNELS {
            for v in &mut data[c * t..(c + 1) * t] {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
    }
}

/// Standardizes `windows` with statistics taken from `train` only.
pub fn normalize(windows: &[LabeledWindow], train: &[LabeledWindow]) -> Result<Vec<LabeledWindow>> {
    let stats = NormStats::from_windows(train)?;
    Ok(windows
        .iter()
        .cloned()
        .map(|mut w| {
            stats.apply(&mut w);
            w
        })
        .collect())
}
