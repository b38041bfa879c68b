use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// 3-axis accelerometer followed by 3-axis gyroscope.
pub const CHANNELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Walking,
    Jogging,
    Upstairs,
    Downstairs,
    Sitting,
    Standing,
}

impl Activity {
    pub const ALL: [Activity; 6] = [
        Activity::Walking,
        Activity::Jogging,
        Activity::Upstairs,
        Activity::Downstairs,
        Activity::Sitting,
        Activity::Standing,
    ];
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Activity> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activity::Walking => "walking",
            Activity::Jogging => "jogging",
            Activity::Upstairs => "upstairs",
            Activity::Downstairs => "downstairs",
            Activity::Sitting => "sitting",
            Activity::Standing => "standing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    /// `[6, T]`
    pub signal: Tensor,
    pub activity: Activity,
    pub user: u32,
}

/// Cuts a `[6, N]` stream into `[6, len]` windows starting every `stride`
/// samples. Streams shorter than `len` produce no windows.
pub fn window_signal(stream: &Tensor, len: usize, stride: usize) -> Result<Vec<Tensor>> {
    let (c, n) = match stream.shape() {
        &[c, n] => (c, n),
        s => return Err(Error::Dimension(format!("stream must be [channels, samples], got {s:?}"))),
    };
    if len == 0 || stride == 0 {
        return Err(Error::Input("window length and stride must be positive".into()));
    }
    if n < len {
        return Ok(Vec::new());
    }
    let count = (n - len) / stride + 1;
    let data = stream.data();
    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            let mut w = Vec::with_capacity(c * len);
            for ch in 0..c {
                w.extend_from_slice(&data[ch * n + start..ch * n + start + len]);
            }
            Tensor::new(vec![c, len], w).expect("window shape")
        })
        .collect())
}
