use serde::{Deserialize, Serialize};

use crate::data::{Activity, CHANNELS};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, Network, ParamSet, Partition};
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Plain federated averaging of the whole model.
    Vanilla,
    /// Convolutional layers are averaged, dense layers stay on the device.
    Fedper,
    /// Vanilla with Gaussian noise on every transmitted update.
    Ldp,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Vanilla, Strategy::Fedper, Strategy::Ldp];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::Fedper => "fedper",
            Strategy::Ldp => "ldp",
        }
    }

    pub fn partition(self, spec: &LayerSpec) -> Partition {
        match (self, spec.kind) {
            (Strategy::Fedper, crate::nn::LayerKind::Dense { .. }) => Partition::Private,
            _ => Partition::Shared,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?} (vanilla, fedper, ldp)")))
    }
}

/// Two valid convolutions followed by three dense layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarArchitecture {
    pub input_channels: usize,
    pub window_len: usize,
    pub conv_channels: [usize; 2],
    pub kernel_sizes: [usize; 2],
    pub hidden: [usize; 2],
    pub classes: usize,
}

impl Default for HarArchitecture {
    fn default() -> Self {
        HarArchitecture {
            input_channels: CHANNELS,
            window_len: 128,
            conv_channels: [16, 32],
            kernel_sizes: [5, 5],
            hidden: [64, 32],
            classes: Activity::COUNT,
        }
    }
}

pub const LAYER_NAMES: [&str; 5] = ["conv1", "conv2", "fc1", "fc2", "fc3"];

impl HarArchitecture {
    pub fn network(&self) -> Result<Network> {
        let [c1, c2] = self.conv_channels;
        let [k1, k2] = self.kernel_sizes;
        let [h1, h2] = self.hidden;
        if k1 + k2 > self.window_len + 1 {
            return Err(Error::Config(format!(
                "kernels {k1} and {k2} do not fit a window of {}",
                self.window_len
            )));
        }
        let t_out = self.window_len + 2 - k1 - k2;
        Network::new(
            self.input_channels,
            self.window_len,
            vec![
                LayerSpec::conv1d(LAYER_NAMES[0], self.input_channels, c1, k1, Activation::Relu),
                LayerSpec::conv1d(LAYER_NAMES[1], c1, c2, k2, Activation::Relu),
                LayerSpec::dense(LAYER_NAMES[2], c2 * t_out, h1, Activation::Relu),
                LayerSpec::dense(LAYER_NAMES[3], h1, h2, Activation::Relu),
                LayerSpec::dense(LAYER_NAMES[4], h2, self.classes, Activation::None),
            ],
        )
    }
}

/// Seeded initial parameters with partition tags for `strategy`.
pub fn init_model(arch: &HarArchitecture, strategy: Strategy, seed: u64) -> Result<ParamSet> {
    let net = arch.network()?;
    let mut rng = rng_for(seed, Stream::Init, &[]);
    let params = net.init_params(&mut rng);
    Ok(params.with_partitions(|i, _| strategy.partition(&net.layers()[i])))
}
