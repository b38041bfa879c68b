use crate::error::{Error, Result};
use crate::nn::serialize::{decode_layers, encode_layers};
use crate::nn::{ParamSet, Partition};

pub const UPDATE_HEADER: &str = "fedpriv-update v1";

/// What one client transmits in one round: the full values of its
/// shared-tagged layers. Private layers cannot be put into a record; the
/// only constructors are [`split_update`] and [`UpdateRecord::decode`],
/// and both reject private tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    round: u32,
    client: u32,
    n_samples: usize,
    shared: ParamSet,
}

impl UpdateRecord {
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn client(&self) -> u32 {
        self.client
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn params(&self) -> &ParamSet {
        &self.shared
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.shared
    }

    pub fn with_origin(mut self, round: u32, client: u32, n_samples: usize) -> Self {
        self.round = round;
        self.client = client;
        self.n_samples = n_samples;
        self
    }

    pub fn encode(&self) -> String {
        let mut out = format!(
            "{UPDATE_HEADER}\nround\t{}\nclient\t{}\nsamples\t{}\n",
            self.round, self.client, self.n_samples
        );
        encode_layers(&self.shared, &mut out);
        out
    }

    pub fn decode(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(UPDATE_HEADER) {
            return Err(Error::Input(format!("missing {UPDATE_HEADER:?} header")));
        }
        let mut field = |name: &str| -> Result<u64> {
            let line = lines.next().unwrap_or("");
            match line.split_once('\t') {
                Some((k, v)) if k == name => v
                    .parse()
                    .map_err(|_| Error::Input(format!("bad {name} value {v:?}"))),
                _ => Err(Error::Input(format!("expected {name} line, found {line:?}"))),
            }
        };
        let round = field("round")? as u32;
        let client = field("client")? as u32;
        let n_samples = field("samples")? as usize;
        let shared = decode_layers(lines)?;
        if let Some(l) = shared.layers().iter().find(|l| l.partition != Partition::Shared) {
            return Err(Error::Protocol(format!("update record carries private layer {}", l.name)));
        }
        Ok(UpdateRecord {
            round,
            client,
            n_samples,
            shared,
        })
    }
}

/// Extracts the shared layers of `after` as the record a client sends.
pub fn split_update(before: &ParamSet, after: &ParamSet) -> Result<UpdateRecord> {
    if !before.congruent(after) {
        return Err(Error::Protocol(
            "parameters before and after local training differ in layers, tags or shapes".into(),
        ));
    }
    Ok(UpdateRecord {
        round: 0,
        client: 0,
        n_samples: 0,
        shared: after.shared(),
    })
}
