//! Text serialization of parameter sets.
//!
//! ```text
//! fedpriv-params v1
//! <index>\t<layer>\t<partition>\tweight\t<d0>x<d1>x...\t<v0> <v1> ...
//! <index>\t<layer>\t<partition>\tbias\t<d0>\t<v0> <v1> ...
//! ```
//!
//! One line per tensor, layers in set order, weight before bias. Values are
//! row-major and printed in shortest round-trip form, so decoding recovers
//! every `f64` bit for bit. Downstream tooling relies on this ordering.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::network::{LayerParams, ParamSet, Partition};
use crate::nn::Tensor;

pub const PARAMS_HEADER: &str = "fedpriv-params v1";

pub fn encode_params(params: &ParamSet) -> String {
    let mut out = String::new();
    out.push_str(PARAMS_HEADER);
    out.push('\n');
    encode_layers(params, &mut out);
    out
}

pub fn decode_params(text: &str) -> Result<ParamSet> {
    let mut lines = text.lines();
    match lines.next() {
        Some(PARAMS_HEADER) => decode_layers(lines),
        other => Err(Error::Input(format!(
            "expected header {PARAMS_HEADER:?}, found {other:?}"
        ))),
    }
}

pub(crate) fn encode_layers(params: &ParamSet, out: &mut String) {
    for (i, layer) in params.layers().iter().enumerate() {
        for (kind, t) in [("weight", &layer.weight), ("bias", &layer.bias)] {
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = write!(out, "{i}\t{}\t{}\t{kind}\t{}\t", layer.name, layer.partition.as_str(), shape.join("x"));
            for (j, v) in t.data().iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
    }
}

pub(crate) fn decode_layers<'a>(lines: impl Iterator<Item = &'a str>) -> Result<ParamSet> {
    let mut layers: Vec<LayerParams> = Vec::new();
    let mut pending: Option<(String, Partition, Tensor)> = None;
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: &str| Error::Input(format!("parameter line {}: {m}", n + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(bad("expected 6 tab-separated fields"));
        }
        let index: usize = fields[0].parse().map_err(|_| bad("bad layer index"))?;
        let name = fields[1].to_string();
        let partition = match fields[2] {
            "shared" => Partition::Shared,
            "private" => Partition::Private,
            _ => return Err(bad("bad partition tag")),
        };
        let shape = fields[4]
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad shape"))?;
        let values = fields[5]
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad value"))?;
        let tensor = Tensor::new(shape, values)?;
        match (fields[3], pending.take()) {
            ("weight", None) => {
                if index != layers.len() {
                    return Err(bad("layer indices out of order"));
                }
                pending = Some((name, partition, tensor));
            }
            ("bias", Some((wname, wpart, weight))) if wname == name && wpart == partition => {
                layers.push(LayerParams {
                    name,
                    partition,
                    weight,
                    bias: tensor,
                });
            }
            _ => return Err(bad("expected weight line followed by matching bias line")),
        }
    }
    if pending.is_some() {
        return Err(Error::Input("weight line without bias".into()));
    }
    Ok(ParamSet::new(layers))
}
