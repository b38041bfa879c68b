//! Layer stacks, parameter sets and exact backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{conv1d_backward_kernel, conv1d_kernel, dense_backward_kernel, dense_kernel};
use crate::nn::loss::softmax_cross_entropy;
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv1d(name: &str, in_channels: usize, out_channels: usize, kernel_size: usize, activation: Activation) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
            },
            activation,
        }
    }

    pub fn dense(name: &str, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Dense { in_dim, out_dim },
            activation,
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
            } => vec![out_channels, in_channels, kernel_size],
            LayerKind::Dense { in_dim, out_dim } => vec![out_dim, in_dim],
        }
    }

    /// Number of output units (conv channels or dense neurons).
    pub fn units(&self) -> usize {
        match self.kind {
            LayerKind::Conv1d { out_channels, .. } => out_channels,
            LayerKind::Dense { out_dim, .. } => out_dim,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
            } => (in_channels * kernel_size, out_channels * kernel_size),
            LayerKind::Dense { in_dim, out_dim } => (in_dim, out_dim),
        }
    }
}

/// Shape of the activation flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Series { channels: usize, len: usize },
    Flat(usize),
}

impl Flow {
    fn size(self) -> usize {
        match self {
            Flow::Series { channels, len } => channels * len,
            Flow::Flat(n) => n,
        }
    }
}

/// A validated stack of layers applied to a `[channels, len]` input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    input_channels: usize,
    input_len: usize,
    layers: Vec<LayerSpec>,
    // Input flow of each layer, plus the final output flow.
    flows: Vec<Flow>,
}

impl Network {
    pub fn new(input_channels: usize, input_len: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let mut flow = Flow::Series {
            channels: input_channels,
            len: input_len,
        };
        let mut flows = vec![flow];
        for spec in &layers {
            flow = match (spec.kind, flow) {
                (
                    LayerKind::Conv1d {
                        in_channels,
                        out_channels,
                        kernel_size,
                    },
                    Flow::Series { channels, len },
                ) => {
                    if in_channels != channels {
                        return Err(Error::Config(format!(
                            "layer {}: in_channels {in_channels} but incoming channel axis is {channels}",
                            spec.name
                        )));
                    }
                    if kernel_size == 0 || kernel_size > len {
                        return Err(Error::Config(format!(
                            "layer {}: kernel {kernel_size} does not fit time axis {len}",
                            spec.name
                        )));
                    }
                    Flow::Series {
                        channels: out_channels,
                        len: len - kernel_size + 1,
                    }
                }
                (LayerKind::Conv1d { .. }, Flow::Flat(_)) => {
                    return Err(Error::Config(format!(
                        "layer {}: convolution after a dense layer",
                        spec.name
                    )))
                }
                (LayerKind::Dense { in_dim, out_dim }, f) => {
                    if in_dim != f.size() {
                        return Err(Error::Config(format!(
                            "layer {}: in_dim {in_dim} but incoming size is {}",
                            spec.name,
                            f.size()
                        )));
                    }
                    Flow::Flat(out_dim)
                }
            };
            if spec.units() == 0 {
                return Err(Error::Config(format!("layer {} has no units", spec.name)));
            }
            flows.push(flow);
        }
        Ok(Network {
            input_channels,
            input_len,
            layers,
            flows,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 2] {
        [self.input_channels, self.input_len]
    }

    pub fn output_dim(&self) -> usize {
        self.flows.last().map_or(0, |f| f.size())
    }

    /// Time length of the activation leaving layer `i` (1 for dense layers).
    pub fn output_len(&self, i: usize) -> usize {
        match self.flows[i + 1] {
            Flow::Series { len, .. } => len,
            Flow::Flat(_) => 1,
        }
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Glorot-uniform weights, zero biases, all layers tagged shared.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let layers = self
            .layers
            .iter()
            .map(|spec| {
                let (fan_in, fan_out) = spec.fans();
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let shape = spec.weight_shape();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
                LayerParams {
                    name: spec.name.clone(),
                    partition: Partition::Shared,
                    weight: Tensor::new(shape, data).expect("shape from spec"),
                    bias: Tensor::zeros(vec![spec.units()]),
                }
            })
            .collect();
        ParamSet { layers }
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        if params.layers.len() != self.layers.len() {
            return Err(Error::Dimension(format!(
                "network has {} layers, parameter set has {}",
                self.layers.len(),
                params.layers.len()
            )));
        }
        for (spec, p) in self.layers.iter().zip(&params.layers) {
            if spec.name != p.name {
                return Err(Error::Dimension(format!(
                    "layer order mismatch: expected {}, found {}",
                    spec.name, p.name
                )));
            }
            p.weight.check_shape(&spec.weight_shape(), &format!("{} weight", spec.name))?;
            p.bias.check_shape(&[spec.units()], &format!("{} bias", spec.name))?;
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        input.check_shape(&[self.input_channels, self.input_len], "network input [channels, time]")
    }

    /// Forward pass returning the activation trace needed by backprop.
    pub(crate) fn trace(&self, params: &ParamSet, input: &Tensor) -> Result<Trace> {
        self.check_input(input)?;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        acts.push(input.data().to_vec());
        for (i, (spec, p)) in self.layers.iter().zip(&params.layers).enumerate() {
            let x = &acts[i];
            let mut z = vec![0.0; self.flows[i + 1].size()];
            match spec.kind {
                LayerKind::Conv1d {
                    in_channels,
                    out_channels,
                    kernel_size,
                } => {
                    let t = x.len() / in_channels;
                    conv1d_kernel(x, in_channels, t, p.weight.data(), out_channels, kernel_size, p.bias.data(), &mut z);
                }
                LayerKind::Dense { out_dim, .. } => {
                    dense_kernel(x, p.weight.data(), out_dim, p.bias.data(), &mut z);
                }
            }
            let a = match spec.activation {
                Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                Activation::None => z.clone(),
            };
            pre.push(z);
            acts.push(a);
        }
        Ok(Trace { acts, pre })
    }

    pub fn logits(&self, params: &ParamSet, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.trace(params, input)?.acts.pop().unwrap_or_default())
    }

    pub fn loss(&self, params: &ParamSet, input: &Tensor, label: usize) -> Result<f64> {
        let logits = self.logits(params, input)?;
        Ok(softmax_cross_entropy(&logits, label)?.0)
    }

    /// Loss and exact gradient for one example.
    pub fn backward(&self, params: &ParamSet, input: &Tensor, label: usize) -> Result<(f64, GradientSet)> {
        self.check_params(params)?;
        let mut grads = GradientSet::zeros_like(params);
        let loss = self.accumulate(params, input, label, &mut grads)?;
        Ok((loss, grads))
    }

    /// Mean loss and mean gradient over a mini-batch.
    pub fn batch_gradient(&self, params: &ParamSet, batch: &[(&Tensor, usize)]) -> Result<(f64, GradientSet)> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        self.check_params(params)?;
        let mut grads = GradientSet::zeros_like(params);
        let mut loss = 0.0;
        for &(x, y) in batch {
            loss += self.accumulate(params, x, y, &mut grads)?;
        }
        let scale = 1.0 / batch.len() as f64;
        grads.scale(scale);
        Ok((loss * scale, grads))
    }

    pub(crate) fn accumulate(
        &self,
        params: &ParamSet,
        input: &Tensor,
        label: usize,
        grads: &mut GradientSet,
    ) -> Result<f64> {
        let trace = self.trace(params, input)?;
        let logits = trace.acts.last().expect("at least one layer");
        let (loss, mut delta) = softmax_cross_entropy(logits, label)?;
        for i in (0..self.layers.len()).rev() {
            let spec = &self.layers[i];
            if spec.activation == Activation::Relu {
                for (d, &z) in delta.iter_mut().zip(&trace.pre[i]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &trace.acts[i];
            let p = &params.layers[i];
            let g = &mut grads.layers[i];
            let mut dx = if i > 0 { Some(vec![0.0; x.len()]) } else { None };
            match spec.kind {
                LayerKind::Conv1d {
                    in_channels,
                    out_channels,
                    kernel_size,
                } => conv1d_backward_kernel(
                    x,
                    in_channels,
                    x.len() / in_channels,
                    p.weight.data(),
                    out_channels,
                    kernel_size,
                    &delta,
                    g.weight.data_mut(),
                    g.bias.data_mut(),
                    dx.as_deref_mut(),
                ),
                LayerKind::Dense { .. } => dense_backward_kernel(
                    x,
                    p.weight.data(),
                    &delta,
                    g.weight.data_mut(),
                    g.bias.data_mut(),
                    dx.as_deref_mut(),
                ),
            }
            if let Some(dx) = dx {
                delta = dx;
            }
        }
        Ok(loss)
    }
}

pub(crate) struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Shared,
    Private,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Shared => "shared",
            Partition::Private => "private",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub partition: Partition,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn coordinate_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Ordered per-layer parameters with their shared/private partition tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    layers: Vec<LayerParams>,
}

impl ParamSet {
    pub fn new(layers: Vec<LayerParams>) -> Self {
        ParamSet { layers }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn coordinate_count(&self) -> usize {
        self.layers.iter().map(LayerParams::coordinate_count).sum()
    }

    /// Every coordinate, layer by layer, weight before bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.coordinate_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.is_finite() && l.bias.is_finite())
    }

    pub fn with_partitions(mut self, tag: impl Fn(usize, &str) -> Partition) -> Self {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.partition = tag(i, &l.name);
        }
        self
    }

    /// Only the shared-tagged layers, in order.
    pub fn shared(&self) -> ParamSet {
        self.filter(Partition::Shared)
    }

    pub fn private(&self) -> ParamSet {
        self.filter(Partition::Private)
    }

    fn filter(&self, p: Partition) -> ParamSet {
        ParamSet {
            layers: self.layers.iter().filter(|l| l.partition == p).cloned().collect(),
        }
    }

    /// Overwrites layers by name with those in `other`. Every layer of
    /// `other` must exist here with the same shapes and partition tag.
    pub fn overwrite(&mut self, other: &ParamSet) -> Result<()> {
        for src in &other.layers {
            let dst = self
                .layers
                .iter_mut()
                .find(|l| l.name == src.name)
                .ok_or_else(|| Error::Protocol(format!("unknown layer {}", src.name)))?;
            if dst.partition != src.partition {
                return Err(Error::Protocol(format!(
                    "layer {} is {} locally but {} in the incoming parameters",
                    src.name,
                    dst.partition.as_str(),
                    src.partition.as_str()
                )));
            }
            if !dst.weight.same_shape(&src.weight) || !dst.bias.same_shape(&src.bias) {
                return Err(Error::Protocol(format!("shape mismatch on layer {}", src.name)));
            }
            dst.weight = src.weight.clone();
            dst.bias = src.bias.clone();
        }
        Ok(())
    }

    /// Same layer names, tags and shapes.
    pub fn congruent(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.name == b.name
                    && a.partition == b.partition
                    && a.weight.same_shape(&b.weight)
                    && a.bias.same_shape(&b.bias)
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// One gradient tensor per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<LayerGrads>,
}

impl GradientSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradientSet {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Tensor::zeros(l.weight.shape().to_vec()),
                    bias: Tensor::zeros(l.bias.shape().to_vec()),
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerGrads] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerGrads] {
        &mut self.layers
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    pub(crate) fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight.data_mut().iter_mut().for_each(|v| *v *= s);
            l.bias.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    fn check_congruent(&self, params: &ParamSet) -> Result<()> {
        if self.layers.len() != params.layers.len() {
            return Err(Error::Dimension(format!(
                "gradient has {} layers, parameters have {}",
                self.layers.len(),
                params.layers.len()
            )));
        }
        for (g, p) in self.layers.iter().zip(&params.layers) {
            if !g.weight.same_shape(&p.weight) || !g.bias.same_shape(&p.bias) {
                return Err(Error::Dimension(format!("gradient shape mismatch on layer {}", p.name)));
            }
        }
        Ok(())
    }
}

/// `p' = p - eta * g` on every coordinate.
pub fn sgd_step(params: &ParamSet, grads: &GradientSet, eta: f64) -> Result<ParamSet> {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grads, eta)?;
    Ok(out)
}

pub fn sgd_step_in_place(params: &mut ParamSet, grads: &GradientSet, eta: f64) -> Result<()> {
    grads.check_congruent(params)?;
    if !eta.is_finite() {
        return Err(Error::Input(format!("learning rate {eta} is not finite")));
    }
    for (p, g) in params.layers.iter_mut().zip(&grads.layers) {
        for (w, d) in p.weight.data_mut().iter_mut().zip(g.weight.data()) {
            *w -= eta * d;
        }
        for (b, d) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
            *b -= eta * d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_dense(w: Vec<f64>, b: Vec<f64>, in_dim: usize, out_dim: usize) -> (Network, ParamSet) {
        let net = Network::new(1, in_dim, vec![LayerSpec::dense("fc", in_dim, out_dim, Activation::None)]).unwrap();
        let params = ParamSet::new(vec![LayerParams {
            name: "fc".into(),
            partition: Partition::Shared,
            weight: Tensor::new(vec![out_dim, in_dim], w).unwrap(),
            bias: Tensor::vector(b),
        }]);
        (net, params)
    }

    #[test]
    fn zero_weight_dense_layer_gradient() {
        let (net, params) = single_dense(vec![0.0; 6], vec![0.0, 0.0], 3, 2);
        let x = Tensor::new(vec![1, 3], vec![0.3, -1.0, 2.0]).unwrap();
        let (loss, g) = net.backward(&params, &x, 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g.layers()[0].bias.data(), &[-0.5, 0.5]);
        assert_eq!(g.layers()[0].weight.data(), &[-0.15, 0.5, -1.0, 0.15, -0.5, 1.0]);
    }

    #[test]
    fn duplicated_example_batch_equals_single() {
        let net = Network::new(
            2,
            6,
            vec![
                LayerSpec::conv1d("c", 2, 3, 3, Activation::Relu),
                LayerSpec::dense("d", 12, 4, Activation::None),
            ],
        )
        .unwrap();
        let params = net.init_params(&mut ChaCha8Rng::seed_from_u64(3));
        let x = Tensor::new(vec![2, 6], (0..12).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let (l1, g1) = net.backward(&params, &x, 2).unwrap();
        let (l2, g2) = net.batch_gradient(&params, &[(&x, 2), (&x, 2)]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn composition_errors_are_reported() {
        let err = Network::new(
            6,
            10,
            vec![
                LayerSpec::conv1d("c1", 6, 4, 5, Activation::Relu),
                LayerSpec::dense("fc", 25, 2, Activation::None),
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("incoming size is 24"), "{err}");
        assert!(Network::new(3, 10, vec![LayerSpec::conv1d("c1", 6, 4, 5, Activation::Relu)]).is_err());
        assert!(Network::new(6, 4, vec![LayerSpec::conv1d("c1", 6, 4, 5, Activation::Relu)]).is_err());
    }

    #[test]
    fn sgd_examples() {
        let (_, p) = single_dense(vec![1.0], vec![0.0], 1, 1);
        let mut g = GradientSet::zeros_like(&p);
        g.layers_mut()[0].weight.data_mut()[0] = 1.0;
        let out = sgd_step(&p, &g, 0.001).unwrap();
        assert_eq!(out.layers()[0].weight.data(), &[0.999]);

        let zero = GradientSet::zeros_like(&p);
        assert_eq!(sgd_step(&p, &zero, 0.7).unwrap(), p);

        let (_, p) = single_dense(vec![2.0, 4.0], vec![0.0], 2, 1);
        let mut g = GradientSet::zeros_like(&p);
        g.layers_mut()[0].weight.data_mut().copy_from_slice(&[1.0, -1.0]);
        let out = sgd_step(&p, &g, 0.5).unwrap();
        assert_eq!(out.layers()[0].weight.data(), &[1.5, 4.5]);
    }

    #[test]
    fn sgd_shape_mismatch() {
        let (_, p) = single_dense(vec![1.0, 2.0], vec![0.0], 2, 1);
        let (_, q) = single_dense(vec![1.0], vec![0.0], 1, 1);
        let g = GradientSet::zeros_like(&q);
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::Dimension(_))));
    }

    #[test]
    fn sgd_forward_then_backward_restores() {
        let net = Network::new(1, 8, vec![LayerSpec::dense("fc", 8, 3, Activation::None)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = net.init_params(&mut rng);
        let x = Tensor::new(vec![1, 8], (0..8).map(|i| i as f64 - 3.5).collect()).unwrap();
        let (_, g) = net.backward(&p, &x, 1).unwrap();
        let back = sgd_step(&sgd_step(&p, &g, 0.37).unwrap(), &g, -0.37).unwrap();
        for (a, b) in p.flatten().iter().zip(back.flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let net = Network::new(6, 20, vec![LayerSpec::conv1d("c", 6, 4, 5, Activation::Relu)]).unwrap();
        let p = net.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        let limit = (6.0f64 / (30 + 20) as f64).sqrt();
        assert!(p.layers()[0].weight.data().iter().all(|w| w.abs() <= limit));
        assert!(p.layers()[0].bias.data().iter().all(|&b| b == 0.0));
    }
}
