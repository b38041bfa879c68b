use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Activity, LabeledWindow};
use crate::error::{Error, Result};
use crate::nn::{sgd_step_in_place, softmax_cross_entropy, Network, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    /// Variance of Gaussian noise added to every mini-batch gradient; 0 disables.
    pub step_noise_sigma2: f64,
}

impl TrainOptions {
    pub fn new(epochs: usize, eta: f64, batch_size: usize) -> Self {
        TrainOptions {
            epochs,
            eta,
            batch_size,
            step_noise_sigma2: 0.0,
        }
    }
}

/// Mini-batch SGD over `data` for `opts.epochs` shuffled passes.
///
/// The shuffling (and optional gradient noise) is drawn from `rng`, so two
/// consecutive calls with the same generator equal one call with the summed
/// epoch count.
pub fn local_train<R: Rng + ?Sized>(
    net: &Network,
    params: &ParamSet,
    data: &[LabeledWindow],
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<ParamSet> {
    if data.is_empty() {
        return Err(Error::Input("local training needs at least one window".into()));
    }
    if opts.epochs == 0 || opts.batch_size == 0 {
        return Err(Error::Input("epochs and batch size must be at least 1".into()));
    }
    net.check_params(params)?;
    let noise = if opts.step_noise_sigma2 > 0.0 {
        Some(Normal::new(0.0, opts.step_noise_sigma2.sqrt()).map_err(|e| Error::Input(e.to_string()))?)
    } else {
        None
    };
    let mut params = params.clone();
    let mut order: Vec<usize> = vec![0; data.len()];
    let mut batch = Vec::with_capacity(opts.batch_size);
    for _ in 0..opts.epochs {
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
        order.shuffle(rng);
        for chunk in order.chunks(opts.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| (&data[i].signal, data[i].activity.index())));
            let (_, mut grads) = net.batch_gradient(&params, &batch)?;
            if let Some(noise) = &noise {
                for l in grads.layers_mut() {
                    for v in l.weight.data_mut().iter_mut().chain(l.bias.data_mut()) {
                        *v += noise.sample(rng);
                    }
                }
            }
            sgd_step_in_place(&mut params, &grads, opts.eta)?;
        }
        if !params.is_finite() {
            return Err(Error::Numeric("local training produced non-finite parameters".into()));
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
}

/// Accuracy, mean cross-entropy and confusion matrix; the prediction is the
/// arg-max logit with ties going to the lowest class index.
pub fn evaluate(net: &Network, params: &ParamSet, data: &[LabeledWindow]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate on no windows".into()));
    }
    net.check_params(params)?;
    let classes = net.output_dim().max(Activity::COUNT);
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut loss = 0.0;
    for w in data {
        let logits = net.logits(params, &w.signal)?;
        let label = w.activity.index();
        loss += softmax_cross_entropy(&logits, label)?.0;
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        confusion[label][best] += 1;
    }
    let correct: u64 = (0..classes).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        mean_loss: loss / data.len() as f64,
        confusion,
    })
}
