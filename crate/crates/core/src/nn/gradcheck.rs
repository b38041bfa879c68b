//! Central-difference gradient oracle.

use crate::error::{Error, Result};
use crate::nn::network::{Activation, Network, ParamSet};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of `|analytic - numeric| / max(1, |analytic|)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation moved some relu pre-activation across 0.
    pub skipped_at_kink: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

fn relu_pattern(net: &Network, params: &ParamSet, input: &Tensor) -> Result<(Vec<bool>, Vec<f64>)> {
    let trace = net.trace(params, input)?;
    let mut pattern = Vec::new();
    for (spec, z) in net.layers().iter().zip(&trace.pre) {
        if spec.activation == Activation::Relu {
            pattern.extend(z.iter().map(|&v| v > 0.0));
        }
    }
    let logits = trace.acts.last().cloned().unwrap_or_default();
    Ok((pattern, logits))
}

pub fn grad_check(
    net: &Network,
    params: &ParamSet,
    input: &Tensor,
    label: usize,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::Input(format!("finite-difference step {step} outside (0, 1e-2]")));
    }
    let (_, analytic) = net.backward(params, input, label)?;
    let (base_pattern, _) = relu_pattern(net, params, input)?;

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_at_kink: 0,
        tol,
    };
    let eval = |probe: &ParamSet| -> Result<(f64, bool)> {
        let (pattern, logits) = relu_pattern(net, probe, input)?;
        let loss = crate::nn::softmax_cross_entropy(&logits, label)?.0;
        Ok((loss, pattern == base_pattern))
    };

    for li in 0..params.layers().len() {
        for which in 0..2 {
            let n = if which == 0 {
                params.layers()[li].weight.len()
            } else {
                params.layers()[li].bias.len()
            };
            for j in 0..n {
                let original = coord(&probe, li, which, j);
                *coord_mut(&mut probe, li, which, j) = original + step;
                let (plus, same_plus) = eval(&probe)?;
                *coord_mut(&mut probe, li, which, j) = original - step;
                let (minus, same_minus) = eval(&probe)?;
                *coord_mut(&mut probe, li, which, j) = original;
                if !(same_plus && same_minus) {
                    report.skipped_at_kink += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * step);
                let a = if which == 0 {
                    analytic.layers()[li].weight.data()[j]
                } else {
                    analytic.layers()[li].bias.data()[j]
                };
                let rel = (a - numeric).abs() / a.abs().max(1.0);
                report.max_rel_error = report.max_rel_error.max(rel);
                report.checked += 1;
            }
        }
    }
    Ok(report)
}

fn coord(p: &ParamSet, layer: usize, which: usize, j: usize) -> f64 {
    let l = &p.layers()[layer];
    if which == 0 {
        l.weight.data()[j]
    } else {
        l.bias.data()[j]
    }
}

fn coord_mut(p: &mut ParamSet, layer: usize, which: usize, j: usize) -> &mut f64 {
    let l = &mut p.layers_mut()[layer];
    if which == 0 {
        &mut l.weight.data_mut()[j]
    } else {
        &mut l.bias.data_mut()[j]
    }
}
