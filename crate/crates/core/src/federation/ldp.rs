use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::seed::{rng_for, Stream};

/// Adds independent `N(0, sigma2)` noise to every coordinate, drawn from a
/// generator seeded with `seed`. `sigma2 == 0` returns the input unchanged.
pub fn apply_ldp_noise(params: &ParamSet, sigma2: f64, seed: u64) -> Result<ParamSet> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Input(format!("noise variance {sigma2} must be finite and >= 0")));
    }
    let mut out = params.clone();
    if sigma2 == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("validated std");
    let mut rng = rng_for(seed, Stream::LdpNoise, &[]);
    for l in out.layers_mut() {
        for v in l.weight.data_mut().iter_mut().chain(l.bias.data_mut()) {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}
