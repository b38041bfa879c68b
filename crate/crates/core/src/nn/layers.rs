//! Forward and backward kernels for the two layer types.
//!
//! The public `*_forward` functions check shapes and allocate; the slice
//! kernels underneath are what the network uses in its training loop.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Valid (unpadded), stride-1 1-D convolution.
///
/// `input` is `[C_in, T]`, `weights` is `[C_out, C_in, K]`, `bias` is `[C_out]`;
/// the result is `[C_out, T - K + 1]`.
pub fn conv1d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, t) = match input.shape() {
        &[c, t] => (c, t),
        s => {
            return Err(Error::Dimension(format!(
                "conv1d input must be [channels, time], got {s:?}"
            )))
        }
    };
    let (c_out, k) = match weights.shape() {
        &[o, c, k] if c == c_in => (o, k),
        &[_, c, _] => {
            return Err(Error::Dimension(format!(
                "conv1d weight in_channels axis is {c}, input channel axis is {c_in}"
            )))
        }
        s => {
            return Err(Error::Dimension(format!(
                "conv1d weights must be [out, in, kernel], got {s:?}"
            )))
        }
    };
    bias.check_shape(&[c_out], "conv1d bias (out_channels axis)")?;
    if t < k {
        return Err(Error::Dimension(format!(
            "conv1d time axis {t} shorter than kernel axis {k}"
        )));
    }
    let t_out = t - k + 1;
    let mut out = vec![0.0; c_out * t_out];
    conv1d_kernel(
        input.data(),
        c_in,
        t,
        weights.data(),
        c_out,
        k,
        bias.data(),
        &mut out,
    );
    Tensor::new(vec![c_out, t_out], out)
}

/// Affine map `W x + b` with `W` of shape `[D_out, D_in]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let d_in = input.len();
    let d_out = match weights.shape() {
        &[o, i] if i == d_in => o,
        &[_, i] => {
            return Err(Error::Dimension(format!(
                "dense weight in_dim axis is {i}, input length is {d_in}"
            )))
        }
        s => {
            return Err(Error::Dimension(format!(
                "dense weights must be [out, in], got {s:?}"
            )))
        }
    };
    bias.check_shape(&[d_out], "dense bias (out_dim axis)")?;
    let mut out = vec![0.0; d_out];
    dense_kernel(input.data(), weights.data(), d_out, bias.data(), &mut out);
    Ok(Tensor::vector(out))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_kernel(
    x: &[f64],
    c_in: usize,
    t: usize,
    w: &[f64],
    c_out: usize,
    k: usize,
    b: &[f64],
    out: &mut [f64],
) {
    let t_out = t - k + 1;
    for o in 0..c_out {
        let row = &mut out[o * t_out..(o + 1) * t_out];
        row.fill(b[o]);
        for c in 0..c_in {
            let xc = &x[c * t..(c + 1) * t];
            let wk = &w[(o * c_in + c) * k..(o * c_in + c + 1) * k];
            for (j, &wv) in wk.iter().enumerate() {
                for (r, &xv) in row.iter_mut().zip(&xc[j..j + t_out]) {
                    *r += wv * xv;
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and writes the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward_kernel(
    x: &[f64],
    c_in: usize,
    t: usize,
    w: &[f64],
    c_out: usize,
    k: usize,
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let t_out = t - k + 1;
    for o in 0..c_out {
        let g = &dout[o * t_out..(o + 1) * t_out];
        db[o] += g.iter().sum::<f64>();
        for c in 0..c_in {
            let xc = &x[c * t..(c + 1) * t];
            let base = (o * c_in + c) * k;
            for j in 0..k {
                dw[base + j] += g.iter().zip(&xc[j..j + t_out]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    if let Some(dx) = dx {
        dx.fill(0.0);
        for o in 0..c_out {
            let g = &dout[o * t_out..(o + 1) * t_out];
            for c in 0..c_in {
                let dxc = &mut dx[c * t..(c + 1) * t];
                let base = (o * c_in + c) * k;
                for j in 0..k {
                    let wv = w[base + j];
                    for (d, &gv) in dxc[j..j + t_out].iter_mut().zip(g) {
                        *d += wv * gv;
                    }
                }
            }
        }
    }
}

pub(crate) fn dense_kernel(x: &[f64], w: &[f64], d_out: usize, b: &[f64], out: &mut [f64]) {
    let d_in = x.len();
    for o in 0..d_out {
        let row = &w[o * d_in..(o + 1) * d_in];
        out[o] = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

pub(crate) fn dense_backward_kernel(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let d_in = x.len();
    for (o, &g) in dout.iter().enumerate() {
        db[o] += g;
        if g != 0.0 {
            for (d, &xv) in dw[o * d_in..(o + 1) * d_in].iter_mut().zip(x) {
                *d += g * xv;
            }
        }
    }
    if let Some(dx) = dx {
        dx.fill(0.0);
        for (o, &g) in dout.iter().enumerate() {
            if g != 0.0 {
                for (d, &wv) in dx.iter_mut().zip(&w[o * d_in..(o + 1) * d_in]) {
                    *d += g * wv;
                }
            }
        }
    }
}
