//! Permutation-invariant features from transmitted parameters.
//!
//! Hidden units can be relabelled without changing what a network computes,
//! so two clients with equivalent models may send very different vectors.
//! Each hidden layer's units are put in a canonical order before flattening:
//! descending L1 norm of incoming weights, then descending bias, then the
//! incoming weights compared lexicographically, then original position. The
//! order is carried into the next layer's input axis before that layer is
//! itself sorted. The network's output layer keeps its order since its
//! units are the classes.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::UpdateRecord;
use crate::nn::{LayerKind, Network, ParamSet};

/// Canonical feature vector of a record.
pub fn canonicalize(net: &Network, record: &UpdateRecord) -> Result<Vec<f64>> {
    let perms = canonical_permutations(net, record.params())?;
    Ok(permute(net, record.params(), &perms)?.flatten())
}

/// Canonical features of `record - broadcast`, using the unit order chosen
/// from the record itself.
pub fn canonicalize_delta(net: &Network, record: &UpdateRecord, broadcast: &ParamSet) -> Result<Vec<f64>> {
    let params = record.params();
    if !params.congruent(broadcast) {
        return Err(Error::Protocol("broadcast does not match the record's layers".into()));
    }
    let perms = canonical_permutations(net, params)?;
    let mut delta = params.clone();
    for (d, b) in delta.layers_mut().iter_mut().zip(broadcast.layers()) {
        d.weight.data_mut().iter_mut().zip(b.weight.data()).for_each(|(x, y)| *x -= y);
        d.bias.data_mut().iter_mut().zip(b.bias.data()).for_each(|(x, y)| *x -= y);
    }
    Ok(permute(net, &delta, &perms)?.flatten())
}

/// Layer geometry needed to permute input axes.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    units: usize,
    /// Input channels or features.
    inputs: usize,
    /// Weights per (unit, input) pair: kernel size for convolutions, the
    /// previous layer's time length for a dense layer fed by a convolution,
    /// otherwise 1.
    block: usize,
    output: bool,
}

fn geometry(net: &Network, params: &ParamSet) -> Result<Vec<Geometry>> {
    let specs = net.layers();
    let mut out = Vec::with_capacity(params.layers().len());
    for (k, layer) in params.layers().iter().enumerate() {
        let i = net
            .layer_index(&layer.name)
            .ok_or_else(|| Error::Protocol(format!("layer {} is not part of the network", layer.name)))?;
        if k > 0 && net.layer_index(&params.layers()[k - 1].name) != Some(i - 1) {
            return Err(Error::Protocol("record layers must be consecutive network layers".into()));
        }
        let geo = match specs[i].kind {
            LayerKind::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
            } => Geometry {
                units: out_channels,
                inputs: in_channels,
                block: kernel_size,
                output: false,
            },
            LayerKind::Dense { in_dim, out_dim } => {
                let (inputs, block) = match i.checked_sub(1).map(|p| specs[p].kind) {
                    Some(LayerKind::Conv1d { out_channels, .. }) => (out_channels, in_dim / out_channels),
                    _ => (in_dim, 1),
                };
                Geometry {
                    units: out_dim,
                    inputs,
                    block,
                    output: false,
                }
            }
        };
        out.push(Geometry {
            output: i + 1 == specs.len(),
            ..geo
        });
        if layer.weight.len() != geo.units * geo.inputs * geo.block || layer.bias.len() != geo.units {
            return Err(Error::Dimension(format!("layer {} has unexpected size", layer.name)));
        }
    }
    Ok(out)
}

/// Reorders the input axis of a `[units, inputs * block]` weight by `perm`.
fn permute_inputs(weight: &[f64], g: &Geometry, perm: &[usize]) -> Vec<f64> {
    let row = g.inputs * g.block;
    let mut out = Vec::with_capacity(weight.len());
    for u in 0..g.units {
        let src = &weight[u * row..(u + 1) * row];
        for &j in perm {
            out.extend_from_slice(&src[j * g.block..(j + 1) * g.block]);
        }
    }
    out
}

fn unit_order(weight: &[f64], bias: &[f64], g: &Geometry) -> Vec<usize> {
    let row = g.inputs * g.block;
    let rows: Vec<&[f64]> = weight.chunks(row).collect();
    let l1: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
    let mut order: Vec<usize> = (0..g.units).collect();
    order.sort_by(|&a, &b| {
        l1[b]
            .total_cmp(&l1[a])
            .then_with(|| bias[b].total_cmp(&bias[a]))
            .then_with(|| lexicographic(rows[a], rows[b]))
            .then(a.cmp(&b))
    });
    order
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Unit order of every layer in `params` (identity for the output layer).
fn canonical_permutations(net: &Network, params: &ParamSet) -> Result<Vec<Vec<usize>>> {
    let geos = geometry(net, params)?;
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(geos.len());
    for (k, (layer, g)) in params.layers().iter().zip(&geos).enumerate() {
        let weight = match perms.last() {
            Some(prev) if k > 0 => permute_inputs(layer.weight.data(), g, prev),
            _ => layer.weight.data().to_vec(),
        };
        perms.push(if g.output {
            (0..g.units).collect()
        } else {
            unit_order(&weight, layer.bias.data(), g)
        });
    }
    Ok(perms)
}

fn permute(net: &Network, params: &ParamSet, perms: &[Vec<usize>]) -> Result<ParamSet> {
    let geos = geometry(net, params)?;
    let mut layers = Vec::with_capacity(geos.len());
    for (k, (layer, g)) in params.layers().iter().zip(&geos).enumerate() {
        let weight = if k > 0 {
            permute_inputs(layer.weight.data(), g, &perms[k - 1])
        } else {
            layer.weight.data().to_vec()
        };
        let row = g.inputs * g.block;
        let mut w = Vec::with_capacity(weight.len());
        let mut b = Vec::with_capacity(g.units);
        for &u in &perms[k] {
            w.extend_from_slice(&weight[u * row..(u + 1) * row]);
            b.push(layer.bias.data()[u]);
        }
        let mut out = layer.clone();
        out.weight.data_mut().copy_from_slice(&w);
        out.bias.data_mut().copy_from_slice(&b);
        layers.push(out);
    }
    Ok(ParamSet::new(layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, split_update, HarArchitecture, Strategy};
    use crate::seed::{rng_for, Stream};
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn arch() -> HarArchitecture {
        HarArchitecture {
            window_len: 12,
            conv_channels: [4, 5],
            kernel_sizes: [3, 3],
            hidden: [6, 4],
            ..HarArchitecture::default()
        }
    }

    fn record(p: &ParamSet) -> UpdateRecord {
        split_update(p, p).unwrap()
    }

    /// Relabels hidden units of `params` by drawing a random permutation per
    /// hidden layer and applying it to rows and to the next layer's inputs.
    fn relabel(net: &Network, params: &ParamSet, rng: &mut impl Rng) -> ParamSet {
        let mut out = params.clone();
        let specs = net.layers();
        for i in 0..specs.len() - 1 {
            let units = specs[i].units();
            let mut perm: Vec<usize> = (0..units).collect();
            perm.shuffle(rng);
            let cur = out.layers()[i].clone();
            let row = cur.weight.len() / units;
            let layer = &mut out.layers_mut()[i];
            for (new, &old) in perm.iter().enumerate() {
                layer.weight.data_mut()[new * row..(new + 1) * row]
                    .copy_from_slice(&cur.weight.data()[old * row..(old + 1) * row]);
                layer.bias.data_mut()[new] = cur.bias.data()[old];
            }
            let next = out.layers()[i + 1].clone();
            let next_units = specs[i + 1].units();
            let next_row = next.weight.len() / next_units;
            let block = next_row / units;
            let layer = &mut out.layers_mut()[i + 1];
            for u in 0..next_units {
                for (new, &old) in perm.iter().enumerate() {
                    let dst = u * next_row + new * block;
                    let src = u * next_row + old * block;
                    layer.weight.data_mut()[dst..dst + block].copy_from_slice(&next.weight.data()[src..src + block]);
                }
            }
        }
        out
    }

    #[test]
    fn relabelled_networks_share_features() {
        let a = arch();
        let net = a.network().unwrap();
        for n in 0..50u64 {
            let params = init_model(&a, Strategy::Vanilla, n).unwrap();
            let base = canonicalize(&net, &record(&params)).unwrap();
            let mut rng = rng_for(n, Stream::Shuffle, &[]);
            for _ in 0..50 {
                let moved = relabel(&net, &params, &mut rng);
                assert_eq!(canonicalize(&net, &record(&moved)).unwrap(), base);
            }
        }
    }

    #[test]
    fn relabelling_preserves_outputs() {
        // Guards the test helper itself.
        let a = arch();
        let net = a.network().unwrap();
        let params = init_model(&a, Strategy::Vanilla, 3).unwrap();
        let moved = relabel(&net, &params, &mut rng_for(0, Stream::Shuffle, &[]));
        let x = crate::nn::Tensor::new(vec![6, 12], (0..72).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let (l1, l2) = (net.logits(&params, &x).unwrap(), net.logits(&moved, &x).unwrap());
        for (p, q) in l1.iter().zip(&l2) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let a = arch();
        let net = a.network().unwrap();
        let params = init_model(&a, Strategy::Vanilla, 9).unwrap();
        let perms = canonical_permutations(&net, &params).unwrap();
        let sorted = permute(&net, &params, &perms).unwrap();
        assert_eq!(canonicalize(&net, &record(&sorted)).unwrap(), sorted.flatten());
    }

    #[test]
    fn distinct_networks_give_distinct_features() {
        let a = arch();
        let net = a.network().unwrap();
        let f: Vec<Vec<f64>> = (0..20)
            .map(|s| canonicalize(&net, &record(&init_model(&a, Strategy::Vanilla, s).unwrap())).unwrap())
            .collect();
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                assert_ne!(f[i], f[j]);
            }
        }
    }

    #[test]
    fn fedper_records_cover_convolutions_only() {
        let a = arch();
        let net = a.network().unwrap();
        let params = init_model(&a, Strategy::Fedper, 1).unwrap();
        let rec = split_update(&params, &params).unwrap();
        let f = canonicalize(&net, &rec).unwrap();
        assert_eq!(f.len(), rec.params().coordinate_count());
        let moved = relabel(&net, &params, &mut rng_for(1, Stream::Shuffle, &[]));
        assert_eq!(canonicalize(&net, &split_update(&moved, &moved).unwrap()).unwrap(), f);
    }

    #[test]
    fn delta_uses_record_order() {
        let a = arch();
        let net = a.network().unwrap();
        let params = init_model(&a, Strategy::Vanilla, 4).unwrap();
        let zero = ParamSet::new(
            params
                .layers()
                .iter()
                .map(|l| {
                    let mut z = l.clone();
                    z.weight.data_mut().fill(0.0);
                    z.bias.data_mut().fill(0.0);
                    z
                })
                .collect(),
        );
        let rec = record(&params);
        assert_eq!(canonicalize_delta(&net, &rec, &zero).unwrap(), canonicalize(&net, &rec).unwrap());
        let same = canonicalize_delta(&net, &rec, &params).unwrap();
        assert!(same.iter().all(|&v| v == 0.0));
    }
}
