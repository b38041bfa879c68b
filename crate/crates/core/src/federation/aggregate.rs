use crate::error::{Error, Result};
use crate::model::UpdateRecord;
use crate::nn::ParamSet;

/// Sample-weighted mean of the transmitted parameters, `sum_c (n_c / n) m_c`.
///
/// Records are folded in ascending client-id order as a running weighted
/// mean, each step clamped between the previous mean and the incoming value.
/// The result is therefore a convex combination coordinate by coordinate,
/// equal inputs come back unchanged, and the value does not depend on the
/// order in which records arrived.
pub fn aggregate(updates: &[UpdateRecord]) -> Result<ParamSet> {
    let mut order: Vec<&UpdateRecord> = updates.iter().collect();
    order.sort_by_key(|u| u.client());
    let (first, rest) = order
        .split_first()
        .ok_or_else(|| Error::Protocol("cannot aggregate zero updates".into()))?;
    if let Some(u) = order.iter().find(|u| u.n_samples() == 0) {
        return Err(Error::Protocol(format!("client {} reported zero samples", u.client())));
    }
    let mut mean = first.params().clone();
    let mut total = first.n_samples() as f64;
    for u in rest {
        if !u.params().congruent(&mean) {
            return Err(Error::Protocol(format!(
                "update from client {} does not match the shared layer layout",
                u.client()
            )));
        }
        total += u.n_samples() as f64;
        let w = u.n_samples() as f64 / total;
        for (acc, src) in mean.layers_mut().iter_mut().zip(u.params().layers()) {
            blend(acc.weight.data_mut(), src.weight.data(), w);
            blend(acc.bias.data_mut(), src.bias.data(), w);
        }
    }
    Ok(mean)
}

fn blend(acc: &mut [f64], x: &[f64], w: f64) {
    for (a, &v) in acc.iter_mut().zip(x) {
        let next = *a + w * (v - *a);
        let (lo, hi) = if *a <= v { (*a, v) } else { (v, *a) };
        *a = next.clamp(lo, hi);
    }
}
