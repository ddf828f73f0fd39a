//! Structured neuron trimming.
//!
//! A trimmed neuron disappears physically: its row in the layer's weight,
//! its bias entry and the matching input column of the next layer are all
//! deleted. Neurons are ranked by the total magnitude of their input weights,
//! `Σ_j |w_ij|`, smallest first.

use alloc::vec;
use alloc::vec::Vec;

use super::{InitialParams, Layer, Mask, Network};
use crate::error::{Error, Result};
use crate::saliency::{magnitude_scores, topk_mask, KeepPolicy, SparsityTarget};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Neurons of `layer` ordered for removal: ascending input-weight magnitude,
/// ties by ascending index.
fn removal_order<T: Scalar>(layer: &Layer<T>) -> Vec<usize> {
    let w = layer.effective_weight();
    let cols = layer.spec.fan_in;
    let mags: Vec<f64> = w.data().chunks(cols).map(|row| row.iter().map(|v| v.abs().as_f64()).sum()).collect();
    let mut order: Vec<usize> = (0..mags.len()).collect();
    order.sort_by(|&a, &b| mags[a].total_cmp(&mags[b]).then(a.cmp(&b)));
    order
}

fn keep_rows_cols<T: Scalar>(t: &Tensor<T>, rows: &[usize], cols: &[usize]) -> Tensor<T> {
    let width = t.cols();
    let mut data = Vec::with_capacity(rows.len() * cols.len());
    for &r in rows {
        for &c in cols {
            data.push(t.data()[r * width + c]);
        }
    }
    Tensor::new(vec![rows.len(), cols.len()], data).expect("kept at least one row and column")
}

fn keep_entries<T: Scalar>(t: &Tensor<T>, keep: &[usize]) -> Tensor<T> {
    Tensor::vector(keep.iter().map(|&i| t.data()[i]).collect())
}

fn keep_mask(mask: &Mask, rows: &[usize], cols: &[usize]) -> Mask {
    let mut bits = Vec::with_capacity(rows.len() * cols.len());
    for &r in rows {
        for &c in cols {
            bits.push(mask.get(r * mask.cols() + c));
        }
    }
    Mask::from_bits(rows.len(), cols.len(), bits).expect("sizes agree")
}

/// Removes `quota[l]` neurons from each layer `l`.
///
/// Selection for every layer is computed on the incoming network before any
/// deletion, so trimming layer `l` does not influence which neurons of
/// layer `l + 1` are removed.
pub fn trim_neurons<T: Scalar>(network: &Network<T>, quota: &[usize]) -> Result<Network<T>> {
    let n = network.layers.len();
    if quota.len() != n {
        return Err(Error::InvalidArgument(alloc::format!("quota has {} entries for {} layers", quota.len(), n)));
    }
    let mut removed: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (l, &q) in quota.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let layer = &network.layers[l];
        if !layer.spec.trimmable {
            return Err(Error::NotTrimmable { layer: l, reason: "layer is marked untrimmable" });
        }
        if network.exclusions.contains(&l) {
            return Err(Error::NotTrimmable { layer: l, reason: "layer is excluded" });
        }
        if l + 1 == n {
            return Err(Error::NotTrimmable { layer: l, reason: "the last layer has no downstream layer" });
        }
        if q >= layer.spec.fan_out {
            return Err(Error::QuotaTooLarge { layer: l, quota: q, width: layer.spec.fan_out });
        }
        let mut r: Vec<usize> = removal_order(layer).into_iter().take(q).collect();
        r.sort_unstable();
        removed[l] = r;
    }
    if removed.iter().all(|r| r.is_empty()) {
        return Ok(network.clone());
    }

    let kept = |l: usize, width: usize| -> Vec<usize> { (0..width).filter(|i| !removed[l].contains(i)).collect() };
    let mut layers = Vec::with_capacity(n);
    let mut initial = network.initial.as_ref().map(|_| Vec::with_capacity(n));
    for (l, layer) in network.layers.iter().enumerate() {
        let rows = kept(l, layer.spec.fan_out);
        let cols = if l == 0 { (0..layer.spec.fan_in).collect() } else { kept(l - 1, layer.spec.fan_in) };
        let mut spec = layer.spec;
        spec.fan_out = rows.len();
        spec.fan_in = cols.len();
        layers.push(Layer {
            spec,
            weight: keep_rows_cols(&layer.weight, &rows, &cols),
            bias: layer.bias.as_ref().map(|b| keep_entries(b, &rows)),
            mask: keep_mask(&layer.mask, &rows, &cols),
        });
        if let (Some(out), Some(init)) = (initial.as_mut(), network.initial.as_ref()) {
            let p = &init[l];
            out.push(InitialParams {
                weight: keep_rows_cols(&p.weight, &rows, &cols),
                bias: p.bias.as_ref().map(|b| keep_entries(b, &rows)),
            });
        }
    }
    Network::rebuild(layers, network.exclusions.clone(), initial)
}

/// Per-layer neuron quotas derived from global magnitude pruning.
///
/// Runs a global magnitude top-k at `sparsity`, measures the fraction `f_l`
/// of each layer's weights that would be removed, and returns
/// `floor(f_l × fan_out_l)` for trimmable, non-excluded layers (0 elsewhere).
pub fn ump_trim_quota<T: Scalar>(network: &Network<T>, sparsity: f64) -> Result<Vec<usize>> {
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(Error::SparsityOutOfRange(sparsity));
    }
    let scores = magnitude_scores(network);
    let masks = topk_mask(&scores, SparsityTarget::global(sparsity), KeepPolicy::Largest)?;
    let n = network.layers.len();
    let mut quota = vec![0; n];
    for (&l, mask) in scores.layers.iter().zip(&masks) {
        let layer = &network.layers[l];
        if !layer.spec.trimmable || network.exclusions.contains(&l) || l + 1 == n {
            continue;
        }
        let removed = mask.len() - mask.count_ones();
        quota[l] = removed * layer.spec.fan_out / mask.len();
    }
    Ok(quota)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, Nonlinearity};

    fn set_rows(net: &mut Network<f64>, layer: usize, rows: &[&[f64]]) {
        let t = Tensor::matrix(rows).unwrap();
        *net.weight_mut(layer) = t;
    }

    #[test]
    fn removes_lowest_input_magnitude_neuron() {
        let specs = [LayerSpec::dense(2, 3, Nonlinearity::Relu), LayerSpec::output(3, 2)];
        let mut net = Network::<f64>::build(&specs, 0).unwrap();
        // row magnitudes 0.3, 1.2, 0.9
        set_rows(&mut net, 0, &[&[0.1, -0.2], &[1.0, 0.2], &[-0.4, 0.5]]);
        set_rows(&mut net, 1, &[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let trimmed = trim_neurons(&net, &[1, 0]).unwrap();
        assert_eq!(trimmed.layer(0).weight.data(), &[1.0, 0.2, -0.4, 0.5]);
        assert_eq!(trimmed.layer(1).weight.data(), &[2.0, 3.0, 5.0, 6.0]);
        assert_eq!(trimmed.layer(0).spec.fan_out, 2);
        assert_eq!(trimmed.layer(1).spec.fan_in, 2);
        assert_eq!(trimmed.layer(0).bias.as_ref().unwrap().len(), 2);
        assert_eq!(trimmed.layer(1).mask.cols(), 2);
        assert_eq!(trimmed.initial().unwrap()[1].weight.shape(), &[2, 2]);
    }

    #[test]
    fn zero_quota_is_identity() {
        let specs = [LayerSpec::dense(2, 3, Nonlinearity::Relu), LayerSpec::output(3, 2)];
        let net = Network::<f64>::build(&specs, 0).unwrap();
        assert_eq!(trim_neurons(&net, &[0, 0]).unwrap(), net);
    }

    #[test]
    fn quota_errors() {
        let specs = [LayerSpec::dense(2, 3, Nonlinearity::Relu), LayerSpec::output(3, 2)];
        let net = Network::<f64>::build(&specs, 0).unwrap();
        assert!(matches!(trim_neurons(&net, &[3, 0]), Err(Error::QuotaTooLarge { .. })));
        assert!(matches!(trim_neurons(&net, &[0, 1]), Err(Error::NotTrimmable { layer: 1, .. })));
        let excluded = net.clone().with_exclusions([0]).unwrap();
        assert!(matches!(trim_neurons(&excluded, &[1, 0]), Err(Error::NotTrimmable { layer: 0, .. })));
    }

    #[test]
    fn quota_arithmetic() {
        // one hidden layer 4 wide holding all the small weights
        let specs = [
            LayerSpec::dense(2, 4, Nonlinearity::Relu),
            LayerSpec::dense(4, 4, Nonlinearity::Relu),
            LayerSpec::output(4, 1),
        ];
        let mut net = Network::<f64>::build(&specs, 0).unwrap();
        for v in net.weight_mut(0).data_mut() {
            *v = 0.01;
        }
        for v in net.weight_mut(1).data_mut() {
            *v = 1.0;
        }
        for v in net.weight_mut(2).data_mut() {
            *v = 1.0;
        }
        // 28 weights; 4/28 removed => exactly half of layer 0's 8 weights
        let q = ump_trim_quota(&net, 4.0 / 28.0).unwrap();
        assert_eq!(q, vec![2, 0, 0]);
        // tiny sparsity: one weight removed, 1/8 * 4 floors to 0
        assert_eq!(ump_trim_quota(&net, 0.03).unwrap(), vec![0, 0, 0]);
        assert!(ump_trim_quota(&net, 0.0).is_err());
    }
}
