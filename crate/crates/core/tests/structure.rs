//! Physical size reduction: neuron trimming against masking, and low-rank
//! factorization against an external SVD.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use sparsetrain_core::network::{
    compress_low_rank, low_rank_factorize, singular_values, trim_neurons, ump_trim_quota, LayerSpec, Mask, Network,
    Nonlinearity,
};
use sparsetrain_core::{seed, Tensor};

fn random_matrix(rows: usize, cols: usize, s: u64) -> Tensor<f64> {
    let mut rng = seed::rng(s);
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn nalgebra_singular_values(t: &Tensor<f64>) -> Vec<f64> {
    let m = DMatrix::from_row_slice(t.rows(), t.cols(), t.data());
    let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn frobenius(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn singular_values_match_nalgebra(rows in 1usize..7, cols in 1usize..7, s in any::<u64>()) {
        let t = random_matrix(rows, cols, s);
        let ours = singular_values(&t).unwrap();
        let theirs = nalgebra_singular_values(&t);
        prop_assert_eq!(ours.len(), theirs.len());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-9 * 1f64.max(*b));
        }
    }

    #[test]
    fn truncation_error_is_the_discarded_spectrum(rows in 2usize..7, cols in 2usize..7, s in any::<u64>(), pick in 0usize..10) {
        let t = random_matrix(rows, cols, s);
        let p = rows.min(cols);
        let rank = 1 + pick % p;
        let approx = low_rank_factorize(&t, rank).unwrap().reconstruct();
        let sigma = nalgebra_singular_values(&t);
        let expect = sigma[rank..].iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((frobenius(&t, &approx) - expect).abs() < 1e-9 * 1f64.max(expect));
    }
}

#[test]
fn full_rank_reconstruction_is_lossless() {
    let t = random_matrix(5, 3, 9);
    let f = low_rank_factorize(&t, 3).unwrap();
    assert!(frobenius(&t, &f.reconstruct()) < 1e-10);
    assert!(low_rank_factorize(&t, 4).is_err());
    assert!(low_rank_factorize(&t, 0).is_err());
}

#[test]
fn compressed_network_computes_the_reconstructed_weights() {
    let specs = [LayerSpec::dense(12, 16, Nonlinearity::Relu), LayerSpec::output(16, 3)];
    let net = Network::<f64>::build(&specs, 4).unwrap();
    let small = compress_low_rank(&net, 0.25).unwrap();
    assert!(small.count_params().total < net.count_params().total);
    // ranks ceil(0.25 × 12) = 3 and ceil(0.25 × 3) = 1, both worth factoring
    assert_eq!(small.layers().len(), 4);

    let mut reference = net.clone();
    for (l, rank) in [(0, 3), (1, 1)] {
        let approx = low_rank_factorize(&net.layer(l).weight, rank).unwrap().reconstruct();
        reference.weight_mut(l).data_mut().copy_from_slice(approx.data());
    }
    let x = random_matrix(20, 12, 77);
    let a = small.forward(&x).unwrap();
    let b = reference.forward(&x).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
}

/// Neurons of each layer ordered by ascending input-weight L1 norm, ties by
/// index, truncated to the quota.
fn expected_removals(net: &Network<f32>, quota: &[usize]) -> Vec<Vec<usize>> {
    net.layers()
        .iter()
        .zip(quota)
        .map(|(l, &q)| {
            let norms: Vec<f32> =
                l.weight.data().chunks(l.spec.fan_in).map(|row| row.iter().map(|v| v.abs()).sum()).collect();
            let mut order: Vec<usize> = (0..norms.len()).collect();
            order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
            order.truncate(q);
            order
        })
        .collect()
}

/// Zeroes the mask rows of removed neurons and the matching downstream
/// columns.
fn mask_removed(net: &Network<f32>, removed: &[Vec<usize>]) -> Network<f32> {
    let mut out = net.clone();
    for (l, rows) in removed.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let mut own: Mask = out.layer(l).mask.clone();
        for &r in rows {
            for c in 0..own.cols() {
                own.set(r * own.cols() + c, false);
            }
        }
        out.set_mask(l, own).unwrap();
        let mut next: Mask = out.layer(l + 1).mask.clone();
        for r in 0..next.rows() {
            for &c in rows {
                next.set(r * next.cols() + c, false);
            }
        }
        out.set_mask(l + 1, next).unwrap();
    }
    out
}

#[test]
fn trimmed_and_masked_networks_agree_exactly() {
    for s in 0..10u64 {
        let specs = [
            LayerSpec::dense(4, 12, Nonlinearity::Tanh),
            LayerSpec::dense(12, 10, Nonlinearity::Relu),
            LayerSpec::output(10, 3),
        ];
        let mut net = Network::<f32>::build(&specs, s).unwrap();
        let mut rng = seed::rng(500 + s);
        for l in 0..3 {
            for b in net.bias_mut(l).unwrap().data_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let quota = [1 + (s as usize % 4), 2 + (s as usize % 3), 0];
        let trimmed = trim_neurons(&net, &quota).unwrap();
        let masked = mask_removed(&net, &expected_removals(&net, &quota));

        let x: Vec<f32> = (0..100 * 4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = Tensor::new(vec![100, 4], x).unwrap();
        assert_eq!(trimmed.forward(&x).unwrap(), masked.forward(&x).unwrap(), "seed {s}");
        assert!(trimmed.count_params().total < net.count_params().total);
        assert_eq!(trimmed.layer(0).spec.fan_out, 12 - quota[0]);
        assert_eq!(trimmed.layer(1).spec.fan_in, 12 - quota[0]);
    }
}

#[test]
fn trim_quota_follows_global_magnitude_pruning() {
    let specs = [LayerSpec::dense(4, 20, Nonlinearity::Tanh), LayerSpec::output(20, 2)];
    let net = Network::<f32>::build(&specs, 3).unwrap();
    let q = ump_trim_quota(&net, 0.5).unwrap();
    assert_eq!(q[1], 0);
    assert!(q[0] < 20);
    let trimmed = trim_neurons(&net, &q).unwrap();
    assert_eq!(trimmed.layer(0).spec.fan_out, 20 - q[0]);
}

#[test]
fn trimming_respects_exclusions_and_the_output_layer() {
    let specs = [LayerSpec::dense(4, 8, Nonlinearity::Tanh), LayerSpec::output(8, 2)];
    let net = Network::<f32>::build(&specs, 3).unwrap();
    assert!(trim_neurons(&net, &[0, 1]).is_err());
    assert!(trim_neurons(&net, &[8, 0]).is_err());
    let excluded = net.clone().with_exclusions([0]).unwrap();
    assert!(trim_neurons(&excluded, &[1, 0]).is_err());
    assert_eq!(ump_trim_quota(&excluded, 0.5).unwrap(), vec![0, 0]);
}
