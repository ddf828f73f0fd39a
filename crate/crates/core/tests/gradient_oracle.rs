//! Reverse-mode gradients and Hessian-vector products against central
//! finite differences on small random networks (64-bit).

use std::time::Instant;

use proptest::prelude::*;
use rand::Rng;
use sparsetrain_core::autodiff::oracle::{finite_difference, finite_difference_hvp};
use sparsetrain_core::autodiff::{Node, Record};
use sparsetrain_core::network::{LayerSpec, LossKind, Network, Nonlinearity};
use sparsetrain_core::seed;
use sparsetrain_core::Tensor;

/// `|a - b| <= tol × max(1, |a|, |b|)` elementwise.
fn close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) -> Result<(), String> {
    for (i, (&x, &y)) in a.data().iter().zip(b.data()).enumerate() {
        let scale = 1f64.max(x.abs()).max(y.abs());
        if (x - y).abs() > tol * scale {
            return Err(format!("element {i}: {x} vs {y}"));
        }
    }
    Ok(())
}

struct Case {
    record: Record<f64>,
    loss: Node,
    params: Vec<Node>,
    slots: Vec<usize>,
    inputs: Vec<Tensor<f64>>,
}

/// A random 1–2 hidden-layer network with random biases, a random batch and
/// its loss program. `slots` are the input positions of every weight and
/// bias, aligned with `params`.
fn random_case(case_seed: u64) -> Case {
    let mut rng = seed::rng(case_seed);
    let d_in = rng.gen_range(2..=4);
    let hidden: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(2..=5)).collect();
    let d_out = rng.gen_range(1..=3);
    let act = if rng.gen_bool(0.5) { Nonlinearity::Tanh } else { Nonlinearity::Relu };
    let mut specs = Vec::new();
    let mut prev = d_in;
    for &h in &hidden {
        specs.push(LayerSpec::dense(prev, h, act));
        prev = h;
    }
    specs.push(LayerSpec::output(prev, d_out));
    let mut net = Network::<f64>::build(&specs, rng.gen()).unwrap();
    for l in 0..specs.len() {
        for b in net.bias_mut(l).unwrap().data_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
    }
    let rows = rng.gen_range(3..=6);
    let x: Vec<f64> = (0..rows * d_in).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let (kind, y) = if d_out == 1 {
        (LossKind::Mse, (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>())
    } else {
        let mut y = vec![0.0; rows * d_out];
        for r in 0..rows {
            y[r * d_out + rng.gen_range(0..d_out)] = 1.0;
        }
        (LossKind::SoftmaxCrossEntropy, y)
    };
    let x = Tensor::new(vec![rows, d_in], x).unwrap();
    let y = Tensor::new(vec![rows, d_out], y).unwrap();
    let prog = net.program(rows, Some(kind)).unwrap();
    let inputs = prog.bind(&net, &x, Some(&y)).unwrap();
    let mut params = Vec::new();
    let mut slots = Vec::new();
    let mut slot = 2;
    for (w, b) in prog.weights.iter().zip(&prog.biases) {
        params.push(*w);
        slots.push(slot);
        slot += 1;
        if let Some(b) = b {
            params.push(*b);
            slots.push(slot);
            slot += 1;
        }
        slot += 1; // mask
    }
    Case { record: prog.record, loss: prog.loss.unwrap(), params, slots, inputs }
}

#[test]
fn gradients_match_finite_differences_on_twenty_networks() {
    let start = Instant::now();
    for s in 0..20u64 {
        let mut c = random_case(s);
        let g = c.record.grad(c.loss, &c.params).unwrap();
        let analytic = c.record.eval(&c.inputs, &g.nodes).unwrap();
        let numeric = finite_difference(&c.record, c.loss, &c.inputs, &c.slots, 1e-6).unwrap();
        for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            close(a, n, 1e-5).unwrap_or_else(|e| panic!("seed {s}, parameter {k}: {e}"));
        }
    }
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn hvp_matches_finite_differenced_gradients_on_twenty_networks() {
    let start = Instant::now();
    for s in 0..20u64 {
        let mut c = random_case(100 + s);
        let g = c.record.grad(c.loss, &c.params).unwrap();
        let shapes: Vec<Vec<usize>> = c.params.iter().map(|&p| c.record.shape(p).unwrap().to_vec()).collect();
        let v_nodes: Vec<Node> = shapes.iter().map(|sh| c.record.input(sh).unwrap()).collect();
        let hv = c.record.hessian_vector_product(c.loss, &c.params, &v_nodes).unwrap();
        let mut rng = seed::rng(1000 + s);
        let v: Vec<Tensor<f64>> = shapes
            .iter()
            .map(|sh| {
                let n = sh.iter().product();
                Tensor::new(sh.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            })
            .collect();
        let mut inputs = c.inputs.clone();
        inputs.extend(v.iter().cloned());
        let analytic = c.record.eval(&inputs, &hv).unwrap();
        let numeric = finite_difference_hvp(&c.record, &g.nodes, &inputs, &c.slots, &v, 1e-5).unwrap();
        for (k, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            close(a, n, 1e-4).unwrap_or_else(|e| panic!("seed {s}, parameter {k}: {e}"));
        }
    }
    assert!(start.elapsed().as_secs() < 30);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hvp_is_linear_in_the_direction(case_seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut c = random_case(case_seed);
        let shapes: Vec<Vec<usize>> = c.params.iter().map(|&p| c.record.shape(p).unwrap().to_vec()).collect();
        let v_nodes: Vec<Node> = shapes.iter().map(|sh| c.record.input(sh).unwrap()).collect();
        let hv = c.record.hessian_vector_product(c.loss, &c.params, &v_nodes).unwrap();
        let mut rng = seed::rng(case_seed ^ 0xABCD);
        let mut draw = || -> Vec<Tensor<f64>> {
            shapes.iter().map(|sh| {
                let n = sh.iter().product();
                Tensor::new(sh.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            }).collect()
        };
        let (v1, v2) = (draw(), draw());
        let combo: Vec<Tensor<f64>> = v1.iter().zip(&v2).map(|(x, y)| x.zip_map(y, |p, q| a * p + b * q).unwrap()).collect();
        let run = |v: &[Tensor<f64>]| {
            let mut inputs = c.inputs.clone();
            inputs.extend(v.iter().cloned());
            c.record.eval(&inputs, &hv).unwrap()
        };
        let (h1, h2, h12) = (run(&v1), run(&v2), run(&combo));
        for ((x, y), z) in h1.iter().zip(&h2).zip(&h12) {
            let expect = x.zip_map(y, |p, q| a * p + b * q).unwrap();
            prop_assert!(close(&expect, z, 1e-8).is_ok());
        }
    }

    #[test]
    fn evaluation_is_deterministic(case_seed in 0u64..10_000) {
        let mut c = random_case(case_seed);
        let g = c.record.grad(c.loss, &c.params).unwrap();
        let first = c.record.eval(&c.inputs, &g.nodes).unwrap();
        let second = c.record.eval(&c.inputs, &g.nodes).unwrap();
        prop_assert_eq!(first, second);
    }
}
