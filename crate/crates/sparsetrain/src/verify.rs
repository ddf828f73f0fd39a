//! A quick self-check of the numerical invariants, run by `sparsetrain
//! verify`. Each check compares the library against an independent
//! computation and takes well under a second.

use sparsetrain_core::autodiff::oracle::finite_difference;
use sparsetrain_core::autodiff::{Node, Record};
use sparsetrain_core::data::Dataset;
use sparsetrain_core::network::{trim_neurons, LayerSpec, LossKind, Network, Nonlinearity};
use sparsetrain_core::saliency::{grasp_scores_with, keep_count, snip_scores, SparsityTarget};
use sparsetrain_core::sizing::{estimate_storage, StorageFormat};
use sparsetrain_core::train::{ump_masks, ump_run};
use sparsetrain_core::{Result as CoreResult, Tensor};

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: CoreResult<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn gradients() -> Result<(), String> {
    for seed in 0..3 {
        let specs = [LayerSpec::dense(3, 5, Nonlinearity::Tanh), LayerSpec::output(5, 2)];
        let net = core(Network::<f64>::build(&specs, seed))?;
        let rows = 6;
        let x =
            core(Tensor::new(vec![rows, 3], (0..rows * 3).map(|i| ((i as u64 + seed) as f64 * 0.7).sin()).collect()))?;
        let y = core(Tensor::new(vec![rows, 2], (0..rows * 2).map(|i| ((i / 2 + i) % 2) as f64).collect()))?;
        let mut prog = core(net.program(x.rows(), Some(LossKind::SoftmaxCrossEntropy)))?;
        let loss = prog.loss.expect("loss attached");
        let g = core(prog.record.grad(loss, &prog.weights))?;
        let inputs = core(prog.bind(&net, &x, Some(&y)))?;
        let ours = core(prog.record.eval(&inputs, &g.nodes))?;
        let fd = core(finite_difference(&prog.record, loss, &inputs, &[2, 5], 1e-6))?;
        for (a, b) in ours.iter().zip(&fd) {
            for (&u, &v) in a.data().iter().zip(b.data()) {
                ensure((u - v).abs() <= 1e-5 * 1f64.max(u.abs()).max(v.abs()), || {
                    format!("seed {seed}: gradient {u} vs finite difference {v}")
                })?;
            }
        }
    }
    Ok(())
}

fn snip_example() -> Result<(), String> {
    let mut net = core(Network::<f64>::build(&[LayerSpec::output(2, 1)], 0))?;
    net.weight_mut(0).data_mut().copy_from_slice(&[1.0, 2.0]);
    let data =
        core(Dataset::new(core(Tensor::matrix(&[&[1.0, 1.0]]))?, core(Tensor::matrix(&[&[0.0]]))?, LossKind::Mse))?;
    let s = core(snip_scores(&net, &data, 1))?;
    ensure(s.scores[0].data() == [6.0, 12.0], || format!("scores {:?}, expected [6, 12]", s.scores[0].data()))
}

fn grasp_quadratic() -> Result<(), String> {
    let w = vec![core(Tensor::new(vec![2], vec![1.0, 1.0]))?];
    let loss = |rec: &mut Record<f64>, p: &[Node], _: usize| -> CoreResult<Node> {
        let a = rec.constant(Tensor::vector(vec![2.0, 4.0]));
        let aw = rec.mul(a, p[0])?;
        let waw = rec.mul(p[0], aw)?;
        let total = rec.sum(waw)?;
        rec.scale(total, 0.5)
    };
    let s = core(grasp_scores_with(&w, 1, loss))?;
    let d = s[0].data();
    ensure((d[0] + 4.0).abs() < 1e-9 && (d[1] + 16.0).abs() < 1e-9, || format!("scores {d:?}, expected [-4, -16]"))
}

fn mask_cardinality() -> Result<(), String> {
    let specs = [
        LayerSpec::dense(2, 16, Nonlinearity::Relu),
        LayerSpec::dense(16, 12, Nonlinearity::Relu),
        LayerSpec::output(12, 3),
    ];
    let net = core(Network::<f64>::build(&specs, 11))?;
    let mut prev: Option<Vec<_>> = None;
    for s in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] {
        let p = core(ump_run(&net, s))?.count_params();
        let k = keep_count(s, p.maskable);
        ensure(p.active == k, || format!("sparsity {s}: {} active, expected {k}", p.active))?;
        let masks = core(ump_masks(&net, s, SparsityTarget::global))?;
        if let Some(prev) = &prev {
            ensure(masks.iter().zip(prev).all(|(a, b)| a.is_subset_of(b)), || format!("masks at {s} are not nested"))?;
        }
        prev = Some(masks);
    }
    Ok(())
}

fn storage_break_even() -> Result<(), String> {
    let dense = core(estimate_storage((100, 100), 10_000, StorageFormat::Dense, 4, 8))?.total_bytes;
    let at80 = core(estimate_storage((100, 100), 2_000, StorageFormat::Coo, 4, 8))?.total_bytes;
    let at90 = core(estimate_storage((100, 100), 1_000, StorageFormat::Coo, 4, 8))?.total_bytes;
    ensure(dense == 40_000 && at80 == 40_000 && at90 < dense, || {
        format!("dense {dense}, COO@80% {at80}, COO@90% {at90}")
    })?;
    let csr = core(estimate_storage((1000, 1000), 0, StorageFormat::Csr, 4, 4))?;
    let be = csr.break_even.map(|f| f.as_f64()).unwrap_or(f64::NAN);
    ensure((be - 0.5).abs() < 0.01, || format!("CSR break-even {be}"))
}

fn trim_equivalence() -> Result<(), String> {
    let specs = [LayerSpec::dense(3, 8, Nonlinearity::Tanh), LayerSpec::output(8, 2)];
    let net = core(Network::<f32>::build(&specs, 5))?;
    let trimmed = core(trim_neurons(&net, &[3, 0]))?;
    // the three neurons with the smallest input-weight L1 norm, masked out
    let norms: Vec<f32> = net.layer(0).weight.data().chunks(3).map(|r| r.iter().map(|v| v.abs()).sum()).collect();
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut masked = net.clone();
    let (mut m0, mut m1) = (net.layer(0).mask.clone(), net.layer(1).mask.clone());
    for &r in &order[..3] {
        (0..3).for_each(|c| m0.set(r * 3 + c, false));
        (0..2).for_each(|o| m1.set(o * 8 + r, false));
    }
    core(masked.set_mask(0, m0))?;
    core(masked.set_mask(1, m1))?;
    let x = core(Tensor::new(vec![10, 3], (0..30).map(|i| (i as f32 * 0.37).sin() * 2.0).collect()))?;
    ensure(core(trimmed.forward(&x))? == core(masked.forward(&x))?, || "trimmed and masked outputs differ".into())?;
    ensure(trimmed.count_params().total < net.count_params().total, || "trimming did not shrink the network".into())
}

/// Runs every check.
pub fn run_checks() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<(), String>); 6] = [
        ("gradients match finite differences", gradients),
        ("SNIP worked example", snip_example),
        ("GraSP quadratic toy", grasp_quadratic),
        ("magnitude mask cardinality and nesting", mask_cardinality),
        ("storage break-even points", storage_break_even),
        ("trimming equals masking", trim_equivalence),
    ];
    checks.into_iter().map(|(name, f)| Check { name, outcome: f() }).collect()
}
