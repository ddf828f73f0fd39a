//! Seeded synthetic tasks and the 80:10:10 split.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::LossKind;
use crate::scalar::Scalar;
use crate::seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    /// Four inputs, one smooth nonlinear target with small noise.
    SyntheticRegression,
    /// Two interleaved noisy spirals in the plane.
    TwoClassSpiral,
    /// Four Gaussian blobs on a circle.
    SmallMulticlass,
}

impl Task {
    pub fn input_dim(self) -> usize {
        match self {
            Task::SyntheticRegression => 4,
            Task::TwoClassSpiral | Task::SmallMulticlass => 2,
        }
    }

    pub fn output_dim(self) -> usize {
        match self {
            Task::SyntheticRegression => 1,
            Task::TwoClassSpiral => 2,
            Task::SmallMulticlass => 4,
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            Task::SyntheticRegression => LossKind::Mse,
            _ => LossKind::SoftmaxCrossEntropy,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::SyntheticRegression => "synthetic-regression",
            Task::TwoClassSpiral => "two-class-spiral",
            Task::SmallMulticlass => "small-multiclass",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        [Task::SyntheticRegression, Task::TwoClassSpiral, Task::SmallMulticlass].into_iter().find(|t| t.name() == name)
    }
}

/// Inputs (`n × d`) with targets (`n × k`): one-hot rows for classification,
/// real values for regression.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Tensor<T>,
    pub targets: Tensor<T>,
    pub loss: LossKind,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Tensor<T>, targets: Tensor<T>, loss: LossKind) -> Result<Self> {
        if inputs.rank() != 2 || targets.rank() != 2 || inputs.rows() != targets.rows() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                detail: format!("inputs {:?} vs targets {:?}", inputs.shape(), targets.shape()),
            });
        }
        Ok(Dataset { inputs, targets, loss })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Ok(Dataset {
            inputs: self.inputs.select_rows(rows)?,
            targets: self.targets.select_rows(rows)?,
            loss: self.loss,
        })
    }

    /// The first `n` samples (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Consecutive batches of at most `size` rows, in storage order.
    pub fn batches(&self, size: usize) -> Result<Vec<Dataset<T>>> {
        if size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        let n = self.len();
        (0..n)
            .step_by(size)
            .map(|start| {
                let idx: Vec<usize> = (start..(start + size).min(n)).collect();
                self.select(&idx)
            })
            .collect()
    }

    /// Class index per row (argmax of the target), for classification sets.
    pub fn labels(&self) -> Vec<usize> {
        argmax_rows(&self.targets)
    }
}

pub(crate) fn argmax_rows<T: Scalar>(t: &Tensor<T>) -> Vec<usize> {
    t.data()
        .chunks(t.cols())
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Disjoint train/dev/test partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Dataset<T>,
    pub dev: Dataset<T>,
    pub test: Dataset<T>,
}

/// Splits 80:10:10 after a seeded shuffle. Sizes are `⌊8n/10⌋`, `⌊n/10⌋`
/// and the remainder.
pub fn split<T: Scalar>(data: &Dataset<T>, seed: u64) -> Result<DatasetSplit<T>> {
    let n = data.len();
    if n < 10 {
        return Err(Error::DatasetTooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let n_train = n * 8 / 10;
    let n_dev = n / 10;
    Ok(DatasetSplit {
        train: data.select(&order[..n_train])?,
        dev: data.select(&order[n_train..n_train + n_dev])?,
        test: data.select(&order[n_train + n_dev..])?,
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (core::f64::consts::TAU * u2).cos()
}

fn one_hot(class: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[class] = 1.0;
    v
}

/// Generates `size` samples of `task` (unshuffled).
pub fn generate<T: Scalar>(task: Task, size: usize, seed: u64) -> Result<Dataset<T>> {
    if size == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = seed::rng(seed);
    let (d, k) = (task.input_dim(), task.output_dim());
    let mut xs = Vec::with_capacity(size * d);
    let mut ys = Vec::with_capacity(size * k);
    for i in 0..size {
        match task {
            Task::SyntheticRegression => {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y =
                    0.8 * (core::f64::consts::PI * x[0]).sin() + x[1] * x[2] - 0.5 * x[3] + 0.05 * gaussian(&mut rng);
                xs.extend_from_slice(&x);
                ys.push(y);
            }
            Task::TwoClassSpiral => {
                let class = i % 2;
                let t: f64 = rng.gen_range(0.05..1.0);
                let angle = t * 1.75 * core::f64::consts::TAU + class as f64 * core::f64::consts::PI;
                let (nx, ny) = (0.08 * gaussian(&mut rng), 0.08 * gaussian(&mut rng));
                xs.push(t * angle.cos() + nx);
                xs.push(t * angle.sin() + ny);
                ys.extend(one_hot(class, 2));
            }
            Task::SmallMulticlass => {
                let class = i % 4;
                let theta = class as f64 * core::f64::consts::FRAC_PI_2;
                xs.push(1.5 * theta.cos() + 0.6 * gaussian(&mut rng));
                xs.push(1.5 * theta.sin() + 0.6 * gaussian(&mut rng));
                ys.extend(one_hot(class, 4));
            }
        }
    }
    Dataset::new(Tensor::from_f64(vec![size, d], &xs)?, Tensor::from_f64(vec![size, k], &ys)?, task.loss())
}

/// Deterministic dataset for `task` split 80:10:10.
pub fn make_dataset<T: Scalar>(task: Task, size: usize, seed: u64) -> Result<DatasetSplit<T>> {
    if size < 10 {
        return Err(Error::DatasetTooSmall(size));
    }
    let data = generate(task, size, seed::derive(seed, 0))?;
    split(&data, seed::derive(seed, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let s = make_dataset::<f64>(Task::TwoClassSpiral, 100, 3).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (80, 10, 10));
        let s = make_dataset::<f64>(Task::SyntheticRegression, 37, 3).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (29, 3, 5));
        assert_eq!(make_dataset::<f64>(Task::SmallMulticlass, 9, 0).unwrap_err(), Error::DatasetTooSmall(9));
    }

    #[test]
    fn same_seed_same_data() {
        let a = make_dataset::<f32>(Task::SmallMulticlass, 50, 11).unwrap();
        let b = make_dataset::<f32>(Task::SmallMulticlass, 50, 11).unwrap();
        assert_eq!(a, b);
        let c = make_dataset::<f32>(Task::SmallMulticlass, 50, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spiral_is_balanced() {
        for size in [100, 101, 257] {
            let d = generate::<f64>(Task::TwoClassSpiral, size, 5).unwrap();
            let ones = d.labels().iter().filter(|&&c| c == 1).count();
            let zeros = size - ones;
            assert!(ones.abs_diff(zeros) <= 1);
        }
    }

    #[test]
    fn batches_cover_all_rows() {
        let d = generate::<f64>(Task::SyntheticRegression, 10, 1).unwrap();
        let b = d.batches(4).unwrap();
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
    }
}
