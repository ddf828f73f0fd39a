//! Truncated singular value decomposition of weight matrices.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::{Layer, LayerSpec, Mask, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 200;

/// Thin SVD `A = U diag(σ) Vᵀ` of an `m × n` row-major matrix with `m ≥ n`,
/// by one-sided Jacobi rotations. Returns `(U m×n, σ, V n×n)` with `σ`
/// sorted descending.
fn jacobi_tall(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut u = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (x, y) = (u[i * n + p], u[i * n + q]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (u[i * n + p], u[i * n + q]);
                    u[i * n + p] = c * x - s * y;
                    u[i * n + q] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[i * n + p], v[i * n + q]);
                    v[i * n + p] = c * x - s * y;
                    v[i * n + q] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..n).map(|j| (0..m).map(|i| u[i * n + j] * u[i * n + j]).sum::<f64>().sqrt()).collect();
    for (j, &s) in sigma.iter().enumerate() {
        for i in 0..m {
            u[i * n + j] = if s > 0.0 { u[i * n + j] / s } else { 0.0 };
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let permute = |mat: &[f64], rows: usize| -> Vec<f64> {
        let mut out = vec![0.0; rows * n];
        for i in 0..rows {
            for (dst, &src) in order.iter().enumerate() {
                out[i * n + dst] = mat[i * n + src];
            }
        }
        out
    };
    let u = permute(&u, m);
    let v = permute(&v, n);
    sigma = order.iter().map(|&j| sigma[j]).collect();
    (u, sigma, v)
}

/// Full thin SVD of an arbitrary `m × n` matrix: `(U m×p, σ, V n×p)` with
/// `p = min(m, n)`.
fn thin_svd(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    if m >= n {
        jacobi_tall(a, m, n)
    } else {
        let mut at = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                at[j * m + i] = a[i * n + j];
            }
        }
        let (u, s, v) = jacobi_tall(&at, n, m);
        (v, s, u)
    }
}

fn as_matrix<T: Scalar>(weight: &Tensor<T>) -> Result<(usize, usize, Vec<f64>)> {
    if weight.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "svd",
            detail: alloc::format!("expected a matrix, got {:?}", weight.shape()),
        });
    }
    Ok((weight.rows(), weight.cols(), weight.data().iter().map(|v| v.as_f64()).collect()))
}

/// Singular values of a matrix in descending order.
pub fn singular_values<T: Scalar>(weight: &Tensor<T>) -> Result<Vec<f64>> {
    let (m, n, a) = as_matrix(weight)?;
    Ok(thin_svd(&a, m, n).1)
}

/// Rank-`r` factors of an `m × n` matrix: `U' (m×r)`, `σ' (r)`, `V' (n×r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankFactors<T> {
    pub u: Tensor<T>,
    pub sigma: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Scalar> LowRankFactors<T> {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U' diag(σ') V'ᵀ`.
    pub fn reconstruct(&self) -> Tensor<T> {
        let (m, r) = (self.u.rows(), self.u.cols());
        let n = self.v.rows();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..r {
                    acc = acc + self.u.at(i, k) * self.sigma.data()[k] * self.v.at(j, k);
                }
                out[i * n + j] = acc;
            }
        }
        Tensor::new(vec![m, n], out).expect("positive dimensions")
    }

    /// `x ↦ U'(σ' ⊙ (V'ᵀ x))` for a length-`n` vector.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let (n, r) = (self.v.rows(), self.v.cols());
        if x.len() != n {
            return Err(Error::ShapeMismatch {
                op: "low_rank_apply",
                detail: alloc::format!("input of length {} for {} columns", x.len(), n),
            });
        }
        let inner: Vec<T> =
            (0..r).map(|k| self.sigma.data()[k] * (0..n).map(|j| self.v.at(j, k) * x[j]).sum::<T>()).collect();
        Ok((0..self.u.rows()).map(|i| (0..r).map(|k| self.u.at(i, k) * inner[k]).sum()).collect())
    }
}

/// Best rank-`rank` approximation (Frobenius norm) of `weight`, keeping the
/// largest singular values and zeroing the rest.
pub fn low_rank_factorize<T: Scalar>(weight: &Tensor<T>, rank: usize) -> Result<LowRankFactors<T>> {
    let (m, n, a) = as_matrix(weight)?;
    let p = m.min(n);
    if rank == 0 || rank > p {
        return Err(Error::RankOutOfRange { rank, max: p });
    }
    let (u, s, v) = thin_svd(&a, m, n);
    let take = |mat: &[f64], rows: usize| -> Tensor<T> {
        let mut data = Vec::with_capacity(rows * rank);
        for i in 0..rows {
            for k in 0..rank {
                data.push(T::from_f64(mat[i * p + k]));
            }
        }
        Tensor::new(vec![rows, rank], data).expect("positive dimensions")
    };
    Ok(LowRankFactors {
        u: take(&u, m),
        sigma: Tensor::vector(s[..rank].iter().map(|&x| T::from_f64(x)).collect()),
        v: take(&v, n),
    })
}

/// Replaces each maskable layer by a rank-`r` factor pair, with
/// `r = ceil(keep_fraction × min(fan_in, fan_out))`. A layer is only
/// replaced when the pair stores fewer weights than the original.
///
/// The factor layer computes `σ' ⊙ V'ᵀx` without bias; the second layer
/// holds `U'`, the original bias and the original nonlinearity. Masks of
/// replaced layers must be all ones (compress before pruning, not after).
pub fn compress_low_rank<T: Scalar>(network: &Network<T>, keep_fraction: f64) -> Result<Network<T>> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!("rank fraction must be in (0, 1], got {keep_fraction}")));
    }
    let mut layers = Vec::new();
    let mut exclusions = BTreeSet::new();
    for (l, layer) in network.layers.iter().enumerate() {
        let (m, n) = (layer.spec.fan_out, layer.spec.fan_in);
        let p = m.min(n);
        let rank = ((keep_fraction * p as f64).ceil() as usize).clamp(1, p);
        let worthwhile = network.is_maskable(l) && rank * (m + n) < m * n;
        if network.exclusions.contains(&l) {
            exclusions.insert(layers.len());
        }
        if !worthwhile {
            layers.push(layer.clone());
            continue;
        }
        let f = low_rank_factorize(&layer.effective_weight(), rank)?;
        let mut first = Vec::with_capacity(rank * n);
        for k in 0..rank {
            let s = f.sigma.data()[k];
            for j in 0..n {
                first.push(s * f.v.at(j, k));
            }
        }
        layers.push(Layer {
            spec: LayerSpec::factor(n, rank),
            weight: Tensor::new(vec![rank, n], first)?,
            bias: None,
            mask: Mask::ones(rank, n),
        });
        let mut spec = layer.spec;
        spec.fan_in = rank;
        spec.trimmable = false;
        layers.push(Layer { spec, weight: f.u.clone(), bias: layer.bias.clone(), mask: Mask::ones(m, rank) });
    }
    Network::rebuild(layers, exclusions, None)
}
