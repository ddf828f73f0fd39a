//! Byte-size estimates for dense and sparse weight storage.
//!
//! All arithmetic is exact integer arithmetic; break-even points are exact
//! fractions.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fraction::Fraction;
use crate::network::Network;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StorageFormat {
    Dense,
    /// Value plus row and column index per nonzero.
    Coo,
    /// Value plus column index per nonzero, and `rows + 1` row pointers.
    Csr,
}

impl StorageFormat {
    pub const ALL: [StorageFormat; 3] = [StorageFormat::Dense, StorageFormat::Coo, StorageFormat::Csr];

    pub fn name(self) -> &'static str {
        match self {
            StorageFormat::Dense => "dense",
            StorageFormat::Coo => "coo",
            StorageFormat::Csr => "csr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageEstimate {
    pub format: StorageFormat,
    pub element_bytes: u64,
    pub index_bytes: u64,
    pub total_bytes: u64,
    /// Sparsity at which this format costs exactly as much as dense storage.
    /// `None` for dense itself and when the format never breaks even.
    pub break_even: Option<Fraction>,
}

fn bytes(rows: u64, cols: u64, nnz: u64, format: StorageFormat, e: u64, i: u64) -> u64 {
    match format {
        StorageFormat::Dense => e * rows * cols,
        StorageFormat::Coo => nnz * (e + 2 * i),
        StorageFormat::Csr => nnz * (e + i) + (rows + 1) * i,
    }
}

/// Solves `bytes(nnz) = dense` for the sparsity `1 - nnz / (rows × cols)`.
fn break_even(rows: u64, cols: u64, format: StorageFormat, e: u64, i: u64) -> Option<Fraction> {
    let n = rows * cols;
    match format {
        StorageFormat::Dense => None,
        // nnz (e + 2i) = e n  =>  s = 2i / (e + 2i)
        StorageFormat::Coo => Some(Fraction::new(2 * i, e + 2 * i)),
        // nnz (e + i) + (r + 1) i = e n  =>  s = (i n + (r + 1) i) / ((e + i) n)
        StorageFormat::Csr => {
            let num = i * n + (rows + 1) * i;
            let den = (e + i) * n;
            (num <= den).then(|| Fraction::new(num, den))
        }
    }
}

/// Storage cost of one `rows × cols` tensor with `nnz` nonzeros.
pub fn estimate_storage(
    shape: (usize, usize),
    nnz: usize,
    format: StorageFormat,
    element_bytes: u64,
    index_bytes: u64,
) -> Result<StorageEstimate> {
    let (rows, cols) = (shape.0 as u64, shape.1 as u64);
    if nnz as u64 > rows * cols {
        return Err(Error::InvalidArgument(alloc::format!("{nnz} nonzeros in a {rows}x{cols} tensor")));
    }
    Ok(StorageEstimate {
        format,
        element_bytes,
        index_bytes,
        total_bytes: bytes(rows, cols, nnz as u64, format, element_bytes, index_bytes),
        break_even: break_even(rows, cols, format, element_bytes, index_bytes),
    })
}

/// Whole-network storage: every weight matrix in `format` (nonzeros are
/// positions that are unmasked and nonzero) plus dense biases.
pub fn network_storage<T: Scalar>(
    network: &Network<T>,
    format: StorageFormat,
    element_bytes: u64,
    index_bytes: u64,
) -> Result<NetworkStorage> {
    let mut per_layer = Vec::with_capacity(network.layers().len());
    let mut total = 0u64;
    for l in network.layers() {
        let nnz = l.weight.data().iter().zip(l.mask.bits()).filter(|(&w, &on)| on && w != T::zero()).count();
        let est = estimate_storage((l.spec.fan_out, l.spec.fan_in), nnz, format, element_bytes, index_bytes)?;
        let bias = l.bias.as_ref().map_or(0, |b| b.len() as u64) * element_bytes;
        total += est.total_bytes + bias;
        per_layer.push(est);
    }
    Ok(NetworkStorage { format, total_bytes: total, per_layer })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkStorage {
    pub format: StorageFormat,
    pub total_bytes: u64,
    pub per_layer: Vec<StorageEstimate>,
}
