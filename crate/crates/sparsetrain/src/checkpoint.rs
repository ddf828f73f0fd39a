//! Binary checkpoints of masked networks.
//!
//! Little-endian throughout; the layout is documented in
//! `docs/checkpoint.md`. A trailing FNV-1a checksum over everything before
//! it catches truncation and bit flips.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use sparsetrain_core::network::{InitialParams, Layer, LayerKind, LayerSpec, Mask, Network, Nonlinearity};
use sparsetrain_core::saliency::{SaliencyScores, ScoreMethod};
use sparsetrain_core::Tensor;

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 4] = b"SPTC";
const VERSION: u16 = 1;
const FLAG_INITIAL: u8 = 1;
const FLAG_SCORES: u8 = 2;

/// Width of stored floating-point values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn bytes(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Everything a checkpoint holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f64>,
    /// Saliency scores used to cut the masks, when the method has them.
    pub scores: Option<SaliencyScores<f64>>,
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

struct Writer {
    buf: Vec<u8>,
    precision: Precision,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn floats(&mut self, data: &[f64]) {
        for &v in data {
            match self.precision {
                Precision::F32 => self.buf.extend_from_slice(&(v as f32).to_le_bytes()),
                Precision::F64 => self.buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    fn bits(&mut self, bits: &[bool]) {
        for chunk in bits.chunks(8) {
            self.buf.push(chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i)));
        }
    }
}

fn kind_code(k: LayerKind) -> u8 {
    match k {
        LayerKind::Dense => 0,
        LayerKind::OutputDense => 1,
        LayerKind::Factor => 2,
    }
}

fn nonlinearity_code(n: Nonlinearity) -> u8 {
    match n {
        Nonlinearity::Identity => 0,
        Nonlinearity::Relu => 1,
        Nonlinearity::Tanh => 2,
    }
}

fn score_code(m: ScoreMethod) -> u8 {
    match m {
        ScoreMethod::Magnitude => 0,
        ScoreMethod::Snip => 1,
        ScoreMethod::Grasp => 2,
        ScoreMethod::Momentum => 3,
    }
}

/// Serializes a checkpoint.
pub fn encode(ck: &Checkpoint, precision: Precision) -> Vec<u8> {
    let net = &ck.network;
    let mut w = Writer { buf: Vec::new(), precision };
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u8(precision.bytes());
    let mut flags = 0;
    if net.initial().is_some() {
        flags |= FLAG_INITIAL;
    }
    if ck.scores.is_some() {
        flags |= FLAG_SCORES;
    }
    w.u8(flags);
    w.u32(net.layers().len());
    w.u32(net.exclusions().len());
    for &e in net.exclusions() {
        w.u32(e);
    }
    for l in net.layers() {
        let s = &l.spec;
        w.u8(kind_code(s.kind));
        w.u8(nonlinearity_code(s.nonlinearity));
        w.u8(s.prunable as u8);
        w.u8(s.trimmable as u8);
        w.u32(s.fan_in);
        w.u32(s.fan_out);
        w.u8(l.bias.is_some() as u8);
        w.floats(l.weight.data());
        if let Some(b) = &l.bias {
            w.floats(b.data());
        }
        w.bits(l.mask.bits());
    }
    if let Some(init) = net.initial() {
        for p in init {
            w.floats(p.weight.data());
            if let Some(b) = &p.bias {
                w.floats(b.data());
            }
        }
    }
    if let Some(sc) = &ck.scores {
        w.u8(score_code(sc.method));
        w.u32(sc.layers.len());
        for (&l, t) in sc.layers.iter().zip(&sc.scores) {
            w.u32(l);
            w.u32(t.rows());
            w.u32(t.cols());
            w.floats(t.data());
        }
    }
    let sum = fnv1a(&w.buf);
    w.buf.extend_from_slice(&sum.to_le_bytes());
    w.buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    precision: Precision,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Checkpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn flag(&mut self, what: &str) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(bad(format!("{what} flag has value {v}"))),
        }
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let width = self.precision.bytes() as usize;
        let raw = self.take(n.checked_mul(width).ok_or_else(|| bad("length overflow"))?)?;
        Ok(raw
            .chunks_exact(width)
            .map(|c| match self.precision {
                Precision::F32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
                Precision::F64 => f64::from_le_bytes(c.try_into().unwrap()),
            })
            .collect())
    }
    fn bits(&mut self, n: usize) -> Result<Vec<bool>> {
        let raw = self.take(n.div_ceil(8))?;
        let bits: Vec<bool> = (0..n).map(|i| raw[i / 8] >> (i % 8) & 1 == 1).collect();
        if n % 8 != 0 && raw[n / 8] >> (n % 8) != 0 {
            return Err(bad("mask padding bits are set"));
        }
        Ok(bits)
    }
    fn tensor(&mut self, shape: Vec<usize>) -> Result<Tensor<f64>> {
        let n = shape.iter().product();
        Tensor::new(shape, self.floats(n)?).map_err(|e| bad(e.to_string()))
    }
}

/// Parses and validates a checkpoint.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 + 2 + 2 + 8 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(bad("checksum mismatch"));
    }
    let mut r = Reader { buf: body, pos: 4, precision: Precision::F64 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    r.precision = match r.u8()? {
        4 => Precision::F32,
        8 => Precision::F64,
        p => return Err(bad(format!("unsupported precision {p}"))),
    };
    let flags = r.u8()?;
    if flags & !(FLAG_INITIAL | FLAG_SCORES) != 0 {
        return Err(bad(format!("unknown flags {flags:#04x}")));
    }
    let n_layers = r.u32()?;
    let n_excl = r.u32()?;
    if n_excl > n_layers {
        return Err(bad("more exclusions than layers"));
    }
    let exclusions: BTreeSet<usize> = (0..n_excl).map(|_| r.u32()).collect::<Result<_>>()?;
    let mut layers = Vec::new();
    for i in 0..n_layers {
        let kind = match r.u8()? {
            0 => LayerKind::Dense,
            1 => LayerKind::OutputDense,
            2 => LayerKind::Factor,
            k => return Err(bad(format!("layer {i}: unknown kind {k}"))),
        };
        let nonlinearity = match r.u8()? {
            0 => Nonlinearity::Identity,
            1 => Nonlinearity::Relu,
            2 => Nonlinearity::Tanh,
            k => return Err(bad(format!("layer {i}: unknown nonlinearity {k}"))),
        };
        let prunable = r.flag("prunable")?;
        let trimmable = r.flag("trimmable")?;
        let fan_in = r.u32()?;
        let fan_out = r.u32()?;
        let has_bias = r.flag("bias")?;
        let spec = LayerSpec { kind, fan_in, fan_out, nonlinearity, prunable, trimmable };
        let weight = r.tensor(vec![fan_out, fan_in])?;
        let bias = if has_bias { Some(r.tensor(vec![fan_out])?) } else { None };
        let mask = Mask::from_bits(fan_out, fan_in, r.bits(fan_in * fan_out)?).map_err(|e| bad(e.to_string()))?;
        layers.push(Layer { spec, weight, bias, mask });
    }
    let initial = if flags & FLAG_INITIAL != 0 {
        let mut init = Vec::with_capacity(layers.len());
        for l in &layers {
            let weight = r.tensor(l.weight.shape().to_vec())?;
            let bias = match &l.bias {
                Some(b) => Some(r.tensor(b.shape().to_vec())?),
                None => None,
            };
            init.push(InitialParams { weight, bias });
        }
        Some(init)
    } else {
        None
    };
    let scores = if flags & FLAG_SCORES != 0 {
        let method = match r.u8()? {
            0 => ScoreMethod::Magnitude,
            1 => ScoreMethod::Snip,
            2 => ScoreMethod::Grasp,
            3 => ScoreMethod::Momentum,
            m => return Err(bad(format!("unknown score method {m}"))),
        };
        let n = r.u32()?;
        if n > n_layers {
            return Err(bad("more score tensors than layers"));
        }
        let mut ids = Vec::with_capacity(n);
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(r.u32()?);
            let rows = r.u32()?;
            let cols = r.u32()?;
            tensors.push(r.tensor(vec![rows, cols])?);
        }
        Some(SaliencyScores { method, layers: ids, scores: tensors })
    } else {
        None
    };
    if r.pos != body.len() {
        return Err(bad(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let network = Network::from_parts(layers, exclusions, initial).map_err(|e| bad(e.to_string()))?;
    if let Some(sc) = &scores {
        for (&l, t) in sc.layers.iter().zip(&sc.scores) {
            if l >= network.layers().len() || t.shape() != network.layer(l).weight.shape() {
                return Err(bad(format!("score tensor for layer {l} does not match the network")));
            }
        }
    }
    Ok(Checkpoint { network, scores })
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(HarnessError::io(path, e));
    }
    Ok(())
}

pub fn save(path: &Path, ck: &Checkpoint, precision: Precision) -> Result<()> {
    write_atomic(path, &encode(ck, precision))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn rejects_foreign_bytes() {
        assert!(decode(b"hello world, not a checkpoint").is_err());
        assert!(decode(b"").is_err());
    }
}
