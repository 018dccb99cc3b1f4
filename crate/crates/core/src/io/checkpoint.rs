//! Model checkpoints: the magic `CCRF1`, then tensors until end of file. Each
//! tensor is a `u32` name length, the UTF-8 name, a `u32` rank, `u32` dims and
//! little-endian `f64` data in row-major order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::networks::{Dense, Mlp, PairwiseNet, UnaryNet};

pub const MAGIC: &[u8; 5] = b"CCRF1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn scalar(name: &str, v: f64) -> Self {
        Self { name: name.into(), dims: vec![], data: vec![v] }
    }
}

pub fn encode_tensors(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    for t in tensors {
        debug_assert_eq!(t.dims.iter().product::<usize>(), t.data.len());
        u32le(&mut out, t.name.len());
        out.extend_from_slice(t.name.as_bytes());
        u32le(&mut out, t.dims.len());
        for &d in &t.dims {
            u32le(&mut out, d);
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Tensor>> {
    if !bytes.starts_with(MAGIC) {
        return Err(Error::Format("missing CCRF1 magic".into()));
    }
    let mut r = Reader { bytes, pos: MAGIC.len() };
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes_needed = count.and_then(|c| c.checked_mul(8)).ok_or_else(|| Error::Format("tensor too large".into()))?;
        let data = r.take(bytes_needed)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        out.push(Tensor { name, dims, data });
    }
    Ok(out)
}

fn push_mlp(out: &mut Vec<Tensor>, prefix: &str, mlp: &Mlp) {
    for (i, l) in mlp.layers.iter().enumerate() {
        out.push(Tensor { name: format!("{prefix}.w{i}"), dims: vec![l.fan_in(), l.fan_out()], data: l.weight.iter().copied().collect() });
        out.push(Tensor { name: format!("{prefix}.b{i}"), dims: vec![l.fan_out()], data: l.bias.to_vec() });
    }
}

pub fn model_tensors(model: &Model) -> Vec<Tensor> {
    let mut out = Vec::new();
    push_mlp(&mut out, "unary", &model.unary.mlp);
    push_mlp(&mut out, "pair", &model.pairwise.embed);
    out.push(Tensor::scalar("pair.beta_raw", model.pairwise.beta_raw));
    out.push(Tensor::scalar("pair.gamma", model.pairwise.gamma));
    out.push(Tensor::scalar("model.coupled", if model.coupled { 1.0 } else { 0.0 }));
    out
}

fn take_mlp(map: &mut BTreeMap<String, Tensor>, prefix: &str) -> Result<Mlp> {
    let mut layers = Vec::new();
    while let Some(w) = map.remove(&format!("{prefix}.w{}", layers.len())) {
        let b = map
            .remove(&format!("{prefix}.b{}", layers.len()))
            .ok_or_else(|| Error::Format(format!("{} without bias", w.name)))?;
        let (weight, bias) = match (w.dims.as_slice(), b.dims.as_slice()) {
            (&[r, c], &[k]) if k == c => (
                Array2::from_shape_vec((r, c), w.data).expect("dims match data"),
                Array1::from_vec(b.data),
            ),
            _ => return Err(Error::Format(format!("bad shapes for {} / {}", w.name, b.name))),
        };
        layers.push(Dense { weight, bias });
    }
    Mlp::new(layers).map_err(|e| Error::Format(format!("{prefix} network: {e}")))
}

fn take_scalar(map: &mut BTreeMap<String, Tensor>, name: &str) -> Result<f64> {
    match map.remove(name) {
        Some(t) if t.data.len() == 1 => Ok(t.data[0]),
        Some(_) => Err(Error::Format(format!("{name} is not a scalar"))),
        None => Err(Error::Format(format!("checkpoint lacks {name}"))),
    }
}

pub fn model_from_tensors(tensors: Vec<Tensor>) -> Result<Model> {
    let mut map = BTreeMap::new();
    for t in tensors {
        let name = t.name.clone();
        if map.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("duplicate tensor {name}")));
        }
    }
    let unary = take_mlp(&mut map, "unary")?;
    let embed = take_mlp(&mut map, "pair")?;
    if unary.input_dim() != embed.input_dim() {
        return Err(Error::Format("unary and pairwise networks disagree on feature width".into()));
    }
    let beta_raw = take_scalar(&mut map, "pair.beta_raw")?;
    let gamma = take_scalar(&mut map, "pair.gamma")?;
    let coupled = take_scalar(&mut map, "model.coupled")? != 0.0;
    if let Some(name) = map.keys().next() {
        return Err(Error::Format(format!("unknown tensor {name}")));
    }
    Ok(Model { unary: UnaryNet { mlp: unary }, pairwise: PairwiseNet { embed, beta_raw, gamma }, coupled })
}

pub fn write_model(model: &Model) -> Vec<u8> {
    encode_tensors(&model_tensors(model))
}

pub fn read_model(bytes: &[u8]) -> Result<Model> {
    model_from_tensors(decode_tensors(bytes)?)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    read_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Task};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Model {
        let cfg = ModelConfig { embed_dim: 4, ..Default::default() };
        Model::init(6, Task::Segmentation { classes: 3 }, &cfg, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn model_roundtrip_is_exact() {
        let mut m = model();
        m.coupled = false;
        assert_eq!(read_model(&write_model(&m)).unwrap(), m);
    }

    #[test]
    fn scalar_tensor_layout() {
        let b = encode_tensors(&[Tensor::scalar("x", 2.0)]);
        assert_eq!(&b[..5], b"CCRF1");
        assert_eq!(&b[5..9], &1u32.to_le_bytes());
        assert_eq!(b[9], b'x');
        assert_eq!(&b[10..14], &0u32.to_le_bytes());
        assert_eq!(&b[14..], &2.0f64.to_le_bytes());
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let bytes = write_model(&model());
        assert!(read_model(&bytes[..bytes.len() - 3]).is_err());
        assert!(read_model(b"CCRF2").is_err());
        let mut extra = model_tensors(&model());
        extra.push(Tensor::scalar("stray", 0.0));
        assert!(model_from_tensors(extra).is_err());
    }
}
