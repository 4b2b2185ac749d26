//! `LSPC-CKPT v1` tensor container.
//!
//! One JSON manifest line, then a single little-endian `f32` blob holding
//! every tensor back to back. `offset` and `len` in the manifest are byte
//! counts relative to the start of the blob.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, Mlp, Real};
use crate::{LspcError, Result};

pub const MAGIC: &str = "LSPC-CKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    magic: String,
    version: u32,
    tensors: Vec<TensorEntry>,
    dtype: String,
}

/// Ordered set of named `f32` tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorStore {
    entries: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(LspcError::Shape(format!("tensor {name}: shape {shape:?} vs {} values", data.len())));
        }
        if self.entries.iter().any(|(n, _, _)| *n == name) {
            return Err(LspcError::Usage(format!("duplicate tensor {name}")));
        }
        self.entries.push((name, shape, data));
        Ok(())
    }

    /// Stores every layer of `net` as `prefix.Lk.w` / `prefix.Lk.b`.
    pub fn insert_net<F: Real>(&mut self, prefix: &str, net: &Mlp<F>) -> Result<()> {
        for (name, shape, data) in net.named_tensors(prefix) {
            self.insert(name, shape, data.iter().map(|x| x.as_f64() as f32).collect())?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<(&[usize], &[f32])> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| LspcError::Parse(format!("missing tensor {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rebuilds a network from `prefix.L0.*`, `prefix.L1.*`, ...
    pub fn get_net<F: Real>(&self, prefix: &str, activation: super::Activation, head: super::Head) -> Result<Mlp<F>> {
        let mut layers = Vec::new();
        loop {
            let k = layers.len();
            let wname = format!("{prefix}.L{k}.w");
            if !self.entries.iter().any(|(n, _, _)| *n == wname) {
                break;
            }
            let (ws, w) = self.get(&wname)?;
            let (bs, b) = self.get(&format!("{prefix}.L{k}.b"))?;
            if ws.len() != 2 || bs != [ws[0]] {
                return Err(LspcError::Parse(format!("tensor {wname} has inconsistent shapes")));
            }
            layers.push(Layer {
                in_dim: ws[1],
                out_dim: ws[0],
                w: w.iter().map(|x| F::lit(f64::from(*x))).collect(),
                b: b.iter().map(|x| F::lit(f64::from(*x))).collect(),
            });
        }
        if layers.is_empty() {
            return Err(LspcError::Parse(format!("missing tensor {prefix}.L0.w")));
        }
        Mlp::from_layers(layers, activation, head).map_err(|e| LspcError::Parse(format!("{prefix}: {e}")))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let mut offset = 0;
        let tensors = self
            .entries
            .iter()
            .map(|(name, shape, data)| {
                let e = TensorEntry { name: name.clone(), shape: shape.clone(), offset, len: data.len() * 4 };
                offset += data.len() * 4;
                e
            })
            .collect();
        let manifest = Manifest { magic: MAGIC.into(), version: VERSION, tensors, dtype: "f32le".into() };
        serde_json::to_writer(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        let mut blob = Vec::with_capacity(offset);
        for (_, _, data) in &self.entries {
            for x in data {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&blob)?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(LspcError::Parse("missing manifest line".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| LspcError::Parse(format!("bad manifest: {e}")))?;
        if manifest.magic != MAGIC {
            return Err(LspcError::Parse(format!("bad magic {:?}", manifest.magic)));
        }
        if manifest.version != VERSION {
            return Err(LspcError::Parse(format!("unsupported version {}", manifest.version)));
        }
        if manifest.dtype != "f32le" {
            return Err(LspcError::Parse(format!("unsupported dtype {:?}", manifest.dtype)));
        }
        let mut blob = Vec::new();
        r.read_to_end(&mut blob)?;
        let mut store = TensorStore::new();
        let mut expected_end = 0;
        for e in &manifest.tensors {
            let count: usize = e.shape.iter().product();
            if e.len != count * 4 {
                return Err(LspcError::Parse(format!("manifest/blob mismatch: tensor {} len {} vs shape {:?}", e.name, e.len, e.shape)));
            }
            let end = e.offset.checked_add(e.len).ok_or_else(|| LspcError::Parse("offset overflow".into()))?;
            if end > blob.len() {
                return Err(LspcError::Parse(format!("truncated blob at tensor {}", e.name)));
            }
            expected_end = expected_end.max(end);
            let data = blob[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(e.name.clone(), e.shape.clone(), data).map_err(|err| LspcError::Parse(err.to_string()))?;
        }
        if expected_end != blob.len() {
            return Err(LspcError::Parse(format!(
                "manifest/blob mismatch: manifest covers {expected_end} bytes, blob has {}",
                blob.len()
            )));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Head};
    use crate::rng;

    #[test]
    fn net_round_trip_is_bitwise() {
        let net: Mlp<f32> = Mlp::new(&[3, 5, 4], Activation::Relu, Head::Gaussian, &mut rng::stream(3, "t", 0)).unwrap();
        let mut store = TensorStore::new();
        store.insert_net("cvae_dec", &net).unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        let back = TensorStore::read_from(buf.as_slice()).unwrap();
        let net2: Mlp<f32> = back.get_net("cvae_dec", Activation::Relu, Head::Gaussian).unwrap();
        assert_eq!(net, net2);
        assert_eq!(
            net.flat_params().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            net2.flat_params().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn manifest_layout() {
        let mut store = TensorStore::new();
        store.insert("a", vec![2], vec![1.0, 2.0]).unwrap();
        store.insert("b", vec![1, 1], vec![3.0]).unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        let nl = buf.iter().position(|b| *b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&buf[..nl]).unwrap();
        assert_eq!(header["magic"], "LSPC-CKPT");
        assert_eq!(header["tensors"][1]["offset"], 8);
        assert_eq!(header["tensors"][1]["len"], 4);
        assert_eq!(buf.len() - nl - 1, 12);
        assert_eq!(&buf[nl + 1..nl + 5], &1.0f32.to_le_bytes());
    }

    #[test]
    fn missing_tensor_is_named() {
        let store = TensorStore::new();
        let err = store.get("q1.L0.w").unwrap_err();
        assert!(err.to_string().contains("missing tensor q1.L0.w"));
    }

    #[test]
    fn truncated_and_mismatched_blobs() {
        let mut store = TensorStore::new();
        store.insert("a", vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        let short = &buf[..buf.len() - 4];
        assert!(TensorStore::read_from(short).unwrap_err().to_string().contains("truncated"));
        let mut long = buf.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(TensorStore::read_from(long.as_slice()).unwrap_err().to_string().contains("mismatch"));
        let mut bad = buf.clone();
        let at = bad.windows(4).position(|w| w == b"LSPC").unwrap();
        bad[at..at + 4].copy_from_slice(b"NOPE");
        assert!(TensorStore::read_from(bad.as_slice()).unwrap_err().to_string().contains("magic"));
    }
}
