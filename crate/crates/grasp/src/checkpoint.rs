//! Model checkpoints.
//!
//! ```text
//! GRASP-CKPT 1\n
//! {json header}\n
//! tensor data: f64 little-endian, in header order
//! ```
//!
//! The header records the model kind, its architecture spec, the build seed,
//! free-form metadata, and the name and shape of every stored tensor
//! (parameters and batch-norm buffers).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ginnet::{GiNet, GinnetSpec};
use crate::model::{GraspModel, ModelKind};
use crate::nn::{Param, Parameters};
use crate::vqvae::{RgiNet, RginnetSpec, Vqvae, VqvaeSpec};
use crate::{Error, Result};

pub const MAGIC_LINE: &str = "GRASP-CKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Ginnet,
    Rginnet,
    Vqvae,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub kind: CheckpointKind,
    pub seed: u64,
    pub spec: serde_json::Value,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
}

fn collect(m: &dyn Parameters) -> (Vec<TensorEntry>, Vec<f64>) {
    let mut entries = Vec::new();
    let mut data = Vec::new();
    m.visit("", &mut |name, p| {
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: p.value.shape().to_vec(),
        });
        data.extend(p.value.iter().copied());
    });
    (entries, data)
}

fn write_raw<W: Write>(mut w: W, header: &Header, data: &[f64]) -> std::io::Result<()> {
    writeln!(w, "{MAGIC_LINE} {FORMAT_VERSION}")?;
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

fn spec_json<T: Serialize>(spec: &T) -> serde_json::Value {
    serde_json::to_value(spec).expect("specs serialize")
}

/// A loaded checkpoint before it is turned into a model.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: Header,
    data: Vec<f64>,
}

impl Checkpoint {
    fn of(
        kind: CheckpointKind,
        seed: u64,
        spec: serde_json::Value,
        m: &dyn Parameters,
        meta: BTreeMap<String, String>,
    ) -> Self {
        let (tensors, data) = collect(m);
        Self {
            header: Header {
                kind,
                seed,
                spec,
                meta,
                tensors,
            },
            data,
        }
    }

    pub fn from_model(model: &GraspModel, meta: BTreeMap<String, String>) -> Self {
        match model {
            GraspModel::Gi(m) => Self::of(CheckpointKind::Ginnet, m.seed, spec_json(&m.spec), m, meta),
            GraspModel::Rgi(m) => Self::of(CheckpointKind::Rginnet, m.seed, spec_json(&m.spec), m.as_ref(), meta),
        }
    }

    pub fn from_vqvae(vq: &Vqvae, meta: BTreeMap<String, String>) -> Self {
        Self::of(CheckpointKind::Vqvae, vq.seed, spec_json(&vq.spec), vq, meta)
    }

    pub fn write<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_raw(w, &self.header, &self.data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(mut r: R, path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Decode {
            path: path.to_path_buf(),
            msg,
        };
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let mut parts = line.trim_end().split(' ');
        if parts.next() != Some(MAGIC_LINE) {
            return Err(bad("not a grasp checkpoint".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing format version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version(format!(
                "{}: checkpoint format {version} (supported: {FORMAT_VERSION})",
                path.display()
            )));
        }
        line.clear();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        let header: Header = serde_json::from_str(&line).map_err(|e| bad(format!("header: {e}")))?;
        let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() != expected * 8 {
            return Err(bad(format!(
                "expected {} data bytes, found {}",
                expected * 8,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { header, data })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f), path)
    }

    fn spec<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.header.spec.clone())
            .map_err(|e| Error::Version(format!("checkpoint spec does not match this build: {e}")))
    }

    /// Copies stored tensors into `m`; every name and shape must match.
    fn restore(&self, m: &mut dyn Parameters) -> Result<()> {
        let mut offsets = BTreeMap::new();
        let mut at = 0;
        for t in &self.header.tensors {
            let n: usize = t.shape.iter().product();
            offsets.insert(t.name.as_str(), (at, &t.shape));
            at += n;
        }
        let mut seen = 0;
        let mut err = None;
        m.visit_mut("", &mut |name, p: &mut Param| {
            if err.is_some() {
                return;
            }
            match offsets.get(name) {
                Some(&(off, shape)) if shape.as_slice() == p.value.shape() => {
                    let n = p.value.len();
                    p.value
                        .iter_mut()
                        .zip(&self.data[off..off + n])
                        .for_each(|(v, &s)| *v = s);
                    seen += 1;
                }
                Some((_, shape)) => {
                    err = Some(format!(
                        "tensor {name}: stored shape {shape:?}, model has {:?}",
                        p.value.shape()
                    ))
                }
                None => err = Some(format!("tensor {name} missing from checkpoint")),
            }
        });
        if let Some(e) = err {
            return Err(Error::Version(e));
        }
        if seen != offsets.len() {
            return Err(Error::Version(format!(
                "checkpoint holds {} tensors, model uses {seen}",
                offsets.len()
            )));
        }
        Ok(())
    }

    pub fn into_model(self) -> Result<GraspModel> {
        let model = match self.header.kind {
            CheckpointKind::Ginnet => {
                let spec: GinnetSpec = self.spec()?;
                let mut m = GiNet::build(&spec, self.header.seed)?;
                self.restore(&mut m)?;
                GraspModel::Gi(m)
            }
            CheckpointKind::Rginnet => {
                let spec: RginnetSpec = self.spec()?;
                let mut m = RgiNet::build(&spec, self.header.seed)?;
                self.restore(&mut m)?;
                GraspModel::Rgi(Box::new(m))
            }
            CheckpointKind::Vqvae => {
                return Err(Error::Version(
                    "checkpoint holds an autoencoder, not a grasp model".into(),
                ))
            }
        };
        Ok(model)
    }

    pub fn into_vqvae(self) -> Result<Vqvae> {
        if self.header.kind != CheckpointKind::Vqvae {
            return Err(Error::Version(format!(
                "checkpoint holds a {:?} model, not an autoencoder",
                self.header.kind
            )));
        }
        let spec: VqvaeSpec = self.spec()?;
        let mut vq = Vqvae::build(&spec, self.header.seed)?;
        self.restore(&mut vq)?;
        Ok(vq)
    }

    pub fn model_kind(&self) -> Option<ModelKind> {
        match self.header.kind {
            CheckpointKind::Ginnet => Some(ModelKind::Ginnet),
            CheckpointKind::Rginnet => Some(ModelKind::Rginnet),
            CheckpointKind::Vqvae => None,
        }
    }
}

pub fn save_model(path: &Path, model: &GraspModel, meta: BTreeMap<String, String>) -> Result<()> {
    Checkpoint::from_model(model, meta).save(path)
}

pub fn load_model(path: &Path) -> Result<GraspModel> {
    Checkpoint::load(path)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GraspNet;
    use crate::nn::Tensor;
    use crate::vqvae::assemble_rginnet;
    use rand::SeedableRng;

    fn bytes(c: &Checkpoint) -> Vec<u8> {
        let mut b = Vec::new();
        c.write(&mut b).unwrap();
        b
    }

    #[test]
    fn ginnet_round_trip_preserves_outputs() {
        let mut m = GiNet::build(&GinnetSpec::tiny(4), 3).unwrap();
        // move batch-norm statistics away from their defaults
        let x = Tensor::from_shape_fn((2, 4, 8, 8), |(b, c, r, k)| ((b + c * r + k) as f64).sin());
        m.forward_train(&x, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let model = GraspModel::Gi(m);
        let ck = Checkpoint::from_model(&model, BTreeMap::from([("epoch".into(), "3".into())]));
        let b = bytes(&ck);
        let back = Checkpoint::read(b.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.header.meta["epoch"], "3");
        let loaded = back.into_model().unwrap();
        assert_eq!(loaded.forward(&x).unwrap(), model.forward(&x).unwrap());
        assert_eq!(bytes(&Checkpoint::from_model(&loaded, ck.header.meta.clone())), b);
    }

    #[test]
    fn rginnet_and_vqvae_round_trip() {
        let vq = Vqvae::build(&VqvaeSpec::tiny(), 1).unwrap();
        let vb = bytes(&Checkpoint::from_vqvae(&vq, BTreeMap::new()));
        let vq2 = Checkpoint::read(vb.as_slice(), Path::new("mem"))
            .unwrap()
            .into_vqvae()
            .unwrap();
        let x = Tensor::from_shape_fn((1, 3, 8, 8), |(_, c, r, k)| (c + r * k) as f64 * 0.01);
        assert_eq!(vq.forward(&x).unwrap().recon, vq2.forward(&x).unwrap().recon);

        let rgi = GraspModel::Rgi(Box::new(assemble_rginnet(&vq, &GinnetSpec::tiny(3), 5, true).unwrap()));
        let rb = bytes(&Checkpoint::from_model(&rgi, BTreeMap::new()));
        let back = Checkpoint::read(rb.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back.model_kind(), Some(ModelKind::Rginnet));
        let loaded = back.into_model().unwrap();
        assert_eq!(loaded.forward(&x).unwrap(), rgi.forward(&x).unwrap());
    }

    #[test]
    fn mismatches_are_version_errors() {
        let m = GraspModel::Gi(GiNet::build(&GinnetSpec::tiny(4), 0).unwrap());
        let mut b = bytes(&Checkpoint::from_model(&m, BTreeMap::new()));
        let text = String::from_utf8_lossy(&b).replacen("GRASP-CKPT 1", "GRASP-CKPT 9", 1);
        let versioned = text.as_bytes();
        assert!(matches!(
            Checkpoint::read(&versioned[..40], Path::new("mem")),
            Err(Error::Version(_))
        ));

        let vq = Checkpoint::from_vqvae(&Vqvae::build(&VqvaeSpec::tiny(), 0).unwrap(), BTreeMap::new());
        assert!(matches!(vq.into_model(), Err(Error::Version(_))));

        let mut ck = Checkpoint::from_model(&m, BTreeMap::new());
        ck.header.spec["blocks"][0]["b1"] = serde_json::json!(3);
        ck.header.spec["blocks"][0]["pool_proj"] = serde_json::json!(1);
        assert!(matches!(ck.into_model(), Err(Error::Version(_))));

        b.truncate(b.len() - 8);
        assert!(matches!(
            Checkpoint::read(b.as_slice(), Path::new("mem")),
            Err(Error::Decode { .. })
        ));
        assert!(matches!(
            Checkpoint::read(&b"junk\n"[..], Path::new("mem")),
            Err(Error::Decode { .. })
        ));
    }
}
