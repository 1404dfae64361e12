//! Tensor bundles: a text manifest plus a flat little-endian `f64` blob.
//!
//! ```text
//! fastcolor-tensors 1
//! meta <key> <value>
//! tensor <name> f64 <shape> <offset> <count>
//! ```
//!
//! Shapes are comma separated (`-` for a scalar); offsets are in bytes.
//! Checkpoints and embedding caches are both stored this way.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fastcolor_core::embedding::{EmbeddingParams, EmbeddingTable};
use fastcolor_core::fcn::FastColorNet;
use fastcolor_core::graph::Graph;
use fastcolor_core::nn::{AdamConfig, AdamState, Mat, ParamStore, Tensor};

use crate::config::TrainConfig;
use crate::error::{io_err, Error, Result};

const MAGIC: &str = "fastcolor-tensors";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bundle {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("manifest"), stem.with_extension("bin"))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Bundle {
    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing {key:?}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse().map_err(|_| bad(format!("bad {key:?}: {v:?}")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    /// Writes `<stem>.manifest` and `<stem>.bin`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let (manifest, blob) = paths(stem);
        let mut text = format!("{MAGIC} {FORMAT_VERSION}\n");
        let mut bytes = Vec::new();
        for (k, v) in &self.meta {
            if k.contains(char::is_whitespace) || v.contains('\n') {
                return Err(bad(format!("meta entry {k:?} cannot be stored")));
            }
            text.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            if name.contains(char::is_whitespace) {
                return Err(bad(format!("tensor name {name:?} contains whitespace")));
            }
            let shape = if t.shape.is_empty() {
                "-".to_string()
            } else {
                t.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
            };
            text.push_str(&format!("tensor {name} f64 {shape} {} {}\n", bytes.len(), t.data.len()));
            for x in &t.data {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        write_atomic(&blob, &bytes)?;
        write_atomic(&manifest, text.as_bytes())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (manifest, blob) = paths(stem);
        let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
        let bytes = fs::read(&blob).map_err(io_err(&blob))?;
        let mut lines = text.lines();
        if lines.next() != Some(&format!("{MAGIC} {FORMAT_VERSION}")[..]) {
            return Err(bad(format!("{} is not a version {FORMAT_VERSION} manifest", manifest.display())));
        }
        let mut out = Bundle::default();
        for (i, line) in lines.enumerate() {
            let err = |m: &str| bad(format!("{}:{}: {m}", manifest.display(), i + 2));
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                out.meta.insert(k.into(), v.into());
                continue;
            }
            let toks: Vec<&str> = line.split(' ').collect();
            if toks.len() != 6 || toks[0] != "tensor" {
                return Err(err("expected a meta or tensor line"));
            }
            if toks[2] != "f64" {
                return Err(err("only f64 tensors are supported"));
            }
            let shape: Vec<usize> = if toks[3] == "-" {
                Vec::new()
            } else {
                toks[3]
                    .split(',')
                    .map(|d| d.parse().map_err(|_| err("bad shape")))
                    .collect::<Result<_>>()?
            };
            let offset: usize = toks[4].parse().map_err(|_| err("bad offset"))?;
            let count: usize = toks[5].parse().map_err(|_| err("bad count"))?;
            let end = offset + count * 8;
            if end > bytes.len() || offset % 8 != 0 {
                return Err(err("tensor extends past the blob"));
            }
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(&shape, data).map_err(|e| err(&e.to_string()))?;
            out.tensors.push((toks[1].into(), t));
        }
        Ok(out)
    }
}

/// Outcome of one gating comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GateRecord {
    pub iteration: usize,
    pub candidate_avg: f64,
    pub incumbent_avg: f64,
    pub accepted: bool,
}

/// Everything needed to resume or to rebuild the model exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ParamStore,
    pub adam: AdamState,
    pub iteration: usize,
    pub gating: Vec<GateRecord>,
}

impl Checkpoint {
    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::default();
        b.set_meta("kind", "checkpoint");
        b.set_meta("config_hash", self.config.hash());
        b.set_meta("iteration", self.iteration);
        b.set_meta("adam.step", self.adam.step);
        for (k, v) in self.config.pairs() {
            b.set_meta(&format!("config.{k}"), v);
        }
        for g in &self.gating {
            b.set_meta(
                &format!("gate.{:06}", g.iteration),
                format!("{} {} {}", g.candidate_avg, g.incumbent_avg, g.accepted),
            );
        }
        for (k, id) in self.params.ids().enumerate() {
            let name = self.params.name(id);
            b.push(format!("param/{name}"), self.params.get(id).clone());
            if self.params.is_trainable(id) {
                let shape = self.params.get(id).shape.clone();
                b.push(format!("adam.m/{name}"), Tensor { shape: shape.clone(), data: self.adam.m[k].clone() });
                b.push(format!("adam.v/{name}"), Tensor { shape, data: self.adam.v[k].clone() });
            }
        }
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<(Self, FastColorNet)> {
        if b.meta("kind")? != "checkpoint" {
            return Err(bad("bundle is not a checkpoint"));
        }
        let mut config = TrainConfig::default();
        for (k, v) in &b.meta {
            if let Some(key) = k.strip_prefix("config.") {
                config.set(key, v)?;
            }
        }
        if config.hash() != b.meta("config_hash")? {
            return Err(bad("config hash does not match the stored config"));
        }
        let (net, mut params) = FastColorNet::new(config.fcn.clone(), config.seed)?;
        let mut adam = AdamState::new(&params, AdamConfig { lr: config.lr, ..Default::default() });
        adam.step = b.meta_parse("adam.step")?;
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let name = params.name(id).to_string();
            let t = b.get(&format!("param/{name}")).ok_or_else(|| bad(format!("missing {name}")))?;
            params.assign(&name, t.clone())?;
            if params.is_trainable(id) {
                for (prefix, slot) in [("adam.m", &mut adam.m[k]), ("adam.v", &mut adam.v[k])] {
                    let t = b
                        .get(&format!("{prefix}/{name}"))
                        .ok_or_else(|| bad(format!("missing {prefix} for {name}")))?;
                    if t.data.len() != slot.len() {
                        return Err(bad(format!("{prefix} for {name} has the wrong size")));
                    }
                    slot.copy_from_slice(&t.data);
                }
            }
        }
        let expected = params.len() + adam.m.iter().filter(|m| !m.is_empty()).count() * 2;
        if b.tensors.len() != expected {
            return Err(bad("checkpoint holds tensors the model does not use"));
        }
        let mut gating = Vec::new();
        for (k, v) in &b.meta {
            if let Some(it) = k.strip_prefix("gate.") {
                let t: Vec<&str> = v.split(' ').collect();
                let parse_err = || bad(format!("bad gate record {v:?}"));
                if t.len() != 3 {
                    return Err(parse_err());
                }
                gating.push(GateRecord {
                    iteration: it.parse().map_err(|_| parse_err())?,
                    candidate_avg: t[0].parse().map_err(|_| parse_err())?,
                    incumbent_avg: t[1].parse().map_err(|_| parse_err())?,
                    accepted: t[2].parse().map_err(|_| parse_err())?,
                });
            }
        }
        Ok((
            Checkpoint {
                config,
                params,
                adam,
                iteration: b.meta_parse("iteration")?,
                gating,
            },
            net,
        ))
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        self.to_bundle().save(stem)
    }

    pub fn load(stem: &Path) -> Result<(Self, FastColorNet)> {
        Self::from_bundle(&Bundle::load(stem)?)
    }
}

/// Identity of a cached embedding table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbeddingKey {
    pub graph: u64,
    pub params: u64,
    pub iterations: usize,
    pub depth: usize,
    pub seed: u64,
}

impl EmbeddingKey {
    pub fn new(g: &Graph, store: &ParamStore, p: EmbeddingParams) -> Self {
        EmbeddingKey {
            graph: g.fingerprint(),
            params: store.digest(),
            iterations: p.iterations,
            depth: p.depth,
            seed: p.seed,
        }
    }
}

pub fn save_embeddings(table: &EmbeddingTable, key: EmbeddingKey, stem: &Path) -> Result<()> {
    let mut b = Bundle::default();
    b.set_meta("kind", "embeddings");
    b.set_meta("graph", format!("{:016x}", key.graph));
    b.set_meta("params", format!("{:016x}", key.params));
    b.set_meta("iterations", key.iterations);
    b.set_meta("depth", key.depth);
    b.set_meta("seed", key.seed);
    for (t, m) in table.rounds.iter().enumerate() {
        b.push(format!("round/{}", t + 1), Tensor { shape: vec![m.rows, m.cols], data: m.data.clone() });
    }
    b.save(stem)
}

/// `None` when the file exists but was made for a different key.
pub fn load_embeddings(stem: &Path, key: EmbeddingKey) -> Result<Option<EmbeddingTable>> {
    let b = Bundle::load(stem)?;
    if b.meta("kind")? != "embeddings" {
        return Err(bad("bundle is not an embedding cache"));
    }
    let stored = EmbeddingKey {
        graph: u64::from_str_radix(b.meta("graph")?, 16).map_err(|_| bad("bad graph hash"))?,
        params: u64::from_str_radix(b.meta("params")?, 16).map_err(|_| bad("bad params hash"))?,
        iterations: b.meta_parse("iterations")?,
        depth: b.meta_parse("depth")?,
        seed: b.meta_parse("seed")?,
    };
    if stored != key {
        return Ok(None);
    }
    let mut rounds = Vec::with_capacity(key.iterations);
    for t in 1..=key.iterations {
        let tensor = b.get(&format!("round/{t}")).ok_or_else(|| bad(format!("missing round {t}")))?;
        let [rows, cols] = tensor.shape[..] else {
            return Err(bad("embedding rounds must be matrices"));
        };
        rounds.push(Mat::from_vec(rows, cols, tensor.data.clone())?);
    }
    let (dim, n) = rounds.first().map_or((0, 0), |m| (m.cols, m.rows));
    let params = EmbeddingParams {
        iterations: key.iterations,
        depth: key.depth,
        seed: key.seed,
    };
    Ok(Some(EmbeddingTable::new(dim, n, params, rounds)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::default();
        b.set_meta("note", "two words");
        b.push("a", Tensor::from_vec(&[2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap());
        b.push("s", Tensor::from_vec(&[], vec![std::f64::consts::PI]).unwrap());
        let stem = dir.path().join("x");
        b.save(&stem).unwrap();
        let back = Bundle::load(&stem).unwrap();
        assert_eq!(back.meta, b.meta);
        for ((n1, t1), (n2, t2)) in back.tensors.iter().zip(&b.tensors) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape, t2.shape);
            let bits = |t: &Tensor| t.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(t1), bits(t2));
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::default();
        b.push("a", Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let stem = dir.path().join("x");
        b.save(&stem).unwrap();
        fs::write(stem.with_extension("bin"), [0u8; 12]).unwrap();
        assert!(Bundle::load(&stem).is_err());
    }
}
