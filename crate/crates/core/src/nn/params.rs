use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::contract;
use crate::rng::Rng;
use crate::Result;
use rand::Rng as _;

/// Dense n-dimensional array, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(contract!("{} values for shape {:?}", data.len(), shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a freshly registered parameter is filled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in `±sqrt(3 / fan_in)`, i.e. variance `1 / fan_in`.
    FanInUniform { fan_in: usize },
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    name: String,
    value: Tensor,
    trainable: bool,
}

/// Named parameters in registration order. Non-trainable entries hold
/// batch-norm running statistics; they are checkpointed but never updated by
/// the optimizer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        shape: &[usize],
        init: Init,
        trainable: bool,
        rng: &mut Rng,
    ) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(contract!("parameter {name} registered twice"));
        }
        let mut value = Tensor::zeros(shape);
        match init {
            Init::Zeros => {}
            Init::Constant(c) => value.data.fill(c),
            Init::FanInUniform { fan_in } => {
                let bound = libm::sqrt(3.0 / fan_in.max(1) as f64);
                for x in &mut value.data {
                    *x = rng.random_range(-bound..=bound);
                }
            }
        }
        self.insert(name, value, trainable)
    }

    /// Adds a parameter with explicit contents (used when loading checkpoints).
    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(contract!("parameter {name} registered twice"));
        }
        let id = self.entries.len();
        self.entries.push(Entry {
            name: name.to_string(),
            value,
            trainable,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    /// Replaces contents by name; shapes must match.
    pub fn assign(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.id(name).ok_or_else(|| contract!("unknown parameter {name}"))?;
        let slot = &mut self.entries[id.0].value;
        if slot.shape != value.shape {
            return Err(contract!(
                "shape {:?} for {name}, expected {:?}",
                value.shape,
                slot.shape
            ));
        }
        *slot = value;
        Ok(())
    }

    pub fn trainable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    /// 64-bit digest of names, shapes and exact bit patterns.
    pub fn digest(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |x: u64| {
            h = crate::rng::mix(h, x, 0x5eed);
        };
        for e in &self.entries {
            for b in e.name.bytes() {
                eat(b as u64);
            }
            for &d in &e.value.shape {
                eat(d as u64);
            }
            for &x in &e.value.data {
                eat(x.to_bits());
            }
        }
        h
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            data: store.entries.iter().map(|e| vec![0.0; e.value.len()]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.data {
            for x in g {
                *x *= s;
            }
        }
    }

    pub fn fill(&mut self, v: f64) {
        for g in &mut self.data {
            g.fill(v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }
}
