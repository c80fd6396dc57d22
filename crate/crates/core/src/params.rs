//! Named parameter storage and deterministic initialization.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2c_tensor::{Tensor, Var};

use crate::error::{Result, S2cError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: String, value: Tensor) -> ParamId {
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Scalar count of parameters whose name starts with `prefix`.
    pub fn numel_under(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Replace every tensor, checking names and shapes match.
    pub fn load_from(&mut self, other: &[(String, Tensor)]) -> Result<()> {
        if other.len() != self.len() {
            return Err(S2cError::Incompatible(format!(
                "expected {} parameter tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for (i, (name, t)) in other.iter().enumerate() {
            if *name != self.names[i] || t.shape() != self.tensors[i].shape() {
                return Err(S2cError::Incompatible(format!(
                    "parameter {i}: expected {} {:?}, found {name} {:?}",
                    self.names[i],
                    self.tensors[i].shape(),
                    t.shape()
                )));
            }
        }
        for (dst, (_, t)) in self.tensors.iter_mut().zip(other) {
            *dst = t.clone();
        }
        Ok(())
    }

    pub fn bind(&self, trainable: bool) -> Ctx {
        Ctx {
            vars: self
                .tensors
                .iter()
                .map(|t| {
                    if trainable {
                        Var::leaf(t.clone(), true)
                    } else {
                        Var::constant(t.clone())
                    }
                })
                .collect(),
        }
    }
}

/// Parameters bound as graph variables for one forward pass.
pub struct Ctx {
    vars: Vec<Var>,
}

impl Ctx {
    /// Bind caller-provided variables (one per stored tensor, in order).
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn p(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Hands out parameters under a hierarchical name. Each tensor's initial
/// values come from an RNG keyed by `(seed, full name)`, so adding a layer
/// never changes how the others start.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    seed: u64,
    prefix: String,
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self {
            store,
            seed,
            prefix: String::new(),
        }
    }

    pub fn scope<T>(&mut self, name: &str, f: impl FnOnce(&mut ParamBuilder) -> T) -> T {
        let saved = self.prefix.len();
        if !self.prefix.is_empty() {
            self.prefix.push('.');
        }
        self.prefix.push_str(name);
        let out = f(self);
        self.prefix.truncate(saved);
        out
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn rng_for(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(fnv1a(self.full(name).as_bytes(), self.seed))
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> ParamId {
        let mut rng = self.rng_for(name);
        let t = Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound));
        self.store.insert(self.full(name), t)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.store.insert(self.full(name), Tensor::full(shape, value))
    }

    pub fn tensor(&mut self, name: &str, value: Tensor) -> ParamId {
        self.store.insert(self.full(name), value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_keyed_by_name_not_order() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        {
            let mut pa = ParamBuilder::new(&mut a, 3);
            pa.scope("x", |p| p.uniform("w", &[4], 1.0));
            pa.uniform("y", &[4], 1.0);
        }
        {
            let mut pb = ParamBuilder::new(&mut b, 3);
            pb.uniform("y", &[4], 1.0);
            pb.scope("x", |p| p.uniform("w", &[4], 1.0));
        }
        for name in ["x.w", "y"] {
            assert_eq!(a.get(a.id(name).unwrap()), b.get(b.id(name).unwrap()));
        }
        assert_ne!(a.get(a.id("x.w").unwrap()), a.get(a.id("y").unwrap()));
    }

    #[test]
    fn load_checks_shapes() {
        let mut a = ParamStore::new();
        ParamBuilder::new(&mut a, 0).constant("w", &[2, 3], 1.0);
        assert!(a.load_from(&[("w".into(), Tensor::zeros(&[3, 2]))]).is_err());
        assert!(a.load_from(&[("v".into(), Tensor::zeros(&[2, 3]))]).is_err());
        a.load_from(&[("w".into(), Tensor::zeros(&[2, 3]))]).unwrap();
        assert_eq!(a.numel(), 6);
    }
}
