//! Named parameter storage shared between forward passes and the optimizer.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use crate::Tensor;

static NEXT_STORE: AtomicU32 = AtomicU32::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    store: u32,
    index: u32,
}

impl ParamId {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl ParamEntry {
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Ordered parameter collection. Insertion order is the serialization order.
#[derive(Clone, Debug)]
pub struct ParamStore {
    uid: u32,
    entries: Vec<ParamEntry>,
    trainable: bool,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new(true)
    }
}

impl ParamStore {
    pub fn new(trainable: bool) -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            entries: Vec::new(),
            trainable,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> ParamId {
        let name = name.into();
        assert_eq!(data.len(), crate::numel(shape), "parameter {name} has wrong length");
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        let id = ParamId {
            store: self.uid,
            index: self.entries.len() as u32,
        };
        self.entries.push(ParamEntry {
            name,
            shape: shape.to_vec(),
            data: Arc::new(data),
        });
        id
    }

    fn check(&self, id: ParamId) -> usize {
        assert_eq!(id.store, self.uid, "parameter id belongs to another store");
        id.index()
    }

    /// Leaf tensor viewing the parameter. It requires a gradient only when
    /// the store is trainable and recording is enabled.
    pub fn tensor(&self, id: ParamId) -> Tensor {
        let e = &self.entries[self.check(id)];
        Tensor::param_leaf(Arc::clone(&e.data), &e.shape, id, self.trainable)
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.entries[self.check(id)].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        let i = self.check(id);
        Arc::make_mut(&mut self.entries[i].data)
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[self.check(id)].shape
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[self.check(id)].name
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(move |i| ParamId {
            store: self.uid,
            index: i as u32,
        })
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(|i| ParamId {
            store: self.uid,
            index: i as u32,
        })
    }

    /// Replaces every value from another store with identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<(), String> {
        if other.entries.len() != self.entries.len() {
            return Err(format!(
                "parameter count mismatch: {} vs {}",
                other.entries.len(),
                self.entries.len()
            ));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(format!(
                    "parameter mismatch: {} {:?} vs {} {:?}",
                    dst.name, dst.shape, src.name, src.shape
                ));
            }
            dst.data = Arc::clone(&src.data);
        }
        Ok(())
    }
}
