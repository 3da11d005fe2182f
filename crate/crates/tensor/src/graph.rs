use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::params::ParamId;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Disables graph recording on the current thread until dropped.
pub struct NoGradGuard {
    prev: bool,
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    NoGradGuard { prev }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Computes parent gradients from the output gradient. The flag slice says
/// which parents actually need one; entries for the others may be `None`.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    param: Option<ParamId>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

#[derive(Clone)]
pub struct Tensor(Arc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish_non_exhaustive()
    }
}

impl Tensor {
    fn build(
        data: Arc<Vec<f64>>,
        shape: Vec<usize>,
        requires_grad: bool,
        param: Option<ParamId>,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Self {
        assert_eq!(
            data.len(),
            crate::numel(&shape),
            "data length does not match shape {shape:?}"
        );
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            param,
            parents,
            backward,
        }))
    }

    /// Constant tensor (never requires a gradient).
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Self {
        Self::build(Arc::new(data), shape.to_vec(), false, None, Vec::new(), None)
    }

    /// Leaf that collects a gradient in [`Tensor::backward`].
    pub fn leaf(data: Vec<f64>, shape: &[usize]) -> Self {
        Self::build(
            Arc::new(data),
            shape.to_vec(),
            grad_enabled(),
            None,
            Vec::new(),
            None,
        )
    }

    pub(crate) fn param_leaf(data: Arc<Vec<f64>>, shape: &[usize], id: ParamId, trainable: bool) -> Self {
        Self::build(
            data,
            shape.to_vec(),
            trainable && grad_enabled(),
            Some(id),
            Vec::new(),
            None,
        )
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(vec![0.0; crate::numel(shape)], shape)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::from_vec(vec![value; crate::numel(shape)], shape)
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(vec![value], &[])
    }

    /// Result of an op. Records the graph only when something upstream needs
    /// a gradient.
    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: &[&Tensor],
        backward: impl FnOnce() -> BackwardFn,
    ) -> Self {
        let record = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if record {
            Self::build(
                Arc::new(data),
                shape,
                true,
                None,
                parents.iter().map(|&p| p.clone()).collect(),
                Some(backward()),
            )
        } else {
            Self::build(Arc::new(data), shape, false, None, Vec::new(), None)
        }
    }

    pub(crate) fn with_shared_data(&self, shape: Vec<usize>, parents: &[&Tensor], backward: impl FnOnce() -> BackwardFn) -> Self {
        let record = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if record {
            Self::build(
                Arc::clone(&self.0.data),
                shape,
                true,
                None,
                parents.iter().map(|&p| p.clone()).collect(),
                Some(backward()),
            )
        } else {
            Self::build(Arc::clone(&self.0.data), shape, false, None, Vec::new(), None)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.0.data)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.as_ref().clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn param(&self) -> Option<ParamId> {
        self.0.param
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    /// Same values with no graph attached.
    pub fn detach(&self) -> Tensor {
        Self::build(
            Arc::clone(&self.0.data),
            self.0.shape.clone(),
            false,
            None,
            Vec::new(),
            None,
        )
    }

    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        match *self.shape() {
            [n, c, h, w] => (n, c, h, w),
            ref s => panic!("expected a rank-4 tensor, got shape {s:?}"),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }

    /// Back-propagates from this tensor, seeding its gradient with ones
    /// (i.e. differentiating the sum of its elements).
    pub fn backward(&self) -> Gradients {
        let mut grads = Gradients::default();
        if !self.requires_grad() {
            return grads;
        }
        let order = topo_order(self);
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0; self.numel()]);
        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.id()) else {
                continue;
            };
            match &node.0.backward {
                None => grads.insert(node, g),
                Some(bw) => {
                    let needs: Vec<bool> = node.0.parents.iter().map(Tensor::requires_grad).collect();
                    let parent_grads = bw(&g, &needs);
                    debug_assert_eq!(parent_grads.len(), node.0.parents.len());
                    for ((parent, pg), need) in node.0.parents.iter().zip(parent_grads).zip(needs) {
                        let (true, Some(pg)) = (need, pg) else {
                            continue;
                        };
                        debug_assert_eq!(pg.len(), parent.numel());
                        match pending.get_mut(&parent.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(parent.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        grads
    }
}

fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.id()) {
            continue;
        }
        stack.push((t.clone(), true));
        for p in &t.0.parents {
            if p.requires_grad() && !visited.contains(&p.id()) {
                stack.push((p.clone(), false));
            }
        }
    }
    order
}

/// Leaf gradients produced by [`Tensor::backward`].
#[derive(Default, Debug)]
pub struct Gradients {
    by_id: HashMap<u64, Vec<f64>>,
    by_param: HashMap<ParamId, Vec<f64>>,
}

impl Gradients {
    fn insert(&mut self, leaf: &Tensor, g: Vec<f64>) {
        if let Some(pid) = leaf.param() {
            match self.by_param.get_mut(&pid) {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => {
                    self.by_param.insert(pid, g.clone());
                }
            }
        }
        self.by_id.insert(leaf.id(), g);
    }

    /// Gradient for a leaf tensor created with [`Tensor::leaf`] or from a store.
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.by_id.get(&t.id()).map(Vec::as_slice)
    }

    /// Gradient summed over every leaf that referenced the parameter.
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(&id).map(Vec::as_slice)
    }
}
