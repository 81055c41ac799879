use std::collections::BTreeMap;

use crate::{GraphError, ParamId, ParamStore, Result, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) struct BackwardCtx<'a> {
    pub grad: &'a Tensor,
    pub inputs: Vec<&'a Tensor>,
    pub needs: Vec<bool>,
}

pub(crate) type BackwardFn = Box<dyn Fn(&BackwardCtx) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Tape of one forward pass.
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: BTreeMap<ParamId, Var>,
    grad_enabled: bool,
    training: bool,
    buffer_updates: Vec<(ParamId, Tensor)>,
}

impl Graph {
    /// A graph that records gradients. `training` selects batch statistics
    /// in normalization layers.
    pub fn new(training: bool) -> Self {
        Graph {
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
            grad_enabled: true,
            training,
            buffer_updates: Vec::new(),
        }
    }

    /// An inference graph: no backward closures are kept.
    pub fn inference() -> Self {
        Graph { grad_enabled: false, ..Graph::new(false) }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    /// Leaf that receives a gradient (used for input sensitivity checks).
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        let rg = self.grad_enabled;
        self.leaf(t, rg)
    }

    /// Brings a stored parameter into the tape. Repeated calls with the same
    /// id return the same node, so shared weights accumulate gradients.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let rg = self.grad_enabled && store.is_trainable(id);
        let v = self.leaf(store.get(id).clone(), rg);
        self.param_vars.insert(id, v);
        v
    }

    /// Parameters referenced so far by this pass.
    pub fn params_used(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.param_vars.keys().copied()
    }

    fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: t, parents: Vec::new(), backward: None, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor, parents: &[Var], backward: BackwardFn) -> Var {
        let requires_grad = self.grad_enabled && parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            parents: parents.to_vec(),
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a running-statistics update produced in training mode.
    pub(crate) fn queue_buffer_update(&mut self, id: ParamId, value: Tensor) {
        self.buffer_updates.push((id, value));
    }

    /// Drains pending running-statistics updates so the caller can apply them.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.buffer_updates)
    }

    /// Back-propagates from a single-element node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(GraphError::Shape(format!(
                "backward needs a scalar, got {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut leaf_grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let Some(bw) = &node.backward else {
                leaf_grads[i] = Some(g);
                continue;
            };
            let ctx = BackwardCtx {
                grad: &g,
                inputs: node.parents.iter().map(|p| &self.nodes[p.0].value).collect(),
                needs: node.parents.iter().map(|p| self.nodes[p.0].requires_grad).collect(),
            };
            let pgrads = bw(&ctx);
            debug_assert_eq!(pgrads.len(), node.parents.len());
            for (p, pg) in node.parents.iter().zip(pgrads) {
                let Some(pg) = pg else { continue };
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), self.nodes[p.0].value.shape(), "grad shape");
                match &mut grads[p.0] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { leaf: leaf_grads, params: self.param_vars.clone() })
    }
}

/// Gradients of the leaves of a graph.
pub struct Gradients {
    leaf: Vec<Option<Tensor>>,
    params: BTreeMap<ParamId, Var>,
}

impl Gradients {
    /// Gradient of a leaf created by [`Graph::input_with_grad`] or
    /// [`Graph::param`]; `None` if it did not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.leaf.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id).and_then(|v| self.get(*v))
    }

    /// Gradient for every parameter that received one, in id order.
    pub fn params(&self) -> Vec<(ParamId, &Tensor)> {
        self.params.iter().filter_map(|(id, v)| self.get(*v).map(|g| (*id, g))).collect()
    }
}
