use std::ops::Index;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to one tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamRef(usize);

/// Ordered, named trainable tensors of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

/// Graph leaves for every parameter of a store, in store order.
pub struct Bound(Vec<NodeId>);

impl Index<ParamRef> for Bound {
    type Output = NodeId;
    fn index(&self, r: ParamRef) -> &NodeId {
        &self.0[r.0]
    }
}

impl Bound {
    pub fn ids(&self) -> &[NodeId] {
        &self.0
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamRef {
        self.entries.push((name.into(), value));
        ParamRef(self.entries.len() - 1)
    }

    pub fn get(&self, r: ParamRef) -> &Tensor {
        &self.entries[r.0].1
    }

    pub fn get_mut(&mut self, r: ParamRef) -> &mut Tensor {
        &mut self.entries[r.0].1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Adds every parameter to `graph` as a differentiable leaf.
    pub fn bind(&self, graph: &mut Graph) -> Bound {
        Bound(self.entries.iter().map(|(_, t)| graph.leaf(t.clone())).collect())
    }

    /// Binds every parameter except `r`, which is taken from `node`. Used to
    /// differentiate a model with respect to one parameter tensor.
    pub fn bind_replacing(&self, graph: &mut Graph, r: ParamRef, node: NodeId) -> Bound {
        Bound(
            self.entries
                .iter()
                .enumerate()
                .map(|(i, (_, t))| if i == r.0 { node } else { graph.constant(t.clone()) })
                .collect(),
        )
    }

    /// Handles of all parameters, in store order.
    pub fn refs(&self) -> impl Iterator<Item = ParamRef> {
        (0..self.entries.len()).map(ParamRef)
    }

    pub fn name(&self, r: ParamRef) -> &str {
        &self.entries[r.0].0
    }

    /// Adds every parameter as a constant (inference only).
    pub fn bind_frozen(&self, graph: &mut Graph) -> Bound {
        Bound(self.entries.iter().map(|(_, t)| graph.constant(t.clone())).collect())
    }

    /// Collects gradients for a bound store after `graph.backward`.
    pub fn gradients(&self, graph: &Graph, bound: &Bound) -> Vec<Tensor> {
        bound.0.iter().map(|&id| graph.grad_or_zero(id)).collect()
    }

    /// Replaces parameter values from `(name, tensor)` pairs, checking names and shapes.
    pub fn load(&mut self, blocks: &[(String, Tensor)]) -> Result<()> {
        if blocks.len() != self.entries.len() {
            return Err(Error::Format(format!(
                "expected {} parameter blocks, found {}",
                self.entries.len(),
                blocks.len()
            )));
        }
        for ((name, t), (bname, bt)) in self.entries.iter_mut().zip(blocks) {
            if name != bname || t.shape() != bt.shape() {
                return Err(Error::Format(format!(
                    "parameter block {bname} {:?} does not match {name} {:?}",
                    bt.shape(),
                    t.shape()
                )));
            }
            *t = bt.clone();
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<(String, Tensor)> {
        self.entries.clone()
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// First-order optimizer state for one [`ParamStore`].
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        debug_assert_eq!(grads.len(), store.len());
        self.t += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in store.tensors_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for (k, (p, g)) in store.tensors_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[i] = b1 * m[i] + (1.0 - b1) * d;
                        v[i] = b2 * v[i] + (1.0 - b2) * d * d;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        *w -= lr * mh / (vh.sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_joint_norm() {
        let mut g = vec![Tensor::row_vector(vec![3.0]), Tensor::row_vector(vec![4.0])];
        let n = clip_global_norm(&mut g, 1.0);
        assert!((n - 5.0).abs() < 1e-12);
        let after: f64 = g.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut store = ParamStore::new();
            store.add("w", Tensor::row_vector(vec![1.0, -2.0]));
            let before = store.clone();
            let mut opt = Optimizer::new(kind, 0.0, &store);
            opt.step(&mut store, &[Tensor::row_vector(vec![0.5, 0.5])]);
            assert_eq!(store, before);
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row_vector(vec![3.0]));
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, &store);
        for _ in 0..200 {
            let x = store.get(w).data()[0];
            opt.step(&mut store, &[Tensor::row_vector(vec![2.0 * x])]);
        }
        assert!(store.get(w).data()[0].abs() < 0.1);
    }
}
