//! Central-difference gradient verification.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative error used for all gradient comparisons:
/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| relative_error(x, y)).fold(0.0, f64::max)
}

/// Central-difference gradient of a plain scalar function.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let hi = f(&probe);
            probe[i] = orig - eps;
            let lo = f(&probe);
            probe[i] = orig;
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

/// Compares the reverse-mode gradient of `f` at `x` with central differences
/// of step `eps`, returning the largest per-coordinate relative error.
///
/// `f` receives a fresh graph and the leaf holding `x`, and must return a
/// scalar node.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, NodeId) -> Result<NodeId>,
{
    if !(eps > 0.0) {
        return Err(Error::contract("grad_check step must be positive"));
    }
    let mut g = Graph::new();
    let leaf = g.leaf(x.clone());
    let root = f(&mut g, leaf)?;
    g.backward(root)?;
    let analytic = g.grad_or_zero(leaf).into_data();

    let eval = |values: &[f64]| -> Result<f64> {
        let mut g = Graph::new();
        let leaf = g.leaf(Tensor::new(x.shape().to_vec(), values.to_vec())?);
        let root = f(&mut g, leaf)?;
        Ok(g.value(root).item())
    };
    let mut probe = x.data().to_vec();
    let mut numeric = Vec::with_capacity(probe.len());
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let hi = eval(&probe)?;
        probe[i] = orig - eps;
        let lo = eval(&probe)?;
        probe[i] = orig;
        numeric.push((hi - lo) / (2.0 * eps));
    }
    Ok(max_relative_error(&analytic, &numeric))
}
