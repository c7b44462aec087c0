//! Recurrent cells, dense layers, and scaled dot-product attention built on
//! the autodiff graph.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numeric::{Bound, Graph, NodeId, ParamRef, ParamStore, Tensor};
use crate::rng::Rng;

fn uniform(rng: &mut Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data)
}

/// Affine map `x W + b` on `n x in` inputs.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamRef,
    pub b: ParamRef,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            w: store.add(format!("{name}.w"), uniform(rng, input, output, bound)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, output])),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: NodeId) -> Result<NodeId> {
        let xw = g.matmul(x, p[self.w])?;
        g.add_row(xw, p[self.b])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    SimpleRnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::SimpleRnn => "rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rnn" | "simple" => Ok(CellKind::SimpleRnn),
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::Config(format!("unknown cell `{other}`"))),
        }
    }

    fn gates(self) -> usize {
        match self {
            CellKind::SimpleRnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }
}

/// Hidden state of a recurrent cell; `c` is only used by LSTM.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: NodeId,
    pub c: Option<NodeId>,
}

/// One gate's input weights, recurrent weights and bias.
#[derive(Clone, Debug)]
struct Gate {
    w: ParamRef,
    u: ParamRef,
    b: ParamRef,
}

impl Gate {
    fn pre(&self, g: &mut Graph, p: &Bound, x: NodeId, h: NodeId) -> Result<NodeId> {
        let xw = g.matmul(x, p[self.w])?;
        let hu = g.matmul(h, p[self.u])?;
        let s = g.add(xw, hu)?;
        g.add(s, p[self.b])
    }
}

/// SimpleRNN: `h' = tanh(x W + h U + b)`.
///
/// GRU: `z = s(x Wz + h Uz + bz)`, `r = s(x Wr + h Ur + br)`,
/// `n = tanh(x Wn + (r * h) Un + bn)`, `h' = h + z * (n - h)`.
///
/// LSTM: input, forget, output gates and a tanh candidate; the exposed hidden
/// state is `h = o * tanh(c)`.
#[derive(Clone, Debug)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    gates: Vec<Gate>,
}

impl RecurrentCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        input_dim: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let labels: &[&str] = match kind {
            CellKind::SimpleRnn => &["h"],
            CellKind::Gru => &["z", "r", "n"],
            CellKind::Lstm => &["i", "f", "o", "g"],
        };
        debug_assert_eq!(labels.len(), kind.gates());
        let gates = labels
            .iter()
            .map(|l| Gate {
                w: store.add(format!("{name}.{l}.w"), uniform(rng, input_dim, hidden, bound)),
                u: store.add(format!("{name}.{l}.u"), uniform(rng, hidden, hidden, bound)),
                b: store.add(format!("{name}.{l}.b"), Tensor::zeros(&[1, hidden])),
            })
            .collect();
        RecurrentCell {
            kind,
            input_dim,
            hidden,
            gates,
        }
    }

    pub fn zero_state(&self, g: &mut Graph) -> CellState {
        let h = g.constant(Tensor::zeros(&[1, self.hidden]));
        let c = (self.kind == CellKind::Lstm).then(|| g.constant(Tensor::zeros(&[1, self.hidden])));
        CellState { h, c }
    }

    pub fn step(&self, g: &mut Graph, p: &Bound, x: NodeId, s: CellState) -> Result<CellState> {
        if g.shape(x) != [1, self.input_dim] {
            return Err(Error::Dimension {
                op: "recurrent step",
                left: g.shape(x).to_vec(),
                right: vec![1, self.input_dim],
            });
        }
        let h = s.h;
        match self.kind {
            CellKind::SimpleRnn => {
                let a = self.gates[0].pre(g, p, x, h)?;
                Ok(CellState { h: g.tanh(a), c: None })
            }
            CellKind::Gru => {
                let (gz, gr, gn) = (&self.gates[0], &self.gates[1], &self.gates[2]);
                let za = gz.pre(g, p, x, h)?;
                let z = g.sigmoid(za);
                let ra = gr.pre(g, p, x, h)?;
                let r = g.sigmoid(ra);
                let rh = g.mul(r, h)?;
                let na = gn.pre(g, p, x, rh)?;
                let n = g.tanh(na);
                let diff = g.sub(n, h)?;
                let upd = g.mul(z, diff)?;
                Ok(CellState {
                    h: g.add(h, upd)?,
                    c: None,
                })
            }
            CellKind::Lstm => {
                let c = s.c.ok_or_else(|| Error::contract("LSTM step needs a cell state"))?;
                let ia = self.gates[0].pre(g, p, x, h)?;
                let i = g.sigmoid(ia);
                let fa = self.gates[1].pre(g, p, x, h)?;
                let f = g.sigmoid(fa);
                let oa = self.gates[2].pre(g, p, x, h)?;
                let o = g.sigmoid(oa);
                let ca = self.gates[3].pre(g, p, x, h)?;
                let cand = g.tanh(ca);
                let keep = g.mul(f, c)?;
                let write = g.mul(i, cand)?;
                let c2 = g.add(keep, write)?;
                let tc = g.tanh(c2);
                let h2 = g.mul(o, tc)?;
                Ok(CellState { h: h2, c: Some(c2) })
            }
        }
    }
}

/// Scaled dot-product attention weights of `query` (`1 x d`) over the rows of
/// `keys` (`t x d`), as a `t x 1` column.
pub fn attention_weights_node(g: &mut Graph, query: NodeId, keys: NodeId) -> Result<NodeId> {
    let d = g.shape(keys)[1] as f64;
    let qt = g.transpose(query)?;
    let scores = g.matmul(keys, qt)?;
    let scaled = g.scale(scores, 1.0 / d.sqrt());
    g.softmax(scaled, 0)
}

/// Attention context `weights^T keys` (`1 x d`) and the weights themselves.
pub fn attend(g: &mut Graph, query: NodeId, keys: NodeId) -> Result<(NodeId, NodeId)> {
    let w = attention_weights_node(g, query, keys)?;
    let wt = g.transpose(w)?;
    Ok((g.matmul(wt, keys)?, w))
}

/// Softmax-normalised scaled dot-product scores of `decoder_state` against
/// each encoder state.
pub fn attention_weights(decoder_state: &[f64], encoder_states: &[Vec<f64>]) -> Result<Vec<f64>> {
    if encoder_states.is_empty() {
        return Err(Error::contract("attention needs at least one encoder state"));
    }
    let mut g = Graph::new();
    let q = g.constant(Tensor::row_vector(decoder_state.to_vec()));
    let k = g.constant(Tensor::from_rows(encoder_states)?);
    let w = attention_weights_node(&mut g, q, k)?;
    Ok(g.value(w).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::grad_check;
    use crate::rng;

    fn rand_row(r: &mut Rng, n: usize) -> Tensor {
        Tensor::row_vector((0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn attention_examples() {
        assert_eq!(attention_weights(&[0.3, 0.1], &[vec![1.0, 2.0]]).unwrap(), vec![1.0]);
        let same = vec![vec![1.0, 0.0]; 4];
        let w = attention_weights(&[0.5, 0.5], &same).unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let mut r = rng::stream(2, "att");
        for _ in 0..20 {
            let states: Vec<Vec<f64>> = (0..5).map(|_| rand_row(&mut r, 3).into_data()).collect();
            let w = attention_weights(&rand_row(&mut r, 3).into_data(), &states).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
        assert!(attention_weights(&[1.0], &[]).is_err());
    }

    #[test]
    fn cell_steps_match_finite_differences() {
        for kind in [CellKind::SimpleRnn, CellKind::Gru, CellKind::Lstm] {
            let mut r = rng::stream(9, kind.name());
            let mut store = ParamStore::new();
            let cell = RecurrentCell::new(&mut store, "c", kind, 3, 4, &mut r);
            let h0 = rand_row(&mut r, 4);
            let c0 = rand_row(&mut r, 4);
            let x = rand_row(&mut r, 3);
            // gradient with respect to the input
            let err = grad_check(
                |g, x| {
                    let p = store.bind(g);
                    let h = g.constant(h0.clone());
                    let c = (kind == CellKind::Lstm).then(|| g.constant(c0.clone()));
                    let s = cell.step(g, &p, x, CellState { h, c })?;
                    let t = g.tanh(s.h);
                    Ok(g.sum(t))
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{kind:?} input {err}");
        }
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut r = rng::stream(1, "w");
        let mut store = ParamStore::new();
        let cell = RecurrentCell::new(&mut store, "c", CellKind::Gru, 3, 2, &mut r);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let s = cell.zero_state(&mut g);
        let x = g.constant(Tensor::zeros(&[1, 5]));
        assert!(matches!(cell.step(&mut g, &p, x, s), Err(Error::Dimension { .. })));
    }
}
