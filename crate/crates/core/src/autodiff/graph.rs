//! Tape of recorded operations and its reverse sweep.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Affine { x: Var, w: Var, b: Var },
    Act(Var, Activation),
    Concat { a: Var, b: Var, axis: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Exp(Var),
    Square(Var),
    Sum(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    // empty for parameter nodes, whose value lives in the store
    value: Tensor,
}

/// Append-only record of tensor operations. Nodes are stored in creation
/// order, which is a topological order.
#[derive(Debug, Clone)]
pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Reverse-mode gradients of a scalar loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to a node, `None` if the loss does not depend
    /// on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// One gradient per stored parameter; unused parameters get zeros.
    pub fn into_param_grads(self, store: &ParamStore) -> Vec<Tensor> {
        store
            .tensors()
            .iter()
            .zip(self.params.into_iter().chain(core::iter::repeat(None)))
            .map(|(p, g)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    }
}

impl<'p> Graph<'p> {
    /// Graph without trainable parameters.
    pub fn new() -> Self {
        Graph {
            params: None,
            nodes: Vec::new(),
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Graph {
            params: Some(store),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.expect("parameter node without store").get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    /// Leaf bound to a stored parameter.
    ///
    /// # Panics
    /// If the graph was built without a parameter store or `id` is unknown.
    pub fn param(&mut self, id: ParamId) -> Var {
        let store = self.params.expect("graph has no parameter store");
        assert!(id.0 < store.len(), "unknown parameter {id:?}");
        self.push(Op::Param(id), Tensor::zeros(&[0]))
    }

    /// `x·W + b` for `x` of shape `[in]` or `[batch, in]`, `W: [in, out]`,
    /// `b: [out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if ws.len() != 2 {
            return Err(Error::shape("affine weight rank", 2, ws.len()));
        }
        let (fan_in, fan_out) = (ws[0], ws[1]);
        let batch = match xs {
            [n] if *n == fan_in => None,
            [m, n] if *n == fan_in => Some(*m),
            _ => return Err(Error::shape("affine input", [fan_in], xs)),
        };
        if bs != [fan_out] {
            return Err(Error::shape("affine bias", [fan_out], bs));
        }
        let rows = batch.unwrap_or(1);
        let bias = self.value(b).data();
        let mut out = Vec::with_capacity(rows * fan_out);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        matmul_acc(self.value(x).data(), self.value(w).data(), &mut out, rows, fan_in, fan_out);
        let shape = match batch {
            Some(m) => vec![m, fan_out],
            None => vec![fan_out],
        };
        Ok(self.push(Op::Affine { x, w, b }, Tensor::new(shape, out)?))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let y = match kind {
            Activation::Relu => self.value(x).map(|v| v.max(0.0)),
            Activation::Tanh => self.value(x).map(libm::tanh),
        };
        self.push(Op::Act(x, kind), y)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    /// Joins two tensors along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() || axis >= sa.len() {
            return Err(Error::shape("concat rank", sa, sb));
        }
        if sa.iter().zip(sb).enumerate().any(|(k, (x, y))| k != axis && x != y) {
            return Err(Error::shape("concat off-axis dimensions", sa, sb));
        }
        let mut shape = sa.to_vec();
        shape[axis] += sb[axis];
        let outer: usize = sa[..axis].iter().product();
        let ca: usize = sa[axis..].iter().product();
        let cb: usize = sb[axis..].iter().product();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(da.len() + db.len());
        for o in 0..outer {
            out.extend_from_slice(&da[o * ca..(o + 1) * ca]);
            out.extend_from_slice(&db[o * cb..(o + 1) * cb]);
        }
        Ok(self.push(Op::Concat { a, b, axis }, Tensor::new(shape, out)?))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(what, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), t))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), t))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x).map(|v| c * v);
        self.push(Op::Scale(x, c), t)
    }

    /// Adds a constant to every entry.
    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x).map(|v| v + c);
        self.push(Op::Shift(x), t)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.value(x).map(libm::exp);
        self.push(Op::Exp(x), t)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v * v);
        self.push(Op::Square(x), t)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, t)
    }

    /// Exact reverse-mode gradients of the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(alloc::format!("{:?}", lt.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut params: Vec<Option<Tensor>> = vec![None; self.params.map_or(0, ParamStore::len)];
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => accumulate(&mut params[id.0], g.clone()),
                Op::Affine { x, w, b } => {
                    let (tx, tw) = (self.value(x), self.value(w));
                    let (fan_in, fan_out) = (tw.shape()[0], tw.shape()[1]);
                    let rows = tx.len() / fan_in;
                    let mut gx = Tensor::zeros(tx.shape());
                    matmul_nt_acc(g.data(), tw.data(), gx.data_mut(), rows, fan_in, fan_out);
                    let mut gw = Tensor::zeros(tw.shape());
                    matmul_tn_acc(tx.data(), g.data(), gw.data_mut(), rows, fan_in, fan_out);
                    let mut gb = Tensor::zeros(&[fan_out]);
                    for r in 0..rows {
                        for (o, v) in gb.data_mut().iter_mut().zip(&g.data()[r * fan_out..(r + 1) * fan_out]) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[w.0], gw);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Act(x, kind) => {
                    let y = &self.nodes[i].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| match kind {
                            Activation::Tanh => gv * (1.0 - yv * yv),
                            Activation::Relu => {
                                if yv > 0.0 {
                                    gv
                                } else {
                                    0.0
                                }
                            }
                        })
                        .collect();
                    accumulate(&mut grads[x.0], Tensor::new(y.shape().to_vec(), data)?);
                }
                Op::Concat { a, b, axis } => {
                    let (sa, sb) = (self.shape(a), self.shape(b));
                    let outer: usize = sa[..axis].iter().product();
                    let ca: usize = sa[axis..].iter().product();
                    let cb: usize = sb[axis..].iter().product();
                    let mut ga = Vec::with_capacity(outer * ca);
                    let mut gb = Vec::with_capacity(outer * cb);
                    for o in 0..outer {
                        let block = &g.data()[o * (ca + cb)..(o + 1) * (ca + cb)];
                        ga.extend_from_slice(&block[..ca]);
                        gb.extend_from_slice(&block[ca..]);
                    }
                    let (ga, gb) = (Tensor::new(sa.to_vec(), ga)?, Tensor::new(sb.to_vec(), gb)?);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone());
                    accumulate(&mut grads[b.0], g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[b.0], g.map(|v| -v));
                    accumulate(&mut grads[a.0], g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&g, self.value(b), |gv, bv| gv * bv);
                    let gb = elementwise(&g, self.value(a), |gv, av| gv * av);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Scale(x, c) => accumulate(&mut grads[x.0], g.map(|v| c * v)),
                Op::Shift(x) => accumulate(&mut grads[x.0], g.clone()),
                Op::Exp(x) => {
                    let gx = elementwise(&g, &self.nodes[i].value, |gv, yv| gv * yv);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Square(x) => {
                    let gx = elementwise(&g, self.value(x), |gv, xv| 2.0 * gv * xv);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Sum(x) => {
                    let gv = g.data()[0];
                    accumulate(&mut grads[x.0], Tensor::full(self.shape(x), gv));
                }
                Op::Clamp { x, lo, hi } => {
                    let gx = elementwise(&g, self.value(x), |gv, xv| if xv > lo && xv < hi { gv } else { 0.0 });
                    accumulate(&mut grads[x.0], gx);
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { nodes: grads, params })
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked at record time")
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
