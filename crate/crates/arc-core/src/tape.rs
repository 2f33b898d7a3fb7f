//! Eager reverse-mode automatic differentiation on a Wengert list.
//!
//! Recording an op computes its value immediately and appends one node, so
//! the tape doubles as the forward pass. `backward` walks the list once in
//! reverse from a scalar root and accumulates gradients into every node,
//! including leaves. Leaves are used both for parameters and for inputs:
//! differentiating a loss with respect to an *input slot* (the protagonist
//! action fed to the adversary) uses exactly the same mechanism as
//! differentiating with respect to a weight matrix.
//!
//! Nodes reference only earlier nodes, so a single reverse sweep in index
//! order is a valid topological order; a value used twice receives the sum
//! of both path contributions.

use alloc::vec;
use alloc::vec::Vec;

use crate::nn::Activation;
use crate::tensor::{self, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// Matrix plus a column vector added to every column.
    AddColBroadcast(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product.
    Mul(Var, Var),
    /// Elementwise quotient.
    Div(Var, Var),
    Scale(Var, f64),
    /// Add a scalar constant elementwise; gradient passes through.
    AddConst(Var),
    Neg(Var),
    Abs(Var),
    Square(Var),
    Ln(Var),
    Act(Var, Activation),
    /// Stack operands vertically (all must share a column count).
    ConcatRows(Vec<Var>),
    SumAll(Var),
    MeanAll(Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Errors surfaced by the tape; everything else is a programmer error and
/// panics via shape assertions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TapeError {
    /// `backward` was called on a node that is not 1x1.
    NonScalarRoot { rows: usize, cols: usize },
}

impl core::fmt::Display for TapeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TapeError::NonScalarRoot { rows, cols } => {
                write!(f, "backward root must be 1x1, got {rows}x{cols}")
            }
        }
    }
}

impl core::error::Error for TapeError {}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, if any path reached it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.slots[v.0].as_ref()
    }

    /// Like [`Gradients::get`] but moves the tensor out.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.slots[v.0].take()
    }

    /// Gradient for `v`, materialized as zeros when no path reached it.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Tensor {
        match self.slots[v.0].as_ref() {
            Some(t) => t.clone(),
            None => Tensor::zeros(rows, cols),
        }
    }
}

/// Wengert list of recorded operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value computed for `v` during recording.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Register a leaf (parameter or input). Gradients accumulate here.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = tensor::matmul(self.value(a), self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add_col_broadcast(&mut self, m: Var, bias: Var) -> Var {
        let v = tensor::add_col_broadcast(self.value(m), self.value(bias));
        self.push(Op::AddColBroadcast(m, bias), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = tensor::zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = tensor::zip(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = tensor::zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = tensor::zip(self.value(a), self.value(b), |x, y| x / y);
        self.push(Op::Div(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    /// Elementwise absolute value; subgradient 0 at the kink.
    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(crate::math::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        let v = self.value(a).map(|x| act.apply(x));
        self.push(Op::Act(a, act), v)
    }

    /// Stack operands vertically, in argument order.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows needs at least one part");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let v = Tensor::from_vec(rows, cols, data);
        self.push(Op::ConcatRows(parts.to_vec()), v)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let mut acc = 0.0;
        for &x in self.value(a).data() {
            acc += x;
        }
        self.push(Op::SumAll(a), Tensor::scalar(acc))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        let mut acc = 0.0;
        for &x in self.value(a).data() {
            acc += x;
        }
        self.push(Op::MeanAll(a), Tensor::scalar(acc / n as f64))
    }

    /// Reverse sweep from a scalar root. Returns one gradient slot per node;
    /// slots no path reached stay `None`.
    pub fn backward(&self, root: Var) -> Result<Gradients, TapeError> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(TapeError::NonScalarRoot { rows: rv.rows(), cols: rv.cols() });
        }
        let mut slots: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        slots[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = slots[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    // Terminal: keep the accumulated gradient readable.
                    slots[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = tensor::matmul_nt(&g, self.value(*b));
                    let db = tensor::matmul_tn(self.value(*a), &g);
                    accumulate(&mut slots, *a, da);
                    accumulate(&mut slots, *b, db);
                }
                Op::AddColBroadcast(m, bias) => {
                    let mut db = Tensor::zeros(g.rows(), 1);
                    for i in 0..g.rows() {
                        let mut acc = 0.0;
                        for &x in g.row(i) {
                            acc += x;
                        }
                        db.set(i, 0, acc);
                    }
                    accumulate(&mut slots, *m, g);
                    accumulate(&mut slots, *bias, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut slots, *a, g.clone());
                    accumulate(&mut slots, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut slots, *a, g.clone());
                    accumulate(&mut slots, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let da = tensor::zip(&g, self.value(*b), |gv, bv| gv * bv);
                    let db = tensor::zip(&g, self.value(*a), |gv, av| gv * av);
                    accumulate(&mut slots, *a, da);
                    accumulate(&mut slots, *b, db);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let da = tensor::zip(&g, bv, |gv, y| gv / y);
                    let av = self.value(*a);
                    let mut db = tensor::zip(av, bv, |x, y| -x / (y * y));
                    db = tensor::zip(&db, &g, |d, gv| d * gv);
                    accumulate(&mut slots, *a, da);
                    accumulate(&mut slots, *b, db);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut slots, *a, g.map(|x| c * x));
                }
                Op::AddConst(a) => {
                    accumulate(&mut slots, *a, g);
                }
                Op::Neg(a) => {
                    accumulate(&mut slots, *a, g.map(|x| -x));
                }
                Op::Abs(a) => {
                    let da = tensor::zip(&g, self.value(*a), |gv, x| {
                        if x > 0.0 {
                            gv
                        } else if x < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut slots, *a, da);
                }
                Op::Square(a) => {
                    let da = tensor::zip(&g, self.value(*a), |gv, x| 2.0 * x * gv);
                    accumulate(&mut slots, *a, da);
                }
                Op::Ln(a) => {
                    let da = tensor::zip(&g, self.value(*a), |gv, x| gv / x);
                    accumulate(&mut slots, *a, da);
                }
                Op::Act(a, act) => {
                    let da = match act {
                        Activation::Linear => g,
                        Activation::Relu6 => {
                            tensor::zip(&g, self.value(*a), |gv, x| {
                                if x > 0.0 && x < 6.0 {
                                    gv
                                } else {
                                    0.0
                                }
                            })
                        }
                        Activation::Tanh => {
                            tensor::zip(&g, &self.nodes[idx].value, |gv, y| gv * (1.0 - y * y))
                        }
                        Activation::Sigmoid => {
                            tensor::zip(&g, &self.nodes[idx].value, |gv, y| gv * y * (1.0 - y))
                        }
                        Activation::Softplus => {
                            tensor::zip(&g, self.value(*a), |gv, x| gv * crate::math::sigmoid(x))
                        }
                    };
                    accumulate(&mut slots, *a, da);
                }
                Op::ConcatRows(parts) => {
                    let mut row = 0;
                    for &p in parts {
                        let t = self.value(p);
                        let mut part = Tensor::zeros(t.rows(), t.cols());
                        for r in 0..t.rows() {
                            for c in 0..t.cols() {
                                part.set(r, c, g.get(row + r, c));
                            }
                        }
                        row += t.rows();
                        accumulate(&mut slots, p, part);
                    }
                }
                Op::SumAll(a) => {
                    let gv = g.item();
                    let t = self.value(*a);
                    accumulate(&mut slots, *a, t.map(|_| gv));
                }
                Op::MeanAll(a) => {
                    let t = self.value(*a);
                    let gv = g.item() / t.len() as f64;
                    accumulate(&mut slots, *a, t.map(|_| gv));
                }
            }
        }
        Ok(Gradients { slots })
    }
}

fn accumulate(slots: &mut [Option<Tensor>], v: Var, delta: Tensor) {
    match &mut slots[v.0] {
        Some(t) => t.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_layer_gradients_match_hand_derivation() {
        // y = sum(W x + b) with W = [[1, 2], [3, 4]], x = [5, 6], b = [0.5, -0.5]
        let mut t = Tape::new();
        let w = t.leaf(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let x = t.leaf(Tensor::col_vec(&[5.0, 6.0]));
        let b = t.leaf(Tensor::col_vec(&[0.5, -0.5]));
        let wx = t.matmul(w, x);
        let y = t.add(wx, b);
        let loss = t.sum_all(y);
        assert_eq!(t.value(loss).item(), 17.5 + 38.5);

        let g = t.backward(loss).unwrap();
        // dL/dW = 1 * x^T broadcast to each row.
        assert_eq!(g.get(w).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
        // dL/dx = W^T * 1 = [1+3, 2+4].
        assert_eq!(g.get(x).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(g.get(b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn reused_value_accumulates_both_paths() {
        // loss = x*x + 3x => d/dx = 2x + 3 at x = 4 gives 11.
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(4.0));
        let sq = t.mul(x, x);
        let lin = t.scale(x, 3.0);
        let loss = t.add(sq, lin);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 11.0);
    }

    #[test]
    fn division_gradients() {
        // loss = a / b at a = 1, b = 4: da = 1/4, db = -1/16.
        let mut t = Tape::new();
        let a = t.leaf(Tensor::scalar(1.0));
        let b = t.leaf(Tensor::scalar(4.0));
        let loss = t.div(a, b);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap().item(), 0.25);
        assert_eq!(g.get(b).unwrap().item(), -0.0625);
    }

    #[test]
    fn relu6_gate_blocks_saturated_units() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::col_vec(&[-1.0, 3.0, 7.0]));
        let y = t.activation(x, Activation::Relu6);
        assert_eq!(t.value(y).data(), &[0.0, 3.0, 6.0]);
        let s = t.sum_all(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn abs_subgradient_is_zero_at_kink() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::col_vec(&[-2.0, 0.0, 2.0]));
        let y = t.abs(x);
        let s = t.sum_all(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_rows_splits_gradient_back() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::col_vec(&[1.0, 2.0]));
        let b = t.leaf(Tensor::col_vec(&[3.0]));
        let cat = t.concat_rows(&[a, b]);
        assert_eq!(t.value(cat).data(), &[1.0, 2.0, 3.0]);
        // Weight each row differently so the split is observable.
        let w = t.leaf(Tensor::from_vec(1, 3, vec![10.0, 20.0, 30.0]));
        let y = t.matmul(w, cat);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[10.0, 20.0]);
        assert_eq!(g.get(b).unwrap().data(), &[30.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::col_vec(&[1.0, 2.0]));
        let y = t.scale(x, 2.0);
        assert_eq!(
            t.backward(y).err(),
            Some(TapeError::NonScalarRoot { rows: 2, cols: 1 })
        );
    }

    #[test]
    fn untouched_nodes_have_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.0));
        let unused = t.leaf(Tensor::scalar(9.0));
        let loss = t.square(x);
        let g = t.backward(loss).unwrap();
        assert!(g.get(unused).is_none());
    }

    #[test]
    fn tape_error_display_names_the_shape() {
        let e = TapeError::NonScalarRoot { rows: 2, cols: 3 };
        assert_eq!(alloc::format!("{e}"), "backward root must be 1x1, got 2x3");
    }
}
