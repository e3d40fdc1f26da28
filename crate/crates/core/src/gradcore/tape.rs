//! Reverse-mode tape with re-recordable backward passes.
//!
//! Every vector-Jacobian product is written once, generically over
//! [`Adjoint`]. Run eagerly on [`Tensor`]s it yields plain gradients; run on
//! [`Var`]s it appends the backward computation to the same tape, so the
//! resulting gradients can be differentiated again.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{contract, shape_err, Error, Result};
use crate::gradcore::{SparseMatrix, Tensor};
use crate::scalar::Scalar;

#[derive(Clone)]
enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, T),
    AddScalar(usize, T),
    ScaleBy(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    SpMM { m: Arc<SparseMatrix<T>>, mt: Arc<SparseMatrix<T>>, d: usize },
    SumAll(usize),
    Expand(usize, Vec<usize>),
    RowSum(usize),
    BroadcastCols(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    ScatterRows(usize, Rc<[usize]>, usize),
    Slice(usize, usize, Vec<usize>),
    Pad(usize, usize, usize),
    Reshape(usize, Vec<usize>),
    Sigmoid(usize),
    Tanh(usize),
    LeakyRelu(usize, T),
    MulConst(usize, Rc<Tensor<T>>),
    SoftmaxRows(usize),
    SoftmaxCe(usize, Rc<Tensor<T>>),
    SigmoidBce(usize, Rc<Tensor<T>>),
    L2Norm(usize),
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match *self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | ScaleBy(a, b) | MatMul(a, b) => {
                vec![a, b]
            }
            Scale(a, _) | AddScalar(a, _) | Transpose(a) | SumAll(a) | Expand(a, _)
            | RowSum(a) | BroadcastCols(a, _) | GatherRows(a, _) | ScatterRows(a, _, _)
            | Slice(a, _, _) | Pad(a, _, _) | Reshape(a, _) | Sigmoid(a) | Tanh(a)
            | LeakyRelu(a, _) | MulConst(a, _) | SoftmaxRows(a) | SoftmaxCe(a, _)
            | SigmoidBce(a, _) | L2Norm(a) => vec![a],
            SpMM { d, .. } => vec![d],
        }
    }
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Append-only record of a computation. Confined to one thread.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tape({} nodes)", self.len())
    }
}

/// A tensor recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    idx: usize,
}

impl<T: Scalar> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.idx, self.value())
    }
}

fn eval<T: Scalar>(op: &Op<T>, nodes: &[Node<T>]) -> Result<Tensor<T>> {
    use Op::*;
    let v = |i: usize| &nodes[i].value;
    match op {
        Leaf => Err(contract("leaves carry their own value")),
        Add(a, b) => v(*a).add(v(*b)),
        Sub(a, b) => v(*a).sub(v(*b)),
        Mul(a, b) => v(*a).hadamard(v(*b)),
        Div(a, b) => v(*a).div(v(*b)),
        Scale(a, c) => Ok(v(*a).scale(*c)),
        AddScalar(a, c) => Ok(v(*a).add_scalar(*c)),
        ScaleBy(a, s) => v(*a).scale_by(v(*s)),
        MatMul(a, b) => v(*a).matmul(v(*b)),
        Transpose(a) => v(*a).transpose(),
        SpMM { m, d, .. } => m.spmm(v(*d)),
        SumAll(a) => Ok(v(*a).sum_all()),
        Expand(a, shape) => v(*a).expand(shape),
        RowSum(a) => v(*a).row_sum(),
        BroadcastCols(a, c) => v(*a).broadcast_cols(*c),
        GatherRows(a, idx) => v(*a).gather_rows(idx),
        ScatterRows(a, idx, n) => v(*a).scatter_rows(idx, *n),
        Slice(a, off, shape) => v(*a).slice_flat(*off, shape),
        Pad(a, off, total) => v(*a).pad_flat(*off, *total),
        Reshape(a, shape) => v(*a).reshape(shape),
        Sigmoid(a) => Ok(v(*a).sigmoid()),
        Tanh(a) => Ok(v(*a).tanh()),
        LeakyRelu(a, s) => Ok(v(*a).leaky_relu(*s)),
        MulConst(a, c) => v(*a).hadamard(c),
        SoftmaxRows(a) => v(*a).softmax_rows(),
        SoftmaxCe(a, t) => {
            let z = v(*a);
            if z.shape() != t.shape() {
                return Err(shape_err("cross-entropy: logits and targets differ in shape"));
            }
            let lp = z.log_softmax_rows()?;
            let s = lp.data().iter().zip(t.data()).fold(T::zero(), |acc, (&l, &y)| acc + y * l);
            Ok(Tensor::scalar(-s))
        }
        SigmoidBce(a, t) => {
            let z = v(*a);
            if z.shape() != t.shape() {
                return Err(shape_err("bce: logits and targets differ in shape"));
            }
            // softplus(z) - t·z = -[t log σ(z) + (1-t) log(1-σ(z))]
            let s = z
                .data()
                .iter()
                .zip(t.data())
                .fold(T::zero(), |acc, (&x, &y)| acc + (super::tensor::softplus(x) - y * x));
            Ok(Tensor::scalar(s))
        }
        L2Norm(a) => Ok(Tensor::scalar(v(*a).l2_norm())),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op: Op::Leaf, value, requires_grad });
        Var { tape: self, idx: nodes.len() - 1 }
    }

    /// A differentiable input.
    pub fn var(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, true)
    }

    /// An input no gradient is tracked for.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_leaf(value, false)
    }

    fn record(&self, op: Op<T>) -> Result<Var<'_, T>> {
        let mut nodes = self.nodes.borrow_mut();
        let value = eval(&op, &nodes)?;
        let requires_grad = op.parents().iter().any(|&p| nodes[p].requires_grad);
        nodes.push(Node { op, value, requires_grad });
        Ok(Var { tape: self, idx: nodes.len() - 1 })
    }

    fn value_of(&self, idx: usize) -> Tensor<T> {
        self.nodes.borrow()[idx].value.clone()
    }

    fn shape_of(&self, idx: usize) -> Vec<usize> {
        self.nodes.borrow()[idx].value.shape().to_vec()
    }

    /// Recomputes every non-leaf node from its parents' recomputed values.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let nodes = self.nodes.borrow();
        let mut fresh: Vec<Node<T>> = Vec::with_capacity(nodes.len());
        for n in nodes.iter() {
            let value = match n.op {
                Op::Leaf => n.value.clone(),
                ref op => eval(op, &fresh)?,
            };
            fresh.push(Node { op: Op::Leaf, value, requires_grad: false });
        }
        Ok(fresh.into_iter().map(|n| n.value).collect())
    }

    fn check_owned(&self, v: &Var<'_, T>, what: &str) -> Result<()> {
        if std::ptr::eq(self, v.tape) {
            Ok(())
        } else {
            Err(Error::Detached(format!("{what} belongs to another tape")))
        }
    }

    fn check_scalar(&self, output: &Var<'_, T>) -> Result<()> {
        self.check_owned(output, "output")?;
        let n = self.nodes.borrow()[output.idx].value.len();
        if n != 1 {
            return Err(contract(format!("backward needs a scalar output, got {n} elements")));
        }
        Ok(())
    }

    /// Gradients of a scalar `output` with respect to each of `wrt`, as plain
    /// tensors. Inputs the output does not depend on get zero gradients.
    pub fn grad(&self, output: Var<'_, T>, wrt: &[Var<'_, T>]) -> Result<Vec<Tensor<T>>> {
        self.check_scalar(&output)?;
        for w in wrt {
            self.check_owned(w, "wrt input")?;
        }
        let seed = Tensor::ones(&self.shape_of(output.idx));
        let adj = accumulate(self, output.idx, seed);
        Ok(wrt
            .iter()
            .map(|w| match adj.get(w.idx).cloned().flatten() {
                Some(g) => g,
                None => Tensor::zeros(&self.shape_of(w.idx)),
            })
            .collect())
    }

    /// Like [`grad`](Self::grad) but records the backward pass, so the
    /// returned gradients are themselves differentiable.
    pub fn grad_graph<'t>(
        &'t self,
        output: Var<'t, T>,
        wrt: &[Var<'t, T>],
    ) -> Result<Vec<Var<'t, T>>> {
        self.check_scalar(&output)?;
        for w in wrt {
            self.check_owned(w, "wrt input")?;
        }
        let seed = self.constant(Tensor::ones(&self.shape_of(output.idx)));
        let adj = accumulate(self, output.idx, seed);
        Ok(wrt
            .iter()
            .map(|w| match adj.get(w.idx).cloned().flatten() {
                Some(g) => g,
                None => self.constant(Tensor::zeros(&self.shape_of(w.idx))),
            })
            .collect())
    }

    /// Dispatches to [`grad_graph`](Self::grad_graph) or, without
    /// `create_graph`, wraps the plain gradients as constants.
    pub fn backward<'t>(
        &'t self,
        output: Var<'t, T>,
        wrt: &[Var<'t, T>],
        create_graph: bool,
    ) -> Result<Vec<Var<'t, T>>> {
        if create_graph {
            self.grad_graph(output, wrt)
        } else {
            Ok(self.grad(output, wrt)?.into_iter().map(|g| self.constant(g)).collect())
        }
    }
}

fn accumulate<'t, T: Scalar, V: Adjoint<'t, T>>(
    tape: &'t Tape<T>,
    out: usize,
    seed: V,
) -> Vec<Option<V>> {
    let mut adj: Vec<Option<V>> = vec![None; out + 1];
    adj[out] = Some(seed);
    for i in (0..=out).rev() {
        let Some(g) = adj[i].clone() else { continue };
        let (op, needed) = {
            let nodes = tape.nodes.borrow();
            if !nodes[i].requires_grad {
                continue;
            }
            let op = nodes[i].op.clone();
            let needed: Vec<bool> = op.parents().iter().map(|&p| nodes[p].requires_grad).collect();
            (op, needed)
        };
        if !needed.iter().any(|&b| b) {
            continue;
        }
        for (p, contrib) in vjp(tape, i, &op, &g, &needed) {
            adj[p] = Some(match adj[p].take() {
                None => contrib,
                Some(acc) => acc.vadd(&contrib),
            });
        }
    }
    adj
}

/// Operations the backward rules are written against.
trait Adjoint<'t, T: Scalar>: Clone {
    fn lift(tape: &'t Tape<T>, idx: usize) -> Self;
    fn constant(tape: &'t Tape<T>, value: Tensor<T>) -> Self;
    fn vadd(&self, o: &Self) -> Self;
    fn vsub(&self, o: &Self) -> Self;
    fn vmul(&self, o: &Self) -> Self;
    fn vdiv(&self, o: &Self) -> Self;
    fn vscale(&self, c: T) -> Self;
    fn vshift(&self, c: T) -> Self;
    fn vscale_by(&self, s: &Self) -> Self;
    fn vmatmul(&self, o: &Self) -> Self;
    fn vtranspose(&self) -> Self;
    fn vspmm(&self, m: &Arc<SparseMatrix<T>>, mt: &Arc<SparseMatrix<T>>) -> Self;
    fn vsum(&self) -> Self;
    fn vexpand(&self, shape: &[usize]) -> Self;
    fn vrow_sum(&self) -> Self;
    fn vbroadcast_cols(&self, c: usize) -> Self;
    fn vgather(&self, idx: &Rc<[usize]>) -> Self;
    fn vscatter(&self, idx: &Rc<[usize]>, n: usize) -> Self;
    fn vslice(&self, off: usize, shape: &[usize]) -> Self;
    fn vpad(&self, off: usize, total: usize) -> Self;
    fn vreshape(&self, shape: &[usize]) -> Self;
    fn vsigmoid(&self) -> Self;
    fn vsoftmax(&self) -> Self;
    fn vmul_const(&self, c: &Rc<Tensor<T>>) -> Self;
}

const CHECKED: &str = "shapes verified when the forward op was recorded";

impl<'t, T: Scalar> Adjoint<'t, T> for Tensor<T> {
    fn lift(tape: &'t Tape<T>, idx: usize) -> Self {
        tape.value_of(idx)
    }
    fn constant(_: &'t Tape<T>, value: Tensor<T>) -> Self {
        value
    }
    fn vadd(&self, o: &Self) -> Self {
        self.add(o).expect(CHECKED)
    }
    fn vsub(&self, o: &Self) -> Self {
        self.sub(o).expect(CHECKED)
    }
    fn vmul(&self, o: &Self) -> Self {
        self.hadamard(o).expect(CHECKED)
    }
    fn vdiv(&self, o: &Self) -> Self {
        Tensor::div(self, o).expect(CHECKED)
    }
    fn vscale(&self, c: T) -> Self {
        self.scale(c)
    }
    fn vshift(&self, c: T) -> Self {
        self.add_scalar(c)
    }
    fn vscale_by(&self, s: &Self) -> Self {
        self.scale_by(s).expect(CHECKED)
    }
    fn vmatmul(&self, o: &Self) -> Self {
        self.matmul(o).expect(CHECKED)
    }
    fn vtranspose(&self) -> Self {
        self.transpose().expect(CHECKED)
    }
    fn vspmm(&self, m: &Arc<SparseMatrix<T>>, _: &Arc<SparseMatrix<T>>) -> Self {
        m.spmm(self).expect(CHECKED)
    }
    fn vsum(&self) -> Self {
        self.sum_all()
    }
    fn vexpand(&self, shape: &[usize]) -> Self {
        self.expand(shape).expect(CHECKED)
    }
    fn vrow_sum(&self) -> Self {
        self.row_sum().expect(CHECKED)
    }
    fn vbroadcast_cols(&self, c: usize) -> Self {
        self.broadcast_cols(c).expect(CHECKED)
    }
    fn vgather(&self, idx: &Rc<[usize]>) -> Self {
        self.gather_rows(idx).expect(CHECKED)
    }
    fn vscatter(&self, idx: &Rc<[usize]>, n: usize) -> Self {
        self.scatter_rows(idx, n).expect(CHECKED)
    }
    fn vslice(&self, off: usize, shape: &[usize]) -> Self {
        self.slice_flat(off, shape).expect(CHECKED)
    }
    fn vpad(&self, off: usize, total: usize) -> Self {
        self.pad_flat(off, total).expect(CHECKED)
    }
    fn vreshape(&self, shape: &[usize]) -> Self {
        self.reshape(shape).expect(CHECKED)
    }
    fn vsigmoid(&self) -> Self {
        self.sigmoid()
    }
    fn vsoftmax(&self) -> Self {
        self.softmax_rows().expect(CHECKED)
    }
    fn vmul_const(&self, c: &Rc<Tensor<T>>) -> Self {
        self.hadamard(c).expect(CHECKED)
    }
}

impl<'t, T: Scalar> Adjoint<'t, T> for Var<'t, T> {
    fn lift(tape: &'t Tape<T>, idx: usize) -> Self {
        Var { tape, idx }
    }
    fn constant(tape: &'t Tape<T>, value: Tensor<T>) -> Self {
        tape.constant(value)
    }
    fn vadd(&self, o: &Self) -> Self {
        self.add(*o).expect(CHECKED)
    }
    fn vsub(&self, o: &Self) -> Self {
        self.sub(*o).expect(CHECKED)
    }
    fn vmul(&self, o: &Self) -> Self {
        self.mul(*o).expect(CHECKED)
    }
    fn vdiv(&self, o: &Self) -> Self {
        self.div(*o).expect(CHECKED)
    }
    fn vscale(&self, c: T) -> Self {
        self.scale(c)
    }
    fn vshift(&self, c: T) -> Self {
        self.add_scalar(c)
    }
    fn vscale_by(&self, s: &Self) -> Self {
        self.scale_by(*s).expect(CHECKED)
    }
    fn vmatmul(&self, o: &Self) -> Self {
        self.matmul(*o).expect(CHECKED)
    }
    fn vtranspose(&self) -> Self {
        self.transpose().expect(CHECKED)
    }
    fn vspmm(&self, m: &Arc<SparseMatrix<T>>, mt: &Arc<SparseMatrix<T>>) -> Self {
        self.tape
            .record(Op::SpMM { m: m.clone(), mt: mt.clone(), d: self.idx })
            .expect(CHECKED)
    }
    fn vsum(&self) -> Self {
        self.sum()
    }
    fn vexpand(&self, shape: &[usize]) -> Self {
        self.expand(shape).expect(CHECKED)
    }
    fn vrow_sum(&self) -> Self {
        self.row_sum().expect(CHECKED)
    }
    fn vbroadcast_cols(&self, c: usize) -> Self {
        self.broadcast_cols(c).expect(CHECKED)
    }
    fn vgather(&self, idx: &Rc<[usize]>) -> Self {
        self.tape.record(Op::GatherRows(self.idx, idx.clone())).expect(CHECKED)
    }
    fn vscatter(&self, idx: &Rc<[usize]>, n: usize) -> Self {
        self.tape.record(Op::ScatterRows(self.idx, idx.clone(), n)).expect(CHECKED)
    }
    fn vslice(&self, off: usize, shape: &[usize]) -> Self {
        self.slice(off, shape).expect(CHECKED)
    }
    fn vpad(&self, off: usize, total: usize) -> Self {
        self.pad(off, total).expect(CHECKED)
    }
    fn vreshape(&self, shape: &[usize]) -> Self {
        self.reshape(shape).expect(CHECKED)
    }
    fn vsigmoid(&self) -> Self {
        self.sigmoid()
    }
    fn vsoftmax(&self) -> Self {
        self.softmax_rows().expect(CHECKED)
    }
    fn vmul_const(&self, c: &Rc<Tensor<T>>) -> Self {
        self.tape.record(Op::MulConst(self.idx, c.clone())).expect(CHECKED)
    }
}

fn vjp<'t, T: Scalar, V: Adjoint<'t, T>>(
    tape: &'t Tape<T>,
    out: usize,
    op: &Op<T>,
    g: &V,
    needed: &[bool],
) -> Vec<(usize, V)> {
    use Op::*;
    let lift = |i: usize| V::lift(tape, i);
    let mut res = Vec::with_capacity(2);
    let mut push = |k: usize, p: usize, f: &dyn Fn() -> V| {
        if needed[k] {
            res.push((p, f()));
        }
    };
    match op {
        Leaf => {}
        Add(a, b) => {
            push(0, *a, &|| g.clone());
            push(1, *b, &|| g.clone());
        }
        Sub(a, b) => {
            push(0, *a, &|| g.clone());
            push(1, *b, &|| g.vscale(-T::one()));
        }
        Mul(a, b) => {
            push(0, *a, &|| g.vmul(&lift(*b)));
            push(1, *b, &|| g.vmul(&lift(*a)));
        }
        Div(a, b) => {
            push(0, *a, &|| g.vdiv(&lift(*b)));
            push(1, *b, &|| g.vmul(&lift(out)).vdiv(&lift(*b)).vscale(-T::one()));
        }
        Scale(a, c) => push(0, *a, &|| g.vscale(*c)),
        AddScalar(a, _) => push(0, *a, &|| g.clone()),
        ScaleBy(a, s) => {
            push(0, *a, &|| g.vscale_by(&lift(*s)));
            let s_shape = tape.shape_of(*s);
            push(1, *s, &|| g.vmul(&lift(*a)).vsum().vreshape(&s_shape));
        }
        MatMul(a, b) => {
            push(0, *a, &|| g.vmatmul(&lift(*b).vtranspose()));
            push(1, *b, &|| lift(*a).vtranspose().vmatmul(g));
        }
        Transpose(a) => push(0, *a, &|| g.vtranspose()),
        SpMM { m, mt, d } => push(0, *d, &|| g.vspmm(mt, m)),
        SumAll(a) => {
            let shape = tape.shape_of(*a);
            push(0, *a, &|| g.vexpand(&shape));
        }
        Expand(a, _) => {
            let shape = tape.shape_of(*a);
            push(0, *a, &|| g.vsum().vreshape(&shape));
        }
        RowSum(a) => {
            let c = tape.shape_of(*a)[1];
            push(0, *a, &|| g.vbroadcast_cols(c));
        }
        BroadcastCols(a, _) => push(0, *a, &|| g.vrow_sum()),
        GatherRows(a, idx) => {
            let n = tape.shape_of(*a)[0];
            push(0, *a, &|| g.vscatter(idx, n));
        }
        ScatterRows(a, idx, _) => push(0, *a, &|| g.vgather(idx)),
        Slice(a, off, _) => {
            let shape = tape.shape_of(*a);
            let total = shape.iter().product();
            push(0, *a, &|| g.vpad(*off, total).vreshape(&shape));
        }
        Pad(a, off, _) => {
            let shape = tape.shape_of(*a);
            push(0, *a, &|| g.vslice(*off, &shape));
        }
        Reshape(a, _) => {
            let shape = tape.shape_of(*a);
            push(0, *a, &|| g.vreshape(&shape));
        }
        Sigmoid(a) => push(0, *a, &|| {
            let y = lift(out);
            g.vmul(&y.vmul(&y.vscale(-T::one()).vshift(T::one())))
        }),
        Tanh(a) => push(0, *a, &|| {
            let y = lift(out);
            g.vmul(&y.vmul(&y).vscale(-T::one()).vshift(T::one()))
        }),
        LeakyRelu(a, slope) => {
            let mask = Rc::new(tape.nodes.borrow()[*a].value.leaky_relu_mask(*slope));
            push(0, *a, &|| g.vmul_const(&mask));
        }
        MulConst(a, c) => push(0, *a, &|| g.vmul_const(c)),
        SoftmaxRows(a) => push(0, *a, &|| {
            let y = lift(out);
            let c = tape.shape_of(out)[1];
            let inner = g.vmul(&y).vrow_sum().vbroadcast_cols(c);
            y.vmul(&g.vsub(&inner))
        }),
        SoftmaxCe(a, t) => push(0, *a, &|| {
            let p = lift(*a).vsoftmax();
            p.vsub(&V::constant(tape, (**t).clone())).vscale_by(g)
        }),
        SigmoidBce(a, t) => push(0, *a, &|| {
            let p = lift(*a).vsigmoid();
            p.vsub(&V::constant(tape, (**t).clone())).vscale_by(g)
        }),
        L2Norm(a) => {
            let norm = tape.nodes.borrow()[out].value.item();
            let shape = tape.shape_of(*a);
            push(0, *a, &|| {
                if norm == T::zero() {
                    V::constant(tape, Tensor::zeros(&shape))
                } else {
                    lift(*a).vscale_by(&g.vdiv(&lift(out)))
                }
            });
        }
    }
    res
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Tensor<T> {
        self.tape.value_of(self.idx)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.shape_of(self.idx)
    }

    /// The value of a one-element variable.
    pub fn item(&self) -> T {
        self.tape.nodes.borrow()[self.idx].value.item()
    }

    fn binary(self, o: Var<'t, T>, op: fn(usize, usize) -> Op<T>) -> Result<Self> {
        self.tape.check_owned(&o, "operand")?;
        self.tape.record(op(self.idx, o.idx))
    }

    fn unary(self, op: Op<T>) -> Self {
        self.tape.record(op).expect("unary op cannot fail on shape")
    }

    pub fn add(self, o: Var<'t, T>) -> Result<Self> {
        self.binary(o, Op::Add)
    }

    pub fn sub(self, o: Var<'t, T>) -> Result<Self> {
        self.binary(o, Op::Sub)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, o: Var<'t, T>) -> Result<Self> {
        self.binary(o, Op::Mul)
    }

    pub fn div(self, o: Var<'t, T>) -> Result<Self> {
        self.binary(o, Op::Div)
    }

    pub fn scale(self, c: T) -> Self {
        self.unary(Op::Scale(self.idx, c))
    }

    pub fn add_scalar(self, c: T) -> Self {
        self.unary(Op::AddScalar(self.idx, c))
    }

    /// Multiplies by a one-element variable.
    pub fn scale_by(self, s: Var<'t, T>) -> Result<Self> {
        self.binary(s, Op::ScaleBy)
    }

    pub fn matmul(self, o: Var<'t, T>) -> Result<Self> {
        self.binary(o, Op::MatMul)
    }

    pub fn transpose(self) -> Result<Self> {
        self.tape.record(Op::Transpose(self.idx))
    }

    /// `m · self` for a constant sparse `m`.
    pub fn spmm(self, m: &Arc<SparseMatrix<T>>) -> Result<Self> {
        self.spmm_with_transpose(m, &Arc::new(m.transpose()))
    }

    /// [`spmm`](Self::spmm) with a precomputed transpose `mt` of `m`.
    pub fn spmm_with_transpose(
        self,
        m: &Arc<SparseMatrix<T>>,
        mt: &Arc<SparseMatrix<T>>,
    ) -> Result<Self> {
        if mt.rows() != m.cols() || mt.cols() != m.rows() {
            return Err(shape_err("spmm: transpose shape does not match"));
        }
        self.tape.record(Op::SpMM { m: m.clone(), mt: mt.clone(), d: self.idx })
    }

    pub fn sum(self) -> Self {
        self.unary(Op::SumAll(self.idx))
    }

    pub fn expand(self, shape: &[usize]) -> Result<Self> {
        self.tape.record(Op::Expand(self.idx, shape.to_vec()))
    }

    pub fn row_sum(self) -> Result<Self> {
        self.tape.record(Op::RowSum(self.idx))
    }

    pub fn broadcast_cols(self, c: usize) -> Result<Self> {
        self.tape.record(Op::BroadcastCols(self.idx, c))
    }

    pub fn gather_rows(self, idx: &[usize]) -> Result<Self> {
        self.tape.record(Op::GatherRows(self.idx, idx.into()))
    }

    pub fn scatter_rows(self, idx: &[usize], n: usize) -> Result<Self> {
        self.tape.record(Op::ScatterRows(self.idx, idx.into(), n))
    }

    /// Flat slice starting at `offset`, reshaped to `shape`.
    pub fn slice(self, offset: usize, shape: &[usize]) -> Result<Self> {
        self.tape.record(Op::Slice(self.idx, offset, shape.to_vec()))
    }

    pub fn pad(self, offset: usize, total: usize) -> Result<Self> {
        self.tape.record(Op::Pad(self.idx, offset, total))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        self.tape.record(Op::Reshape(self.idx, shape.to_vec()))
    }

    pub fn sigmoid(self) -> Self {
        self.unary(Op::Sigmoid(self.idx))
    }

    pub fn tanh(self) -> Self {
        self.unary(Op::Tanh(self.idx))
    }

    pub fn leaky_relu(self, slope: T) -> Self {
        self.unary(Op::LeakyRelu(self.idx, slope))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(self, c: Tensor<T>) -> Result<Self> {
        self.tape.record(Op::MulConst(self.idx, Rc::new(c)))
    }

    pub fn softmax_rows(self) -> Result<Self> {
        self.tape.record(Op::SoftmaxRows(self.idx))
    }

    /// `-Σ_rows Σ_c target·log softmax(logits)`, summed (not averaged) over
    /// rows. Each target row must be one-hot.
    pub fn softmax_cross_entropy(self, targets: &Tensor<T>) -> Result<Self> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 {
            return Err(Error::EmptyInput(format!(
                "cross-entropy needs a non-empty n×c matrix, got {shape:?}"
            )));
        }
        if targets.shape() != shape.as_slice() {
            return Err(shape_err("cross-entropy: logits and targets differ in shape"));
        }
        for r in 0..shape[0] {
            let row = targets.row(r);
            let ones = row.iter().filter(|&&v| v == T::one()).count();
            let zeros = row.iter().filter(|&&v| v == T::zero()).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::Validation(format!("target row {r} is not one-hot")));
            }
        }
        self.tape.record(Op::SoftmaxCe(self.idx, Rc::new(targets.clone())))
    }

    /// `-Σ [t·log σ(z) + (1-t)·log(1-σ(z))]` over all entries.
    pub fn sigmoid_bce(self, targets: &Tensor<T>) -> Result<Self> {
        if let Some(bad) = targets.data().iter().find(|&&v| v != T::zero() && v != T::one()) {
            return Err(Error::Validation(format!("non-binary target {bad}")));
        }
        self.tape.record(Op::SigmoidBce(self.idx, Rc::new(targets.clone())))
    }

    /// Unsquared Euclidean norm of all entries; its gradient at the origin is zero.
    pub fn l2_norm(self) -> Self {
        self.unary(Op::L2Norm(self.idx))
    }
}
