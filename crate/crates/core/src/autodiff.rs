//! Tape-based reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! A [`Tape`] records primitive ops during the forward pass in topological
//! (recording) order. [`Tape::backward`] walks the record once in reverse and
//! accumulates `d loss / d param` into the matching [`Parameter`] slots of a
//! [`ParamStore`].
//!
//! Scope is deliberately narrow: dense `f64` only, broadcasting limited to
//! scalars (1x1) and row vectors (1xC against RxC). Shape mismatches panic;
//! non-finite outputs poison the tape and surface as an error at `backward`.

use crate::error::{Error, Result};

/// Dense row-major 2-D tensor. Scalars are 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length mismatch");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(1, 1, vec![v])
    }

    pub fn row(values: Vec<f64>) -> Self {
        let cols = values.len();
        Tensor::new(1, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Scalar value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// C = A * B for (r x k) * (k x c). Plain ikj loop; shapes here are small.
    fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (r, k, c) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out[i * c..(i + 1) * c];
            for (p, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[p * c..(p + 1) * c];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(r, c, out)
    }

    fn transpose(&self) -> Tensor {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Tensor::new(self.cols, self.rows, out)
    }
}

/// Which optimizer group a parameter belongs to. The autocorrelation
/// coefficient trains with its own learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Model,
    Rho,
}

/// A trainable value with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub group: ParamGroup,
}

/// Flat store of parameters; indices are stable handles.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor, group: ParamGroup) -> usize {
        let grad = Tensor::zeros(value.rows(), value.cols());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
            group,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Parameter {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snap: &[Tensor]) {
        assert_eq!(snap.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snap) {
            p.value = s.clone();
        }
    }
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf { param: Option<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(f64, Var),
    MatMul(Var, Var),
    Relu(Var),
    Tanh(Var),
    Square(Var),
    Mean(Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    Tile(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recording tape. Single-threaded during record and backward.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    poisoned: Option<&'static str>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let rows = match (a.0, b.0) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        _ => panic!("row broadcast mismatch: {a:?} vs {b:?}"),
    };
    let cols = match (a.1, b.1) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        _ => panic!("col broadcast mismatch: {a:?} vs {b:?}"),
    };
    (rows, cols)
}

fn broadcast_get(t: &Tensor, r: usize, c: usize) -> f64 {
    let rr = if t.rows() == 1 { 0 } else { r };
    let cc = if t.cols() == 1 { 0 } else { c };
    t.get(rr, cc)
}

/// Sum `g` down to the shape of the (possibly broadcast) operand.
fn reduce_to(g: &Tensor, rows: usize, cols: usize) -> Tensor {
    if g.rows() == rows && g.cols() == cols {
        return g.clone();
    }
    let mut out = Tensor::zeros(rows, cols);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let rr = if rows == 1 { 0 } else { r };
            let cc = if cols == 1 { 0 } else { c };
            let v = out.get(rr, cc) + g.get(r, c);
            out.set(rr, cc, v);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Tensor, op: Op, name: &'static str) -> Var {
        if self.poisoned.is_none() && !value.all_finite() {
            self.poisoned = Some(name);
        }
        self.push(value, op)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// First op that produced a non-finite value, if any.
    pub fn poisoned(&self) -> Option<&'static str> {
        self.poisoned
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_checked(t, Op::Leaf { param: None }, "constant")
    }

    /// Record a leaf bound to `store[idx]`; backward accumulates into its grad.
    pub fn param(&mut self, store: &ParamStore, idx: usize) -> Var {
        let value = store.get(idx).value.clone();
        self.push_checked(value, Op::Leaf { param: Some(idx) }, "param")
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (rows, cols) = broadcast_shape((ta.rows(), ta.cols()), (tb.rows(), tb.cols()));
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(broadcast_get(ta, r, c), broadcast_get(tb, r, c)));
            }
        }
        self.push_checked(Tensor::new(rows, cols, data), op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; either operand may broadcast from 1x1 or 1xC.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Compile-time scalar times tensor (the scalar is not differentiated).
    pub fn scalar_mul(&mut self, k: f64, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let out = Tensor::new(t.rows(), t.cols(), t.data().iter().map(|v| k * v).collect());
        self.push_checked(out, Op::ScalarMul(k, a), "scalar_mul")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.nodes[a.0].value.matmul(&self.nodes[b.0].value);
        self.push_checked(out, Op::MatMul(a, b), "matmul")
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = &self.nodes[a.0].value;
        let out = Tensor::new(t.rows(), t.cols(), t.data().iter().map(|v| f(*v)).collect());
        self.push_checked(out, op, name)
    }

    /// ReLU with subgradient 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, "relu", |v| v.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, "tanh", f64::tanh, Op::Tanh(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, "square", |v| v * v, Op::Square(a))
    }

    /// Mean over all elements; result is 1x1.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push_checked(Tensor::scalar(m), Op::Mean(a), "mean")
    }

    /// Stack inputs vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let cols = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            assert_eq!(t.cols(), cols, "concat column mismatch");
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        self.push_checked(
            Tensor::new(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
            "concat",
        )
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = &self.nodes[a.0].value;
        assert!(start < end && end <= t.rows(), "slice out of bounds");
        let cols = t.cols();
        let data = t.data()[start * cols..end * cols].to_vec();
        self.push_checked(
            Tensor::new(end - start, cols, data),
            Op::SliceRows(a, start, end),
            "slice",
        )
    }

    /// Repeat a 1xK row vector `reps` times into 1x(K*reps).
    pub fn tile(&mut self, a: Var, reps: usize) -> Var {
        let t = &self.nodes[a.0].value;
        assert_eq!(t.rows(), 1, "tile expects a row vector");
        assert!(reps >= 1);
        let k = t.cols();
        let mut data = Vec::with_capacity(k * reps);
        for _ in 0..reps {
            data.extend_from_slice(t.data());
        }
        self.push_checked(Tensor::new(1, k * reps, data), Op::Tile(a, reps), "tile")
    }

    /// Reverse pass from a scalar loss; accumulates into `store` grads.
    /// Each node is visited exactly once, in reverse recording order.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if let Some(op) = self.poisoned {
            return Err(Error::NonFiniteTensor(op.to_string()));
        }
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::LossNotScalar {
                rows: lt.rows(),
                cols: lt.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        let acc = |grads: &mut Vec<Option<Tensor>>, v: Var, add: Tensor| {
            match &mut grads[v.0] {
                Some(g) => {
                    for (gi, ai) in g.data_mut().iter_mut().zip(add.data()) {
                        *gi += ai;
                    }
                }
                slot => *slot = Some(add),
            };
        };

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf { param } => {
                    if let Some(idx) = *param {
                        let pg = &mut store.get_mut(idx).grad;
                        for (pi, gi) in pg.data_mut().iter_mut().zip(g.data()) {
                            *pi += gi;
                        }
                    }
                }
                Op::Add(a, b) => {
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let ga = reduce_to(&g, ta.rows(), ta.cols());
                    let gb = reduce_to(&g, tb.rows(), tb.cols());
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let ga = reduce_to(&g, ta.rows(), ta.cols());
                    let mut gb = reduce_to(&g, tb.rows(), tb.cols());
                    gb.data_mut().iter_mut().for_each(|v| *v = -*v);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let mut full_a = Tensor::zeros(g.rows(), g.cols());
                    let mut full_b = Tensor::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            full_a.set(r, c, g.get(r, c) * broadcast_get(tb, r, c));
                            full_b.set(r, c, g.get(r, c) * broadcast_get(ta, r, c));
                        }
                    }
                    acc(&mut grads, *a, reduce_to(&full_a, ta.rows(), ta.cols()));
                    acc(&mut grads, *b, reduce_to(&full_b, tb.rows(), tb.cols()));
                }
                Op::ScalarMul(k, a) => {
                    let mut ga = g.clone();
                    ga.data_mut().iter_mut().for_each(|v| *v *= k);
                    acc(&mut grads, *a, ga);
                }
                Op::MatMul(a, b) => {
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let ga = g.matmul(&tb.transpose());
                    let gb = ta.transpose().matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Relu(a) => {
                    let ta = &self.nodes[a.0].value;
                    let data = ta
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(x, gi)| if *x > 0.0 { *gi } else { 0.0 })
                        .collect();
                    acc(&mut grads, *a, Tensor::new(ta.rows(), ta.cols(), data));
                }
                Op::Tanh(a) => {
                    let ty = &self.nodes[i].value;
                    let ta = &self.nodes[a.0].value;
                    let data = ty
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(y, gi)| gi * (1.0 - y * y))
                        .collect();
                    acc(&mut grads, *a, Tensor::new(ta.rows(), ta.cols(), data));
                }
                Op::Square(a) => {
                    let ta = &self.nodes[a.0].value;
                    let data = ta
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(x, gi)| 2.0 * x * gi)
                        .collect();
                    acc(&mut grads, *a, Tensor::new(ta.rows(), ta.cols(), data));
                }
                Op::Mean(a) => {
                    let ta = &self.nodes[a.0].value;
                    let k = g.item() / ta.len() as f64;
                    let data = vec![k; ta.len()];
                    acc(&mut grads, *a, Tensor::new(ta.rows(), ta.cols(), data));
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let t = &self.nodes[p.0].value;
                        let end = start + t.rows();
                        let cols = t.cols();
                        let gd = g.data()[start * cols..end * cols].to_vec();
                        acc(&mut grads, p, Tensor::new(t.rows(), cols, gd));
                        start = end;
                    }
                }
                Op::SliceRows(a, start, end) => {
                    let ta = &self.nodes[a.0].value;
                    let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                    let cols = ta.cols();
                    ga.data_mut()[start * cols..end * cols].copy_from_slice(g.data());
                    acc(&mut grads, *a, ga);
                }
                Op::Tile(a, reps) => {
                    let ta = &self.nodes[a.0].value;
                    let k = ta.cols();
                    let mut ga = Tensor::zeros(1, k);
                    for rep in 0..*reps {
                        for j in 0..k {
                            let v = ga.get(0, j) + g.get(0, rep * k + j);
                            ga.set(0, j, v);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
            }
        }
        Ok(())
    }
}

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Central-difference gradient check for a recorded scalar function.
///
/// `f` must be deterministic. Inputs should avoid placing any ReLU
/// pre-activation exactly at 0, where the subgradient convention and the
/// two-sided difference disagree; such points are excluded by construction
/// of the caller's check points, not detected here.
pub fn grad_check<F>(store: &mut ParamStore, f: F, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store);
    tape.backward(loss, store)?;
    let analytic: Vec<Tensor> = store.iter().map(|p| p.grad.clone()).collect();

    let mut per_param = Vec::with_capacity(store.len());
    let mut max_rel = 0.0f64;
    for idx in 0..store.len() {
        let mut worst = 0.0f64;
        for e in 0..store.get(idx).value.len() {
            let orig = store.get(idx).value.data()[e];
            store.get_mut(idx).value.data_mut()[e] = orig + eps;
            let mut tp = Tape::new();
            let lp = f(&mut tp, store);
            let up = tp.value(lp).item();
            store.get_mut(idx).value.data_mut()[e] = orig - eps;
            let mut tm = Tape::new();
            let lm = f(&mut tm, store);
            let um = tm.value(lm).item();
            store.get_mut(idx).value.data_mut()[e] = orig;
            let numeric = (up - um) / (2.0 * eps);
            let a = analytic[idx].data()[e];
            let rel = (a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs());
            worst = worst.max(rel);
        }
        per_param.push((store.get(idx).name.clone(), worst));
        max_rel = max_rel.max(worst);
    }
    Ok(GradCheckReport {
        per_param,
        max_rel_err: max_rel,
        pass: max_rel < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tanh_identity_case() {
        let mut store = ParamStore::new();
        let x = store.push("x", Tensor::scalar(0.0), ParamGroup::Model);
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let y = tape.tanh(v);
        assert_eq!(tape.value(y).item(), 0.0);
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(x).grad.item(), 1.0);
    }

    #[test]
    fn relu_values_and_grads() {
        let mut store = ParamStore::new();
        let x = store.push("x", Tensor::row(vec![-2.0, 3.0]), ParamGroup::Model);
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let y = tape.relu(v);
        assert_eq!(tape.value(y).data(), &[0.0, 3.0]);
        let m = tape.mean(y);
        tape.backward(m, &mut store).unwrap();
        // mean contributes 1/2 per element; relu masks the negative one
        assert_eq!(store.get(x).grad.data(), &[0.0, 0.5]);
    }

    #[test]
    fn square_grad() {
        let mut store = ParamStore::new();
        let x = store.push("x", Tensor::scalar(3.0), ParamGroup::Model);
        let mut tape = Tape::new();
        let v = tape.param(&store, x);
        let y = tape.square(v);
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.get(x).grad.item(), 6.0);
    }

    #[test]
    fn mean_of_constants_has_zero_param_grads() {
        let mut store = ParamStore::new();
        let x = store.push("x", Tensor::scalar(1.0), ParamGroup::Model);
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::row(vec![1.0, 2.0, 3.0]));
        let m = tape.mean(c);
        tape.backward(m, &mut store).unwrap();
        // x never entered the graph: unreachable parameters get zero grad
        assert_eq!(store.get(x).grad.item(), 0.0);
    }

    #[test]
    fn matmul_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let a = store.push(
            "a",
            Tensor::new(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()),
            ParamGroup::Model,
        );
        let b = store.push(
            "b",
            Tensor::new(3, 1, (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()),
            ParamGroup::Model,
        );
        let report = grad_check(
            &mut store,
            |tape, store| {
                let va = tape.param(store, a);
                let vb = tape.param(store, b);
                let c = tape.matmul(va, vb);
                tape.mean(c)
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn deep_composite_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut store = ParamStore::new();
        let mut idxs = Vec::new();
        for layer in 0..6 {
            let t = Tensor::new(
                4,
                4,
                (0..16).map(|_| rng.random_range(-0.7..0.7)).collect(),
            );
            idxs.push(store.push(format!("w{layer}"), t, ParamGroup::Model));
        }
        let input = Tensor::new(1, 4, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
        let report = grad_check(
            &mut store,
            |tape, store| {
                let mut h = tape.constant(input.clone());
                for (layer, &idx) in idxs.iter().enumerate() {
                    let w = tape.param(store, idx);
                    h = tape.matmul(h, w);
                    h = if layer % 2 == 0 {
                        tape.tanh(h)
                    } else {
                        let r = tape.relu(h);
                        let s = tape.square(h);
                        let sc = tape.scalar_mul(0.1, s);
                        tape.add(r, sc)
                    };
                }
                let m = tape.mean(h);
                tape.square(m)
            },
            1e-5,
            1e-5,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn concat_slice_tile_grads() {
        let mut store = ParamStore::new();
        let a = store.push("a", Tensor::row(vec![1.0, 2.0]), ParamGroup::Model);
        let report = grad_check(
            &mut store,
            |tape, store| {
                let v = tape.param(store, a);
                let t = tape.tile(v, 3); // 1x6
                let big = tape.concat_rows(&[t, t]); // 2x6
                let s = tape.slice_rows(big, 1, 2); // 1x6
                let sq = tape.square(s);
                tape.mean(sq)
            },
            1e-6,
            1e-7,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn gradient_linearity_on_random_graphs() {
        // grad of (f + g) equals grad f + grad g
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mut store = ParamStore::new();
            let x = store.push(
                "x",
                Tensor::row((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()),
                ParamGroup::Model,
            );
            let run = |store: &mut ParamStore, which: u8| -> Vec<f64> {
                store.zero_grads();
                let mut tape = Tape::new();
                let v = tape.param(store, x);
                let f = {
                    let t = tape.tanh(v);
                    tape.mean(t)
                };
                let g = {
                    let s = tape.square(v);
                    tape.mean(s)
                };
                let loss = match which {
                    0 => f,
                    1 => g,
                    _ => tape.add(f, g),
                };
                tape.backward(loss, store).unwrap();
                store.get(x).grad.data().to_vec()
            };
            let gf = run(&mut store, 0);
            let gg = run(&mut store, 1);
            let gs = run(&mut store, 2);
            for i in 0..3 {
                assert!((gs[i] - gf[i] - gg[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repeated_backward_after_zeroing_is_idempotent() {
        let mut store = ParamStore::new();
        let x = store.push("x", Tensor::scalar(1.5), ParamGroup::Model);
        let grad_once = |store: &mut ParamStore| -> f64 {
            store.zero_grads();
            let mut tape = Tape::new();
            let v = tape.param(store, x);
            let s = tape.square(v);
            let t = tape.tanh(s);
            tape.backward(t, store).unwrap();
            store.get(x).grad.item()
        };
        let g1 = grad_once(&mut store);
        let g2 = grad_once(&mut store);
        assert_eq!(g1.to_bits(), g2.to_bits());
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let err = tape.backward(c, &mut store).unwrap_err();
        assert!(matches!(err, Error::LossNotScalar { .. }));
    }

    #[test]
    fn non_finite_output_poisons_tape() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(1e308));
        let s = tape.square(c); // overflows to inf
        assert_eq!(tape.poisoned(), Some("square"));
        let err = tape.backward(s, &mut store).unwrap_err();
        assert!(matches!(err, Error::NonFiniteTensor(_)));
    }

    #[test]
    fn linear_function_checks_to_machine_precision() {
        let mut store = ParamStore::new();
        let w = store.push("w", Tensor::row(vec![2.0, -1.0, 0.5]), ParamGroup::Model);
        let report = grad_check(
            &mut store,
            |tape, store| {
                let v = tape.param(store, w);
                let x = tape.constant(Tensor::new(3, 1, vec![1.0, 2.0, 3.0]));
                let y = tape.matmul(v, x);
                tape.mean(y)
            },
            1e-4,
            1e-9,
        )
        .unwrap();
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }
}
