//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Define-by-run: every operation appends a node to a [`Tape`] and returns a
//! [`Value`] handle, so insertion order is already a topological order and
//! [`Tape::backward`] is a single reverse sweep. The graph is rebuilt from
//! scratch for every batch; nothing here is retained across steps except the
//! parameter arrays the caller owns.
//!
//! Gradients are accumulators: `backward` computes its contribution into
//! scratch storage first and then adds it on, so running it twice without
//! [`Tape::zero_grads`] yields exactly doubled gradients, and fan-out within
//! one sweep sums contributions as expected.

use ndarray::{concatenate, Array2, Axis};
use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Scale constant of the self-normalizing exponential linear unit.
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
/// Alpha constant of the self-normalizing exponential linear unit.
pub const SELU_ALPHA: f64 = 1.6732632423543772;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: shapes {left:?} and {right:?} are incompatible")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("value belongs to a different tape")]
    ForeignValue,
    #[error("invalid optimizer setting: {0}")]
    InvalidOptimizer(String),
}

/// Handle to a node on a specific tape. Cheap to copy; using it with any
/// other tape is rejected at run time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value {
    tape_id: u64,
    index: usize,
}

/// A constant (non-differentiated) linear operator `M`, applied on the left:
/// `apply` computes `M x`, and `apply_transpose` computes `M^T x`, which is
/// exactly the backward rule for `x -> M x`. The structural-equation
/// transforms implement this without ever materializing `M`.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, m: &Array2<f64>) -> Array2<f64>;
    fn apply_transpose(&self, m: &Array2<f64>) -> Array2<f64>;
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddBias(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Cos(usize),
    Exp(usize),
    Log(usize),
    Max0(usize),
    Selu(usize),
    SoftmaxRows(usize),
    Transpose(usize),
    ConcatRows(usize, usize),
    SumRows(usize),
    SumAll(usize),
    MeanAll(usize),
    ApplyMap(Rc<dyn LinearMap>, usize),
}

struct Node {
    data: Array2<f64>,
    grad: Array2<f64>,
    op: Op,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Growable arena of operation nodes. All op constructors validate shapes up
/// front, so a `Value` always refers to a well-formed result.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts a leaf node. Leaves are how parameters and batch constants
    /// enter the graph; gradients accumulate on them like on any node.
    pub fn value(&self, data: Array2<f64>) -> Value {
        self.push(data, Op::Leaf)
    }

    pub fn shape(&self, v: Value) -> Result<(usize, usize), AutodiffError> {
        self.check(v)?;
        Ok(self.nodes.borrow()[v.index].data.dim())
    }

    /// Copy of the forward result.
    pub fn data(&self, v: Value) -> Result<Array2<f64>, AutodiffError> {
        self.check(v)?;
        Ok(self.nodes.borrow()[v.index].data.clone())
    }

    /// Copy of the accumulated gradient.
    pub fn grad(&self, v: Value) -> Result<Array2<f64>, AutodiffError> {
        self.check(v)?;
        Ok(self.nodes.borrow()[v.index].grad.clone())
    }

    /// The forward result of a 1x1 node.
    pub fn scalar(&self, v: Value) -> Result<f64, AutodiffError> {
        self.check(v)?;
        let nodes = self.nodes.borrow();
        let d = &nodes[v.index].data;
        if d.dim() != (1, 1) {
            return Err(AutodiffError::NonScalarLoss {
                rows: d.nrows(),
                cols: d.ncols(),
            });
        }
        Ok(d[[0, 0]])
    }

    /// Resets every gradient accumulator to zero.
    pub fn zero_grads(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            node.grad.fill(0.0);
        }
    }

    pub fn matmul(&self, a: Value, b: Value) -> Result<Value, AutodiffError> {
        let (da, db) = (self.dim_of(a)?, self.dim_of(b)?);
        if da.1 != db.0 {
            return Err(AutodiffError::Shape {
                op: "matmul",
                left: da,
                right: db,
            });
        }
        let data = {
            let nodes = self.nodes.borrow();
            nodes[a.index].data.dot(&nodes[b.index].data)
        };
        Ok(self.push(data, Op::MatMul(a.index, b.index)))
    }

    pub fn add(&self, a: Value, b: Value) -> Result<Value, AutodiffError> {
        self.same_shape("add", a, b)?;
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[a.index].data + &nodes[b.index].data
        };
        Ok(self.push(data, Op::Add(a.index, b.index)))
    }

    /// Adds a `(d, 1)` bias column to every column of a `(d, n)` matrix.
    pub fn add_bias(&self, m: Value, bias: Value) -> Result<Value, AutodiffError> {
        let (dm, db) = (self.dim_of(m)?, self.dim_of(bias)?);
        if db.1 != 1 || db.0 != dm.0 {
            return Err(AutodiffError::Shape {
                op: "add_bias",
                left: dm,
                right: db,
            });
        }
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[m.index].data + &nodes[bias.index].data.column(0).insert_axis(Axis(1))
        };
        Ok(self.push(data, Op::AddBias(m.index, bias.index)))
    }

    pub fn sub(&self, a: Value, b: Value) -> Result<Value, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[a.index].data - &nodes[b.index].data
        };
        Ok(self.push(data, Op::Sub(a.index, b.index)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, a: Value, b: Value) -> Result<Value, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[a.index].data * &nodes[b.index].data
        };
        Ok(self.push(data, Op::Mul(a.index, b.index)))
    }

    pub fn scale(&self, a: Value, c: f64) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.mapv(|x| c * x);
        Ok(self.push(data, Op::Scale(a.index, c)))
    }

    pub fn add_scalar(&self, a: Value, c: f64) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.mapv(|x| x + c);
        Ok(self.push(data, Op::AddScalar(a.index)))
    }

    pub fn cos(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.mapv(f64::cos);
        Ok(self.push(data, Op::Cos(a.index)))
    }

    pub fn exp(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.mapv(f64::exp);
        Ok(self.push(data, Op::Exp(a.index)))
    }

    pub fn log(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.mapv(f64::ln);
        Ok(self.push(data, Op::Log(a.index)))
    }

    /// Elementwise `max(x, 0)`. The subgradient at exactly zero is zero.
    pub fn max0(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.mapv(|x| x.max(0.0));
        Ok(self.push(data, Op::Max0(a.index)))
    }

    /// Rectified linear unit; same function and subgradient as [`Tape::max0`].
    pub fn relu(&self, a: Value) -> Result<Value, AutodiffError> {
        self.max0(a)
    }

    pub fn selu(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.mapv(selu_scalar);
        Ok(self.push(data, Op::Selu(a.index)))
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum before
    /// exponentiation. Every output row sums to one.
    pub fn softmax_rows(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = softmax_rows_kernel(&self.nodes.borrow()[a.index].data);
        Ok(self.push(data, Op::SoftmaxRows(a.index)))
    }

    pub fn transpose(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index].data.t().to_owned();
        Ok(self.push(data, Op::Transpose(a.index)))
    }

    /// Stacks `a` on top of `b`; both must have the same number of columns.
    pub fn concat_rows(&self, a: Value, b: Value) -> Result<Value, AutodiffError> {
        let (da, db) = (self.dim_of(a)?, self.dim_of(b)?);
        if da.1 != db.1 {
            return Err(AutodiffError::Shape {
                op: "concat_rows",
                left: da,
                right: db,
            });
        }
        let data = {
            let nodes = self.nodes.borrow();
            concatenate(
                Axis(0),
                &[nodes[a.index].data.view(), nodes[b.index].data.view()],
            )
            .expect("column counts checked above")
        };
        Ok(self.push(data, Op::ConcatRows(a.index, b.index)))
    }

    /// Sums each row, producing an `(n, 1)` column.
    pub fn sum_rows(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let data = self.nodes.borrow()[a.index]
            .data
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        Ok(self.push(data, Op::SumRows(a.index)))
    }

    pub fn sum_all(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let s = self.nodes.borrow()[a.index].data.sum();
        Ok(self.push(
            Array2::from_elem((1, 1), s),
            Op::SumAll(a.index),
        ))
    }

    pub fn mean_all(&self, a: Value) -> Result<Value, AutodiffError> {
        self.check(a)?;
        let m = self.nodes.borrow()[a.index].data.mean().unwrap_or(0.0);
        Ok(self.push(Array2::from_elem((1, 1), m), Op::MeanAll(a.index)))
    }

    /// Applies a constant linear operator on the left. The operator is not
    /// differentiated; the gradient flows through its transpose.
    pub fn apply_map(&self, map: Rc<dyn LinearMap>, a: Value) -> Result<Value, AutodiffError> {
        let da = self.dim_of(a)?;
        if da.0 != map.dim() {
            return Err(AutodiffError::Shape {
                op: "apply_map",
                left: da,
                right: (map.dim(), map.dim()),
            });
        }
        let data = map.apply(&self.nodes.borrow()[a.index].data);
        Ok(self.push(data, Op::ApplyMap(map, a.index)))
    }

    /// Accumulates `d loss / d node` into every node's gradient. The loss
    /// must be 1x1. Contributions are computed into scratch storage and
    /// added on at the end, so repeated calls without [`Tape::zero_grads`]
    /// sum (calling twice doubles every gradient).
    pub fn backward(&self, loss: Value) -> Result<(), AutodiffError> {
        self.check(loss)?;
        let mut nodes = self.nodes.borrow_mut();
        let dim = nodes[loss.index].data.dim();
        if dim != (1, 1) {
            return Err(AutodiffError::NonScalarLoss {
                rows: dim.0,
                cols: dim.1,
            });
        }
        let count = loss.index + 1;
        let mut local: Vec<Array2<f64>> = nodes[..count]
            .iter()
            .map(|n| Array2::zeros(n.data.dim()))
            .collect();
        let mut touched = vec![false; count];
        local[loss.index][[0, 0]] = 1.0;
        touched[loss.index] = true;

        for i in (0..count).rev() {
            if !touched[i] {
                continue;
            }
            let (head, tail) = local.split_at_mut(i);
            let g = &tail[0];
            // Parents always precede children on the tape, so every parent
            // index lands in `head`.
            match &nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&nodes[*b].data.t());
                    let gb = nodes[*a].data.t().dot(g);
                    head[*a] += &ga;
                    head[*b] += &gb;
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::Add(a, b) => {
                    head[*a] += g;
                    head[*b] += g;
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::AddBias(m, b) => {
                    head[*m] += g;
                    let col = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    head[*b] += &col;
                    touched[*m] = true;
                    touched[*b] = true;
                }
                Op::Sub(a, b) => {
                    head[*a] += g;
                    head[*b] -= g;
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::Mul(a, b) => {
                    let ga = g * &nodes[*b].data;
                    let gb = g * &nodes[*a].data;
                    head[*a] += &ga;
                    head[*b] += &gb;
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::Scale(a, c) => {
                    head[*a].scaled_add(*c, g);
                    touched[*a] = true;
                }
                Op::AddScalar(a) => {
                    head[*a] += g;
                    touched[*a] = true;
                }
                Op::Cos(a) => {
                    let ga = g * &nodes[*a].data.mapv(|x| -x.sin());
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::Exp(a) => {
                    // d exp(x) = exp(x), which is this node's own output.
                    let ga = g * &nodes[i].data;
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::Log(a) => {
                    let ga = g / &nodes[*a].data;
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::Max0(a) => {
                    let ga = g * &nodes[*a].data.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::Selu(a) => {
                    let ga = g * &nodes[*a].data.mapv(selu_grad_scalar);
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::SoftmaxRows(a) => {
                    // Per row: ga = s .* (g - <g, s>).
                    let s = &nodes[i].data;
                    let mut ga = g.clone();
                    for r in 0..s.nrows() {
                        let dot: f64 = (0..s.ncols()).map(|c| g[[r, c]] * s[[r, c]]).sum();
                        for c in 0..s.ncols() {
                            ga[[r, c]] = s[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::Transpose(a) => {
                    let ga = g.t().to_owned();
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::ConcatRows(a, b) => {
                    let ra = nodes[*a].data.nrows();
                    let ga = g.slice(ndarray::s![..ra, ..]).to_owned();
                    let gb = g.slice(ndarray::s![ra.., ..]).to_owned();
                    head[*a] += &ga;
                    head[*b] += &gb;
                    touched[*a] = true;
                    touched[*b] = true;
                }
                Op::SumRows(a) => {
                    let col = g.column(0);
                    let (rows, cols) = nodes[*a].data.dim();
                    let ga = Array2::from_shape_fn((rows, cols), |(r, _)| col[r]);
                    head[*a] += &ga;
                    touched[*a] = true;
                }
                Op::SumAll(a) => {
                    let gs = g[[0, 0]];
                    head[*a] += gs;
                    touched[*a] = true;
                }
                Op::MeanAll(a) => {
                    let (rows, cols) = nodes[*a].data.dim();
                    let gs = g[[0, 0]] / (rows * cols) as f64;
                    head[*a] += gs;
                    touched[*a] = true;
                }
                Op::ApplyMap(map, a) => {
                    let ga = map.apply_transpose(g);
                    head[*a] += &ga;
                    touched[*a] = true;
                }
            }
        }
        for (node, contribution) in nodes.iter_mut().zip(local.iter()) {
            node.grad += contribution;
        }
        Ok(())
    }

    fn push(&self, data: Array2<f64>, op: Op) -> Value {
        let mut nodes = self.nodes.borrow_mut();
        let grad = Array2::zeros(data.dim());
        nodes.push(Node { data, grad, op });
        Value {
            tape_id: self.id,
            index: nodes.len() - 1,
        }
    }

    fn check(&self, v: Value) -> Result<(), AutodiffError> {
        if v.tape_id != self.id {
            return Err(AutodiffError::ForeignValue);
        }
        Ok(())
    }

    fn dim_of(&self, v: Value) -> Result<(usize, usize), AutodiffError> {
        self.check(v)?;
        Ok(self.nodes.borrow()[v.index].data.dim())
    }

    fn same_shape(&self, op: &'static str, a: Value, b: Value) -> Result<(), AutodiffError> {
        let (da, db) = (self.dim_of(a)?, self.dim_of(b)?);
        if da != db {
            return Err(AutodiffError::Shape {
                op,
                left: da,
                right: db,
            });
        }
        Ok(())
    }
}

#[inline]
fn selu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

#[inline]
fn selu_grad_scalar(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Forward-only kernels shared with inference code paths, so a tape-built
/// forward pass and a plain one produce bit-identical numbers.
pub fn softmax_rows_kernel(input: &Array2<f64>) -> Array2<f64> {
    let mut out = input.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// Elementwise SELU, the forward half of [`Tape::selu`].
pub fn selu_kernel(input: &Array2<f64>) -> Array2<f64> {
    input.mapv(selu_scalar)
}

/// Elementwise `max(x, 0)`, the forward half of [`Tape::max0`].
pub fn max0_kernel(input: &Array2<f64>) -> Array2<f64> {
    input.mapv(|x| x.max(0.0))
}

/// Adam with bias-corrected first and second moments. Moment buffers live
/// here; parameters and gradients are the caller's arrays.
pub struct AdamState {
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamState {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self::with_settings(shapes, 0.9, 0.999, 1e-8).expect("defaults are valid")
    }

    pub fn with_settings(
        shapes: &[(usize, usize)],
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self, AutodiffError> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(AutodiffError::InvalidOptimizer(format!(
                "betas must lie in [0, 1), got ({beta1}, {beta2})"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(AutodiffError::InvalidOptimizer(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            step: 0,
            beta1,
            beta2,
            epsilon,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: `p -= lr * m_hat / (sqrt(v_hat) + epsilon)` per tensor.
    pub fn step(
        &mut self,
        lr: f64,
        params: &mut [&mut Array2<f64>],
        grads: &[Array2<f64>],
    ) -> Result<(), AutodiffError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(AutodiffError::InvalidOptimizer(format!(
                "expected {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.dim() != g.dim() || p.dim() != m.dim() {
                return Err(AutodiffError::Shape {
                    op: "adam_step",
                    left: p.dim(),
                    right: g.dim(),
                });
            }
            m.zip_mut_with(g, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(g, |vi, &gi| *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi);
            ndarray::Zip::from(&mut **p)
                .and(&*m)
                .and(&*v)
                .for_each(|pi, &mi, &vi| {
                    *pi -= lr * (mi / c1) / ((vi / c2).sqrt() + self.epsilon);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn forward_values_match_hand_computation() {
        let tape = Tape::new();
        let a = tape.value(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = tape.value(array![[0.5, -1.0], [1.0, 0.0]]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.data(c).unwrap(), array![[2.5, -1.0], [5.5, -3.0]]);
        let s = tape.sum_all(c).unwrap();
        assert_eq!(tape.scalar(s).unwrap(), 4.0);
    }

    #[test]
    fn matmul_gradients_match_transpose_rule() {
        // loss = sum(A B) gives dA = ones * B^T and dB = A^T * ones.
        let tape = Tape::new();
        let a = tape.value(array![[1.0, 2.0], [3.0, 4.0]]);
        let b = tape.value(array![[5.0, 6.0], [7.0, 8.0]]);
        let c = tape.matmul(a, b).unwrap();
        let loss = tape.sum_all(c).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap(), array![[11.0, 15.0], [11.0, 15.0]]);
        assert_eq!(tape.grad(b).unwrap(), array![[4.0, 4.0], [6.0, 6.0]]);
    }

    #[test]
    fn fan_out_accumulates_and_double_backward_doubles() {
        // y = x + x: dy/dx = 2 through fan-out accumulation.
        let tape = Tape::new();
        let x = tape.value(array![[3.0]]);
        let y = tape.add(x, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap()[[0, 0]], 2.0);
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap()[[0, 0]], 4.0);
        tape.zero_grads();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap()[[0, 0]], 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let tape = Tape::new();
        let x = tape.value(array![[1.0, 2.0]]);
        match tape.backward(x) {
            Err(AutodiffError::NonScalarLoss { rows: 1, cols: 2 }) => {}
            other => panic!("expected NonScalarLoss, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let tape = Tape::new();
        let a = tape.value(Array2::zeros((2, 3)));
        let b = tape.value(Array2::zeros((2, 3)));
        assert!(matches!(
            tape.matmul(a, b),
            Err(AutodiffError::Shape { op: "matmul", .. })
        ));
        let c = tape.value(Array2::zeros((3, 2)));
        assert!(matches!(
            tape.add(a, c),
            Err(AutodiffError::Shape { op: "add", .. })
        ));
        let bias = tape.value(Array2::zeros((3, 1)));
        assert!(matches!(
            tape.add_bias(a, bias),
            Err(AutodiffError::Shape { op: "add_bias", .. })
        ));
    }

    #[test]
    fn values_are_tape_specific() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let x = t1.value(array![[1.0]]);
        assert!(matches!(t2.data(x), Err(AutodiffError::ForeignValue)));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_are_shift_invariant() {
        let tape = Tape::new();
        let x = tape.value(array![[0.0, 0.0], [1000.0, 1000.0], [-1000.0, -999.0]]);
        let s = tape.softmax_rows(x).unwrap();
        let out = tape.data(s).unwrap();
        for row in out.rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-9, "row sum {sum}");
            assert!(row.iter().all(|&p| p.is_finite() && p > 0.0));
        }
        assert!((out[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((out[[1, 0]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn selu_matches_closed_form_at_minus_one() {
        let tape = Tape::new();
        let x = tape.value(array![[-1.0, 0.0, 2.0]]);
        let y = tape.selu(x).unwrap();
        let out = tape.data(y).unwrap();
        let expected = SELU_LAMBDA * SELU_ALPHA * ((-1.0f64).exp() - 1.0);
        assert!((out[[0, 0]] - expected).abs() < 1e-15);
        assert!((out[[0, 0]] + 1.1113).abs() < 1e-4);
        assert_eq!(out[[0, 1]], 0.0);
        assert!((out[[0, 2]] - 2.0 * SELU_LAMBDA).abs() < 1e-15);
    }

    #[test]
    fn max0_subgradient_at_zero_is_zero() {
        let tape = Tape::new();
        let x = tape.value(array![[0.0, -1.0, 2.0]]);
        let y = tape.max0(x).unwrap();
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), array![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn log_composes_with_exp_as_identity_gradient() {
        let tape = Tape::new();
        let x = tape.value(array![[0.3, 1.7]]);
        let y = tape.log(tape.exp(x).unwrap()).unwrap();
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss).unwrap();
        let g = tape.grad(x).unwrap();
        assert!((g[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((g[[0, 1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn concat_rows_routes_gradients_to_the_right_parent() {
        let tape = Tape::new();
        let a = tape.value(array![[1.0, 2.0]]);
        let b = tape.value(array![[3.0, 4.0], [5.0, 6.0]]);
        let c = tape.concat_rows(a, b).unwrap();
        assert_eq!(tape.shape(c).unwrap(), (3, 2));
        let w = tape.value(array![[1.0, 10.0], [100.0, 1000.0], [2.0, 20.0]]);
        let loss = tape.sum_all(tape.mul(c, w).unwrap()).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap(), array![[1.0, 10.0]]);
        assert_eq!(tape.grad(b).unwrap(), array![[100.0, 1000.0], [2.0, 20.0]]);
    }

    #[test]
    fn apply_map_backpropagates_through_transpose() {
        struct Doubler;
        impl LinearMap for Doubler {
            fn dim(&self) -> usize {
                2
            }
            fn apply(&self, m: &Array2<f64>) -> Array2<f64> {
                m.mapv(|x| 2.0 * x)
            }
            fn apply_transpose(&self, m: &Array2<f64>) -> Array2<f64> {
                m.mapv(|x| 2.0 * x)
            }
        }
        let tape = Tape::new();
        let x = tape.value(array![[1.0], [3.0]]);
        let y = tape.apply_map(Rc::new(Doubler), x).unwrap();
        assert_eq!(tape.data(y).unwrap(), array![[2.0], [6.0]]);
        let loss = tape.sum_all(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), array![[2.0], [2.0]]);
    }

    #[test]
    fn adam_first_step_moves_by_roughly_lr() {
        let mut adam = AdamState::new(&[(1, 1)]);
        let mut p = array![[1.0]];
        let g = array![[1.0]];
        adam.step(0.1, &mut [&mut p], &[g]).unwrap();
        // Bias correction makes m_hat = g and v_hat = g^2 on step one, so
        // the move is lr / (1 + eps) regardless of gradient magnitude.
        assert!((p[[0, 0]] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut adam = AdamState::new(&[(1, 1)]);
        let mut p = array![[5.0]];
        for _ in 0..2000 {
            let g = array![[2.0 * p[[0, 0]]]];
            let mut refs = [&mut p];
            adam.step(0.05, &mut refs, &[g]).unwrap();
        }
        assert!(p[[0, 0]].abs() < 1e-2, "did not converge: {}", p[[0, 0]]);
    }

    #[test]
    fn adam_rejects_bad_settings_and_mismatched_tensors() {
        assert!(AdamState::with_settings(&[(1, 1)], 1.0, 0.999, 1e-8).is_err());
        assert!(AdamState::with_settings(&[(1, 1)], 0.9, -0.1, 1e-8).is_err());
        assert!(AdamState::with_settings(&[(1, 1)], 0.9, 0.999, 0.0).is_err());
        let mut adam = AdamState::new(&[(1, 1)]);
        let mut p = array![[0.0]];
        assert!(adam.step(0.1, &mut [&mut p], &[]).is_err());
    }

    #[test]
    fn scale_and_add_scalar_gradients() {
        let tape = Tape::new();
        let x = tape.value(array![[2.0, -1.0]]);
        let y = tape.scale(x, -3.0).unwrap();
        let z = tape.add_scalar(y, 10.0).unwrap();
        assert_eq!(tape.data(z).unwrap(), array![[4.0, 13.0]]);
        let loss = tape.sum_all(z).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), array![[-3.0, -3.0]]);
    }

    #[test]
    fn mean_all_spreads_gradient_uniformly() {
        let tape = Tape::new();
        let x = tape.value(array![[1.0, 2.0], [3.0, 4.0]]);
        let m = tape.mean_all(x).unwrap();
        assert_eq!(tape.scalar(m).unwrap(), 2.5);
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x).unwrap(), Array2::from_elem((2, 2), 0.25));
    }

    #[test]
    fn sum_rows_and_transpose_shapes_and_grads() {
        let tape = Tape::new();
        let x = tape.value(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let t = tape.transpose(x).unwrap();
        assert_eq!(tape.shape(t).unwrap(), (3, 2));
        let s = tape.sum_rows(x).unwrap();
        assert_eq!(tape.data(s).unwrap(), array![[6.0], [15.0]]);
        let w = tape.value(array![[2.0], [5.0]]);
        let loss = tape.sum_all(tape.mul(s, w).unwrap()).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(
            tape.grad(x).unwrap(),
            array![[2.0, 2.0, 2.0], [5.0, 5.0, 5.0]]
        );
    }
}
