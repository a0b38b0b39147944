use std::fmt::Debug;

use ndarray::{s, Array2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type the tape can differentiate: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float + NumAssign + FromPrimitive + LinalgScalar + ScalarOperand + Debug + Default + Send + Sync + std::iter::Sum + 'static
{
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, F),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Square(Var),
    Mean(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    TimeWindows { x: Var, batch: usize, kernel: usize },
    Normalize { x: Var, inv_std: Vec<F> },
    MeanPoolTime { x: Var, batch: usize },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Array2<F> },
}

struct Node<F> {
    value: Array2<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Records matrix operations for reverse-mode differentiation.
///
/// Every value is a 2-D matrix. Sequences are stored time-major: row
/// `t * batch + b` holds frame `t` of batch item `b`.
pub struct Tape<F: Real> {
    nodes: Vec<Node<F>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<F>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Array2<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient (inputs, frozen weights, masks).
    pub fn constant(&mut self, value: Array2<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<F> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    /// `a + row` with a 1×n row broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRow(a, row), ng)
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) * self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::MulRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let v = self.value(a) * c;
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: F) -> Var {
        let v = self.value(a).mapv(|x| x + c);
        let ng = self.ng(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.tanh());
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > F::zero() { x } else { F::zero() });
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.abs());
        let ng = self.ng(a);
        self.push(v, Op::Abs(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        let ng = self.ng(a);
        self.push(v, Op::Square(a), ng)
    }

    /// Mean of all entries, as a 1×1 matrix.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a).mean().unwrap_or_else(F::zero);
        let ng = self.ng(a);
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(v, Op::SliceCols(a, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        let ng = self.ng(a);
        self.push(v, Op::SliceRows(a, start), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(v, Op::ConcatRows(parts.to_vec()), ng)
    }

    /// Zero-padded temporal windows for a same-padded 1-D convolution.
    ///
    /// `x` is time-major (T·B)×C; the result is (T·B)×(K·C) where block `k`
    /// holds frame `t + k - K/2` of the same batch item.
    pub fn time_windows(&mut self, x: Var, batch: usize, kernel: usize) -> Var {
        let xv = self.value(x);
        let (rows, c) = xv.dim();
        let frames = rows / batch;
        let half = (kernel / 2) as i64;
        let mut out = Array2::zeros((rows, kernel * c));
        for t in 0..frames {
            for k in 0..kernel {
                let src = t as i64 + k as i64 - half;
                if src < 0 || src >= frames as i64 {
                    continue;
                }
                for b in 0..batch {
                    out.slice_mut(s![t * batch + b, k * c..(k + 1) * c])
                        .assign(&xv.row(src as usize * batch + b));
                }
            }
        }
        let ng = self.ng(x);
        self.push(out, Op::TimeWindows { x, batch, kernel }, ng)
    }

    /// Per-column standardization with batch statistics (the parameter-free
    /// part of batch normalization).
    pub fn normalize_columns(&mut self, x: Var, eps: F) -> (Var, Array2<F>, Array2<F>) {
        let xv = self.value(x);
        let n = F::from_usize(xv.nrows()).unwrap();
        let mean = xv.sum_axis(Axis(0)) / n;
        let centered = xv - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std: Vec<F> = var.iter().map(|v| F::one() / (*v + eps).sqrt()).collect();
        let inv = ndarray::Array1::from(inv_std.clone());
        let out = centered * &inv;
        let ng = self.ng(x);
        let mean2 = mean.insert_axis(Axis(0));
        let var2 = var.insert_axis(Axis(0));
        (self.push(out, Op::Normalize { x, inv_std }, ng), mean2, var2)
    }

    /// Per-item mean over time of a time-major (T·B)×C matrix, giving B×C.
    pub fn mean_pool_time(&mut self, x: Var, batch: usize) -> Var {
        let xv = self.value(x);
        let frames = xv.nrows() / batch;
        let mut out = Array2::zeros((batch, xv.ncols()));
        for t in 0..frames {
            for b in 0..batch {
                let mut row = out.row_mut(b);
                row += &xv.row(t * batch + b);
            }
        }
        out /= F::from_usize(frames).unwrap();
        let ng = self.ng(x);
        self.push(out, Op::MeanPoolTime { x, batch }, ng)
    }

    /// Mean softmax cross-entropy of B×K logits against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let lv = self.value(logits);
        let mut probs = lv.clone();
        let mut loss = F::zero();
        for (mut row, &label) in probs.rows_mut().into_iter().zip(labels) {
            let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: F = row.iter().cloned().sum();
            row.mapv_inplace(|v| v / sum);
            loss = loss - row[label].max(F::min_positive_value()).ln();
        }
        loss = loss / F::from_usize(labels.len()).unwrap();
        let ng = self.ng(logits);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        )
    }

    /// Gradients of the scalar `output` with respect to every node that
    /// needs one. Entries for constants are `None`.
    pub fn backward(&self, output: Var) -> Gradients<F> {
        let mut grads: Vec<Option<Array2<F>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::from_elem(self.nodes[output.0].value.dim(), F::one()));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.ng(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, g.mapv(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.ng(*b) {
                        accumulate(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::AddRow(a, row) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.ng(*row) {
                        accumulate(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                }
                Op::MulRow(a, row) => {
                    if self.ng(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*row));
                    }
                    if self.ng(*row) {
                        let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *row, gr);
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, &g * *c),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Tanh(a) => {
                    let mut d = node.value.mapv(|y| F::one() - y * y);
                    d *= &g;
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let mut d = node.value.mapv(|y| y * (F::one() - y));
                    d *= &g;
                    accumulate(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| {
                            if y <= F::zero() {
                                *d = F::zero()
                            }
                        });
                    accumulate(&mut grads, *a, d);
                }
                Op::Abs(a) => {
                    let d = self.value(*a).mapv(|x| x.signum_or_zero()) * &g;
                    accumulate(&mut grads, *a, d);
                }
                Op::Square(a) => {
                    let d = self.value(*a) * &g * F::from_f64c(2.0);
                    accumulate(&mut grads, *a, d);
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    let n = F::from_usize(av.len()).unwrap();
                    accumulate(&mut grads, *a, Array2::from_elem(av.dim(), g[[0, 0]] / n));
                }
                Op::SliceCols(a, start) => {
                    let mut full = Array2::zeros(self.value(*a).dim());
                    full.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads, *a, full);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if self.ng(*p) {
                            accumulate(&mut grads, *p, g.slice(s![.., off..off + w]).to_owned());
                        }
                        off += w;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut full = Array2::zeros(self.value(*a).dim());
                    full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    accumulate(&mut grads, *a, full);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        if self.ng(*p) {
                            accumulate(&mut grads, *p, g.slice(s![off..off + h, ..]).to_owned());
                        }
                        off += h;
                    }
                }
                Op::TimeWindows { x, batch, kernel } => {
                    let (rows, c) = self.value(*x).dim();
                    let frames = rows / batch;
                    let half = (*kernel / 2) as i64;
                    let mut gx = Array2::zeros((rows, c));
                    for t in 0..frames {
                        for k in 0..*kernel {
                            let src = t as i64 + k as i64 - half;
                            if src < 0 || src >= frames as i64 {
                                continue;
                            }
                            for b in 0..*batch {
                                let mut dst = gx.row_mut(src as usize * batch + b);
                                dst += &g.slice(s![t * batch + b, k * c..(k + 1) * c]);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Normalize { x, inv_std } => {
                    // dx = inv_std * (g - mean(g) - xhat * mean(g * xhat))
                    let xhat = &node.value;
                    let n = F::from_usize(xhat.nrows()).unwrap();
                    let mean_g = g.sum_axis(Axis(0)) / n;
                    let mean_gx = (&g * xhat).sum_axis(Axis(0)) / n;
                    let mut dx = &g - &mean_g - &(xhat * &mean_gx);
                    let inv = ndarray::Array1::from(inv_std.clone());
                    dx *= &inv;
                    accumulate(&mut grads, *x, dx);
                }
                Op::MeanPoolTime { x, batch } => {
                    let (rows, c) = self.value(*x).dim();
                    let frames = rows / batch;
                    let scale = F::one() / F::from_usize(frames).unwrap();
                    let mut gx = Array2::zeros((rows, c));
                    for t in 0..frames {
                        for b in 0..*batch {
                            gx.row_mut(t * batch + b).assign(&(&g.row(b) * scale));
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let mut d = probs.clone();
                    for (b, &l) in labels.iter().enumerate() {
                        d[[b, l]] = d[[b, l]] - F::one();
                    }
                    let scale = g[[0, 0]] / F::from_usize(labels.len()).unwrap();
                    accumulate(&mut grads, *logits, d * scale);
                }
            }
        }
        Gradients { grads }
    }
}

trait SignumOrZero {
    fn signum_or_zero(self) -> Self;
}

impl<F: Real> SignumOrZero for F {
    fn signum_or_zero(self) -> Self {
        if self > F::zero() {
            F::one()
        } else if self < F::zero() {
            -F::one()
        } else {
            F::zero()
        }
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Array2<F>>], v: Var, g: Array2<F>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Array2<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Array2<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` if nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<F> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}
