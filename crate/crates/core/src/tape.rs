//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! A [`Tape`] records primitive tensor operations during the forward pass and
//! replays them in exact reverse order on [`Tape::backward`]. Two gradient
//! modes exist: `Standard` is plain reverse-mode differentiation; `Guided`
//! additionally clips the upstream gradient entering every rectifier-family
//! nonlinearity (leaky and exponential rectifiers) to be non-negative before
//! the local derivative rule is applied.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRef(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Standard,
    Guided,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorRef, TensorRef),
    Sub(TensorRef, TensorRef),
    Mul(TensorRef, TensorRef),
    AddScalar(TensorRef),
    MulScalar(TensorRef, f64),
    MatMul(TensorRef, TensorRef),
    /// Broadcast-add a `1 x c` bias row to every row of an `n x c` matrix.
    AddBias(TensorRef, TensorRef),
    LeakyRelu(TensorRef, f64),
    Elu(TensorRef, f64),
    Sigmoid(TensorRef),
    Abs(TensorRef),
    Powf(TensorRef, f64),
    BinaryEntropy(TensorRef),
    GatherRows(TensorRef, Vec<usize>),
    ScatterAddRows(TensorRef, Vec<usize>),
    /// Multiply row i of a matrix by entry i of a column vector.
    ScaleRows(TensorRef, TensorRef),
    ConcatCols(Vec<TensorRef>),
    ConcatRows(Vec<TensorRef>),
    /// Softmax within index groups of a column vector.
    SegmentSoftmax(TensorRef, Vec<usize>),
    /// Divide each entry by the sum of its index group.
    SegmentNormalize(TensorRef, Vec<usize>),
    LogSoftmaxRows(TensorRef),
    /// Mean negative log-likelihood of `labels` over the listed rows.
    CrossEntropy(TensorRef, Vec<usize>, Vec<usize>),
    Select(TensorRef, usize, usize),
    Sum(TensorRef),
    Mean(TensorRef),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradient of the recorded scalar with respect to each tape entry.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient tensor for `r`; zeros if no path reached it.
    pub fn get(&self, r: TensorRef) -> Tensor {
        match &self.grads[r.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[r.0].0, self.shapes[r.0].1),
        }
    }

    pub fn contains(&self, r: TensorRef) -> bool {
        self.grads[r.0].is_some()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const ENTROPY_EPS: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, r: TensorRef) -> &Tensor {
        &self.nodes[r.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> TensorRef {
        self.nodes.push(Node { value, op });
        TensorRef(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor) -> TensorRef {
        self.push(t, Op::Leaf)
    }

    /// Alias for [`Tape::leaf`]; constants and differentiable inputs are
    /// both plain tape entries, callers just never ask for constant grads.
    pub fn constant(&mut self, t: Tensor) -> TensorRef {
        self.leaf(t)
    }

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "sub shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn add_scalar(&mut self, a: TensorRef, c: f64) -> TensorRef {
        let out = self.value(a).map(|v| v + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: TensorRef, c: f64) -> TensorRef {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::MulScalar(a, c))
    }

    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> TensorRef {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, a: TensorRef, bias: TensorRef) -> TensorRef {
        let (ta, tb) = (self.value(a), self.value(bias));
        assert_eq!(tb.rows(), 1, "bias must be a 1 x c row");
        assert_eq!(ta.cols(), tb.cols(), "bias width mismatch");
        let mut out = ta.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c) + tb.get(0, c);
                out.set(r, c, v);
            }
        }
        self.push(out, Op::AddBias(a, bias))
    }

    pub fn leaky_relu(&mut self, a: TensorRef, slope: f64) -> TensorRef {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: TensorRef, alpha: f64) -> TensorRef {
        let out = self
            .value(a)
            .map(|v| if v > 0.0 { v } else { alpha * (v.exp() - 1.0) });
        self.push(out, Op::Elu(a, alpha))
    }

    pub fn sigmoid(&mut self, a: TensorRef) -> TensorRef {
        let out = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(out, Op::Sigmoid(a))
    }

    pub fn abs(&mut self, a: TensorRef) -> TensorRef {
        let out = self.value(a).map(f64::abs);
        self.push(out, Op::Abs(a))
    }

    /// Elementwise power with a constant exponent; base must stay positive
    /// for non-integer exponents.
    pub fn powf(&mut self, a: TensorRef, exponent: f64) -> TensorRef {
        let out = self.value(a).map(|v| v.powf(exponent));
        self.push(out, Op::Powf(a, exponent))
    }

    /// Elementwise binary entropy -m ln m - (1-m) ln(1-m), clamped away
    /// from {0, 1}.
    pub fn binary_entropy(&mut self, a: TensorRef) -> TensorRef {
        let out = self.value(a).map(|v| {
            let m = v.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
            -(m * m.ln() + (1.0 - m) * (1.0 - m).ln())
        });
        self.push(out, Op::BinaryEntropy(a))
    }

    pub fn gather_rows(&mut self, a: TensorRef, idx: &[usize]) -> TensorRef {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut out = Tensor::zeros(idx.len(), cols);
        for (r, &i) in idx.iter().enumerate() {
            out.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(ta.row(i));
        }
        self.push(out, Op::GatherRows(a, idx.to_vec()))
    }

    pub fn scatter_add_rows(&mut self, a: TensorRef, idx: &[usize], out_rows: usize) -> TensorRef {
        let ta = self.value(a);
        assert_eq!(ta.rows(), idx.len(), "one index per scattered row");
        let cols = ta.cols();
        let mut out = Tensor::zeros(out_rows, cols);
        for (r, &i) in idx.iter().enumerate() {
            debug_assert!(i < out_rows);
            let src = ta.row(r).to_vec();
            let dst = &mut out.data_mut()[i * cols..(i + 1) * cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        self.push(out, Op::ScatterAddRows(a, idx.to_vec()))
    }

    pub fn scale_rows(&mut self, a: TensorRef, scale: TensorRef) -> TensorRef {
        let (ta, ts) = (self.value(a), self.value(scale));
        assert_eq!(ts.cols(), 1, "scale must be a column vector");
        assert_eq!(ta.rows(), ts.rows(), "one scale per row");
        let cols = ta.cols();
        let mut out = ta.clone();
        for r in 0..out.rows() {
            let s = ts.data()[r];
            for v in &mut out.data_mut()[r * cols..(r + 1) * cols] {
                *v *= s;
            }
        }
        self.push(out, Op::ScaleRows(a, scale))
    }

    pub fn concat_cols(&mut self, parts: &[TensorRef]) -> TensorRef {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let tp = self.value(p);
            assert_eq!(tp.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.data_mut()[r * total + offset..r * total + offset + tp.cols()]
                    .copy_from_slice(tp.row(r));
            }
            offset += tp.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[TensorRef]) -> TensorRef {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut out = Tensor::zeros(total, cols);
        let mut offset = 0;
        for &p in parts {
            let tp = self.value(p);
            assert_eq!(tp.cols(), cols, "concat_rows col mismatch");
            out.data_mut()[offset * cols..(offset + tp.rows()) * cols]
                .copy_from_slice(tp.data());
            offset += tp.rows();
        }
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    /// Numerically stable softmax within segments of a column vector.
    /// `segments[i]` names the group of entry i; groups need not be
    /// contiguous.
    pub fn segment_softmax(&mut self, a: TensorRef, segments: &[usize]) -> TensorRef {
        let ta = self.value(a);
        assert_eq!(ta.cols(), 1, "segment_softmax expects a column vector");
        assert_eq!(ta.rows(), segments.len());
        let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut maxes = vec![f64::NEG_INFINITY; nseg];
        for (i, &s) in segments.iter().enumerate() {
            maxes[s] = maxes[s].max(ta.data()[i]);
        }
        let mut sums = vec![0.0; nseg];
        let mut exps = vec![0.0; segments.len()];
        for (i, &s) in segments.iter().enumerate() {
            let e = (ta.data()[i] - maxes[s]).exp();
            exps[i] = e;
            sums[s] += e;
        }
        for (i, &s) in segments.iter().enumerate() {
            exps[i] /= sums[s];
        }
        let out = Tensor::vector(exps);
        self.push(out, Op::SegmentSoftmax(a, segments.to_vec()))
    }

    /// Divide each entry by the sum over its segment. Segment sums must be
    /// nonzero.
    pub fn segment_normalize(&mut self, a: TensorRef, segments: &[usize]) -> TensorRef {
        let ta = self.value(a);
        assert_eq!(ta.cols(), 1, "segment_normalize expects a column vector");
        assert_eq!(ta.rows(), segments.len());
        let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut sums = vec![0.0; nseg];
        for (i, &s) in segments.iter().enumerate() {
            sums[s] += ta.data()[i];
        }
        let mut data = vec![0.0; segments.len()];
        for (i, &s) in segments.iter().enumerate() {
            data[i] = ta.data()[i] / sums[s];
        }
        let out = Tensor::vector(data);
        self.push(out, Op::SegmentNormalize(a, segments.to_vec()))
    }

    pub fn log_softmax_rows(&mut self, a: TensorRef) -> TensorRef {
        let ta = self.value(a);
        let (rows, cols) = ta.shape();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = ta.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for c in 0..cols {
                out.set(r, c, row[c] - lse);
            }
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    /// Mean cross-entropy of `logits` against integer labels over the given
    /// row subset.
    pub fn cross_entropy(
        &mut self,
        logits: TensorRef,
        labels: &[usize],
        rows: &[usize],
    ) -> TensorRef {
        let tl = self.value(logits);
        assert_eq!(tl.rows(), labels.len(), "one label per logits row");
        assert!(!rows.is_empty(), "cross_entropy over an empty row set");
        let mut total = 0.0;
        for &r in rows {
            let row = tl.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total -= row[labels[r]] - lse;
        }
        let out = Tensor::scalar(total / rows.len() as f64);
        self.push(out, Op::CrossEntropy(logits, labels.to_vec(), rows.to_vec()))
    }

    pub fn select(&mut self, a: TensorRef, row: usize, col: usize) -> TensorRef {
        let v = self.value(a).get(row, col);
        self.push(Tensor::scalar(v), Op::Select(a, row, col))
    }

    pub fn sum(&mut self, a: TensorRef) -> TensorRef {
        let v = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(a))
    }

    pub fn mean(&mut self, a: TensorRef) -> TensorRef {
        let ta = self.value(a);
        let v = ta.data().iter().sum::<f64>() / ta.len() as f64;
        self.push(Tensor::scalar(v), Op::Mean(a))
    }

    /// Reverse pass from a scalar output. Visits recorded operations in
    /// exact reverse order, so results are deterministic.
    pub fn backward(&self, output: TensorRef, mode: GradientMode) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::UnknownTensor(output.0));
        }
        let out_shape = self.nodes[output.0].value.shape();
        if out_shape != (1, 1) {
            return Err(Error::NonScalarBackward { rows: out_shape.0, cols: out_shape.1 });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.accumulate(i, &g, mode, &mut grads);
            grads[i] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, i: usize, g: &Tensor, mode: GradientMode, grads: &mut [Option<Tensor>]) {
        let add_to = |grads: &mut [Option<Tensor>], r: TensorRef, delta: Tensor| {
            match &mut grads[r.0] {
                Some(acc) => {
                    for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                        *a += d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, g.clone());
                add_to(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let da = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect(),
                );
                let db = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect(),
                );
                add_to(grads, *a, da);
                add_to(grads, *b, db);
            }
            Op::AddScalar(a) => add_to(grads, *a, g.clone()),
            Op::MulScalar(a, c) => add_to(grads, *a, g.map(|v| v * c)),
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                add_to(grads, *a, g.matmul(&tb.transpose()));
                add_to(grads, *b, ta.transpose().matmul(g));
            }
            Op::AddBias(a, bias) => {
                add_to(grads, *a, g.clone());
                let mut db = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        let v = db.get(0, c) + g.get(r, c);
                        db.set(0, c, v);
                    }
                }
                add_to(grads, *bias, db);
            }
            Op::LeakyRelu(a, slope) => {
                let ta = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(g.rows(), g.cols());
                for (k, d) in da.data_mut().iter_mut().enumerate() {
                    let up = clip_upstream(g.data()[k], mode);
                    *d = up * if ta.data()[k] > 0.0 { 1.0 } else { *slope };
                }
                add_to(grads, *a, da);
            }
            Op::Elu(a, alpha) => {
                let ta = &self.nodes[a.0].value;
                let ty = &self.nodes[i].value;
                let mut da = Tensor::zeros(g.rows(), g.cols());
                for (k, d) in da.data_mut().iter_mut().enumerate() {
                    let up = clip_upstream(g.data()[k], mode);
                    let local = if ta.data()[k] > 0.0 { 1.0 } else { ty.data()[k] + alpha };
                    *d = up * local;
                }
                add_to(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let ty = &self.nodes[i].value;
                let da = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(ty.data())
                        .map(|(up, y)| up * y * (1.0 - y))
                        .collect(),
                );
                add_to(grads, *a, da);
            }
            Op::Abs(a) => {
                let ta = &self.nodes[a.0].value;
                let da = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(ta.data())
                        .map(|(up, x)| up * if *x > 0.0 { 1.0 } else if *x < 0.0 { -1.0 } else { 0.0 })
                        .collect(),
                );
                add_to(grads, *a, da);
            }
            Op::Powf(a, c) => {
                let ta = &self.nodes[a.0].value;
                let da = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(ta.data())
                        .map(|(up, x)| up * c * x.powf(c - 1.0))
                        .collect(),
                );
                add_to(grads, *a, da);
            }
            Op::BinaryEntropy(a) => {
                let ta = &self.nodes[a.0].value;
                let da = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(ta.data())
                        .map(|(up, m)| {
                            let m = m.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
                            up * ((1.0 - m) / m).ln()
                        })
                        .collect(),
                );
                add_to(grads, *a, da);
            }
            Op::GatherRows(a, idx) => {
                let ta = &self.nodes[a.0].value;
                let cols = ta.cols();
                let mut da = Tensor::zeros(ta.rows(), cols);
                for (r, &src) in idx.iter().enumerate() {
                    let grow = g.row(r).to_vec();
                    let drow = &mut da.data_mut()[src * cols..(src + 1) * cols];
                    for (d, v) in drow.iter_mut().zip(grow) {
                        *d += v;
                    }
                }
                add_to(grads, *a, da);
            }
            Op::ScatterAddRows(a, idx) => {
                let ta = &self.nodes[a.0].value;
                let cols = ta.cols();
                let mut da = Tensor::zeros(ta.rows(), cols);
                for (r, &dst) in idx.iter().enumerate() {
                    da.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(g.row(dst));
                }
                add_to(grads, *a, da);
            }
            Op::ScaleRows(a, scale) => {
                let (ta, ts) = (&self.nodes[a.0].value, &self.nodes[scale.0].value);
                let cols = ta.cols();
                let mut da = Tensor::zeros(ta.rows(), cols);
                let mut ds = Tensor::zeros(ts.rows(), 1);
                for r in 0..ta.rows() {
                    let s = ts.data()[r];
                    let mut dot = 0.0;
                    for c in 0..cols {
                        da.data_mut()[r * cols + c] = g.get(r, c) * s;
                        dot += g.get(r, c) * ta.get(r, c);
                    }
                    ds.data_mut()[r] = dot;
                }
                add_to(grads, *a, da);
                add_to(grads, *scale, ds);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = &self.nodes[p.0].value;
                    let mut dp = Tensor::zeros(tp.rows(), tp.cols());
                    for r in 0..tp.rows() {
                        for c in 0..tp.cols() {
                            dp.set(r, c, g.get(r, offset + c));
                        }
                    }
                    offset += tp.cols();
                    add_to(grads, p, dp);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = &self.nodes[p.0].value;
                    let cols = tp.cols();
                    let mut dp = Tensor::zeros(tp.rows(), cols);
                    dp.data_mut()
                        .copy_from_slice(&g.data()[offset * cols..(offset + tp.rows()) * cols]);
                    offset += tp.rows();
                    add_to(grads, p, dp);
                }
            }
            Op::SegmentSoftmax(a, segments) => {
                let ty = &self.nodes[i].value;
                let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
                let mut dots = vec![0.0; nseg];
                for (k, &s) in segments.iter().enumerate() {
                    dots[s] += g.data()[k] * ty.data()[k];
                }
                let mut da = Tensor::zeros(ty.rows(), 1);
                for (k, &s) in segments.iter().enumerate() {
                    da.data_mut()[k] = ty.data()[k] * (g.data()[k] - dots[s]);
                }
                add_to(grads, *a, da);
            }
            Op::SegmentNormalize(a, segments) => {
                let (ta, ty) = (&self.nodes[a.0].value, &self.nodes[i].value);
                let nseg = segments.iter().copied().max().map_or(0, |m| m + 1);
                let mut sums = vec![0.0; nseg];
                let mut dots = vec![0.0; nseg];
                for (k, &s) in segments.iter().enumerate() {
                    sums[s] += ta.data()[k];
                    dots[s] += g.data()[k] * ty.data()[k];
                }
                let mut da = Tensor::zeros(ty.rows(), 1);
                for (k, &s) in segments.iter().enumerate() {
                    da.data_mut()[k] = (g.data()[k] - dots[s]) / sums[s];
                }
                add_to(grads, *a, da);
            }
            Op::LogSoftmaxRows(a) => {
                let ty = &self.nodes[i].value;
                let (rows, cols) = ty.shape();
                let mut da = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let gsum: f64 = g.row(r).iter().sum();
                    for c in 0..cols {
                        da.set(r, c, g.get(r, c) - ty.get(r, c).exp() * gsum);
                    }
                }
                add_to(grads, *a, da);
            }
            Op::CrossEntropy(logits, labels, rows) => {
                let tl = &self.nodes[logits.0].value;
                let up = g.item() / rows.len() as f64;
                let mut dl = Tensor::zeros(tl.rows(), tl.cols());
                for &r in rows {
                    let row = tl.row(r);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    for c in 0..tl.cols() {
                        let p = (row[c] - max).exp() / denom;
                        let delta = if c == labels[r] { 1.0 } else { 0.0 };
                        let v = dl.get(r, c) + up * (p - delta);
                        dl.set(r, c, v);
                    }
                }
                add_to(grads, *logits, dl);
            }
            Op::Select(a, row, col) => {
                let ta = &self.nodes[a.0].value;
                let mut da = Tensor::zeros(ta.rows(), ta.cols());
                da.set(*row, *col, g.item());
                add_to(grads, *a, da);
            }
            Op::Sum(a) => {
                let ta = &self.nodes[a.0].value;
                add_to(grads, *a, Tensor::filled(ta.rows(), ta.cols(), g.item()));
            }
            Op::Mean(a) => {
                let ta = &self.nodes[a.0].value;
                let v = g.item() / ta.len() as f64;
                add_to(grads, *a, Tensor::filled(ta.rows(), ta.cols(), v));
            }
        }
    }
}

fn clip_upstream(g: f64, mode: GradientMode) -> f64 {
    match mode {
        GradientMode::Standard => g,
        GradientMode::Guided => g.max(0.0),
    }
}

/// Compare the analytic gradient of a scalar-valued tape function against
/// central finite differences at `x`. Returns the maximum over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, TensorRef) -> TensorRef,
{
    let eval = |t: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let xr = tape.leaf(t.clone());
        let out = f(&mut tape, xr);
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(Error::NonScalarBackward { rows: v.rows(), cols: v.cols() });
        }
        let v = v.item();
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check function output".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let xr = tape.leaf(x.clone());
    let out = f(&mut tape, xr);
    if !tape.value(out).is_finite() {
        return Err(Error::NonFinite("grad_check function output".into()));
    }
    let analytic = tape.backward(out, GradientMode::Standard)?.get(xr);

    let mut max_err: f64 = 0.0;
    for k in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[k] += eps;
        let mut minus = x.clone();
        minus.data_mut()[k] -= eps;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        let a = analytic.data()[k];
        let err = (a - numeric).abs() / f64::max(1.0, a.abs());
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
