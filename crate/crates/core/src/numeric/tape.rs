//! Reverse-mode differentiation over dense `f64` vectors and matrices.
//!
//! Every operation appends a node holding its forward value and enough
//! context to run its pullback. Because nodes are only ever appended, the
//! node index order is a topological order and the backward pass is a
//! single reverse sweep.
//!
//! Leaves are either constants or slices of a [`ParamStore`]. A slice is
//! loaded at most once per tape so gradients for a parameter used many
//! times in a batch accumulate on a single node.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::store::{ParamSlice, ParamStore};
use super::NumericError;

/// Variance below which layer normalization refuses its input.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Norm below which a vector cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamSlice),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Dot(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    MinSet(Vec<Var>, Vec<usize>),
    MeanSet(Vec<Var>),
    Softmax(Var),
    WeightedSum(Var, Vec<Var>),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: f64 },
    L2Normalize(Var, f64),
    Cosine(Var, Var),
    Hinge { pos: Var, neg: Var, active: bool },
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    shape: Shape,
    value: Vec<f64>,
    op: Op,
}

/// Gradients of a scalar output with respect to every parameter slice it
/// depends on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    slices: BTreeMap<ParamSlice, Vec<f64>>,
}

impl Gradients {
    /// Gradient for `slice`, or `None` when the output does not depend on it.
    pub fn get(&self, slice: ParamSlice) -> Option<&[f64]> {
        self.slices.get(&slice).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamSlice, &Vec<f64>)> {
        self.slices.iter()
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// Dense gradient for a slice; zeros when the slice is unreachable.
    pub fn dense(&self, slice: ParamSlice) -> Vec<f64> {
        self.get(slice).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; slice.len])
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    loaded: HashMap<ParamSlice, Var>,
    kink_margin: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), loaded: HashMap::new(), kink_margin: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a length-1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    /// Smallest distance of any recorded pre-activation to a kink of a
    /// piecewise operation (relu, leaky relu, set minimum, hinge).
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.len(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    fn note_kink(&mut self, distance: f64) {
        if distance < self.kink_margin {
            self.kink_margin = distance;
        }
    }

    fn vector_len(&self, op: &'static str, v: Var) -> Result<usize, NumericError> {
        match self.shape(v) {
            Shape::Vector(n) => Ok(n),
            other => Err(NumericError::ShapeMismatch { op, detail: format!("expected a vector, got {other}") }),
        }
    }

    fn same_vectors(&self, op: &'static str, a: Var, b: Var) -> Result<usize, NumericError> {
        let n = self.vector_len(op, a)?;
        let m = self.vector_len(op, b)?;
        if n != m {
            return Err(NumericError::ShapeMismatch { op, detail: format!("[{n}] vs [{m}]") });
        }
        Ok(n)
    }

    fn scalar_operand(&self, op: &'static str, v: Var) -> Result<f64, NumericError> {
        match self.shape(v) {
            Shape::Vector(1) => Ok(self.scalar(v)),
            other => Err(NumericError::ShapeMismatch { op, detail: format!("expected a scalar, got {other}") }),
        }
    }

    fn set_operands(&self, op: &'static str, xs: &[Var]) -> Result<usize, NumericError> {
        let first = *xs.first().ok_or(NumericError::EmptyInput { op })?;
        let n = self.vector_len(op, first)?;
        for &x in &xs[1..] {
            self.same_vectors(op, first, x)?;
        }
        Ok(n)
    }

    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(Shape::Vector(n), values, Op::Constant)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.constant(vec![value])
    }

    /// Leaf bound to a parameter slice, shaped as a vector.
    pub fn param(&mut self, store: &ParamStore, slice: ParamSlice) -> Var {
        self.param_shaped(store, slice, Shape::Vector(slice.len))
    }

    /// Leaf bound to a parameter slice, shaped as a `rows × cols` matrix.
    pub fn param_matrix(&mut self, store: &ParamStore, slice: ParamSlice, rows: usize, cols: usize) -> Var {
        assert_eq!(rows * cols, slice.len, "matrix shape does not cover the slice");
        self.param_shaped(store, slice, Shape::Matrix(rows, cols))
    }

    fn param_shaped(&mut self, store: &ParamStore, slice: ParamSlice, shape: Shape) -> Var {
        if let Some(&v) = self.loaded.get(&slice) {
            debug_assert_eq!(self.shape(v), shape);
            return v;
        }
        let v = self.push(shape, store.slice_values(slice).to_vec(), Op::Param(slice));
        self.loaded.insert(slice, v);
        v
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var, NumericError> {
        let (rows, cols) = match self.shape(m) {
            Shape::Matrix(r, c) => (r, c),
            other => {
                return Err(NumericError::ShapeMismatch { op: "matvec", detail: format!("expected a matrix, got {other}") })
            }
        };
        let n = self.vector_len("matvec", v)?;
        if n != cols {
            return Err(NumericError::ShapeMismatch { op: "matvec", detail: format!("[{rows}x{cols}] * [{n}]") });
        }
        let mv = &self.nodes[m.0].value;
        let vv = &self.nodes[v.0].value;
        let out = (0..rows)
            .map(|i| mv[i * cols..(i + 1) * cols].iter().zip(vv).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Shape::Vector(rows), out, Op::MatVec(m, v)))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var, NumericError> {
        let n = self.same_vectors(op, a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.push(Shape::Vector(n), out, node))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NumericError> {
        let n = self.vector_len("scale", a)?;
        let out = self.value(a).iter().map(|x| x * c).collect();
        Ok(self.push(Shape::Vector(n), out, Op::Scale(a, c)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        if parts.is_empty() {
            return Err(NumericError::EmptyInput { op: "concat" });
        }
        let mut out = Vec::new();
        for &p in parts {
            self.vector_len("concat", p)?;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(Shape::Vector(out.len()), out, Op::Concat(parts.to_vec())))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_vectors("dot", a, b)?;
        let s = dot_values(self.value(a), self.value(b));
        Ok(self.push(Shape::Vector(1), vec![s], Op::Dot(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumericError> {
        let n = self.vector_len("relu", a)?;
        let margin = self.value(a).iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        self.note_kink(margin);
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        Ok(self.push(Shape::Vector(n), out, Op::Relu(a)))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, NumericError> {
        let n = self.vector_len("leaky_relu", a)?;
        let margin = self.value(a).iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        self.note_kink(margin);
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect();
        Ok(self.push(Shape::Vector(n), out, Op::LeakyRelu(a, slope)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericError> {
        let n = self.vector_len("sigmoid", a)?;
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        Ok(self.push(Shape::Vector(n), out, Op::Sigmoid(a)))
    }

    /// Elementwise minimum over a set of equal-length vectors. Ties go to
    /// the earliest input.
    pub fn min_set(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        let n = self.set_operands("min_set", xs)?;
        let mut out = self.value(xs[0]).to_vec();
        let mut arg = vec![0usize; n];
        let mut runner_up = vec![f64::INFINITY; n];
        for (i, &x) in xs.iter().enumerate().skip(1) {
            for (j, &v) in self.nodes[x.0].value.iter().enumerate() {
                if v < out[j] {
                    runner_up[j] = out[j];
                    out[j] = v;
                    arg[j] = i;
                } else if v < runner_up[j] {
                    runner_up[j] = v;
                }
            }
        }
        if xs.len() > 1 {
            let gap = out.iter().zip(&runner_up).fold(f64::INFINITY, |m, (a, b)| m.min(b - a));
            self.note_kink(gap);
        }
        Ok(self.push(Shape::Vector(n), out, Op::MinSet(xs.to_vec(), arg)))
    }

    /// Elementwise mean over a set of equal-length vectors, summed in input order.
    pub fn mean_set(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        let n = self.set_operands("mean_set", xs)?;
        let mut out = vec![0.0; n];
        for &x in xs {
            for (o, v) in out.iter_mut().zip(&self.nodes[x.0].value) {
                *o += v;
            }
        }
        let inv = 1.0 / xs.len() as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(self.push(Shape::Vector(n), out, Op::MeanSet(xs.to_vec())))
    }

    /// Softmax across the entries of one vector.
    pub fn softmax(&mut self, logits: Var) -> Result<Var, NumericError> {
        let n = self.vector_len("softmax", logits)?;
        if n == 0 {
            return Err(NumericError::EmptyInput { op: "softmax" });
        }
        let out = softmax_values(self.value(logits));
        Ok(self.push(Shape::Vector(n), out, Op::Softmax(logits)))
    }

    /// `Σ_i weights[i] · xs[i]`, accumulated in input order.
    pub fn weighted_sum(&mut self, weights: Var, xs: &[Var]) -> Result<Var, NumericError> {
        let n = self.set_operands("weighted_sum", xs)?;
        let w = self.vector_len("weighted_sum", weights)?;
        if w != xs.len() {
            return Err(NumericError::ShapeMismatch {
                op: "weighted_sum",
                detail: format!("{w} weights for {} inputs", xs.len()),
            });
        }
        let mut out = vec![0.0; n];
        for (i, &x) in xs.iter().enumerate() {
            let wi = self.nodes[weights.0].value[i];
            for (o, v) in out.iter_mut().zip(&self.nodes[x.0].value) {
                *o += wi * v;
            }
        }
        Ok(self.push(Shape::Vector(n), out, Op::WeightedSum(weights, xs.to_vec())))
    }

    /// `gain ⊙ (x − mean) / sqrt(var + eps) + bias` with population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumericError> {
        let n = self.vector_len("layer_norm", x)?;
        self.same_vectors("layer_norm", x, gain)?;
        self.same_vectors("layer_norm", x, bias)?;
        if n < 2 {
            return Err(NumericError::ShapeMismatch { op: "layer_norm", detail: format!("dimension {n} < 2") });
        }
        let xv = self.value(x);
        let mean = xv.iter().sum::<f64>() / n as f64;
        let var = xv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var < DEGENERATE_VARIANCE {
            return Err(NumericError::DegenerateNorm { variance: var });
        }
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let xhat: Vec<f64> = xv.iter().map(|v| (v - mean) * inv_std).collect();
        let out = xhat
            .iter()
            .zip(self.value(gain))
            .zip(self.value(bias))
            .map(|((h, g), b)| g * h + b)
            .collect();
        Ok(self.push(Shape::Vector(n), out, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    pub fn l2_normalize(&mut self, x: Var) -> Result<Var, NumericError> {
        let n = self.vector_len("l2_normalize", x)?;
        let norm = norm_values(self.value(x));
        if norm < MIN_NORM {
            return Err(NumericError::ZeroNorm { op: "l2_normalize" });
        }
        let out = self.value(x).iter().map(|v| v / norm).collect();
        Ok(self.push(Shape::Vector(n), out, Op::L2Normalize(x, norm)))
    }

    /// Cosine of two vectors. A zero-norm operand scores 0 and passes no
    /// gradient back.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_vectors("cosine_similarity", a, b)?;
        if norm_values(self.value(a)) < MIN_NORM || norm_values(self.value(b)) < MIN_NORM {
            return Ok(self.constant_scalar(0.0));
        }
        let c = cosine_values(self.value(a), self.value(b));
        Ok(self.push(Shape::Vector(1), vec![c], Op::Cosine(a, b)))
    }

    /// `max(0, margin − pos + neg)` on two scalars.
    pub fn hinge(&mut self, margin: f64, pos: Var, neg: Var) -> Result<Var, NumericError> {
        let p = self.scalar_operand("hinge", pos)?;
        let q = self.scalar_operand("hinge", neg)?;
        let raw = margin - p + q;
        self.note_kink(raw.abs());
        let active = raw > 0.0;
        let out = if active { raw } else { 0.0 };
        Ok(self.push(Shape::Vector(1), vec![out], Op::Hinge { pos, neg, active }))
    }

    /// Sum of scalars, accumulated in input order. An empty sum is zero.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        let mut total = 0.0;
        for &x in xs {
            total += self.scalar_operand("sum", x)?;
        }
        Ok(self.push(Shape::Vector(1), vec![total], Op::Sum(xs.to_vec())))
    }

    /// Runs the backward sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, NumericError> {
        if self.shape(output) != Shape::Vector(1) {
            return Err(NumericError::ShapeMismatch {
                op: "backward",
                detail: format!("output must be a scalar, got {}", self.shape(output)),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        let mut result = Gradients::default();

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(slice) => {
                    result.slices.insert(*slice, g);
                }
                Op::MatVec(m, v) => {
                    let (rows, cols) = match self.shape(*m) {
                        Shape::Matrix(r, c) => (r, c),
                        Shape::Vector(_) => unreachable!(),
                    };
                    let mv = self.value(*m);
                    let vv = self.value(*v);
                    let mut gm = vec![0.0; rows * cols];
                    let mut gv = vec![0.0; cols];
                    for i in 0..rows {
                        let row = &mv[i * cols..(i + 1) * cols];
                        for j in 0..cols {
                            gm[i * cols + j] = g[i] * vv[j];
                            gv[j] += row[j] * g[i];
                        }
                    }
                    accumulate(&mut grads, *m, &gm);
                    accumulate(&mut grads, *v, &gv);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut grads, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = g.iter().zip(self.value(*b)).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(self.value(*a)).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.shape(p).len();
                        accumulate(&mut grads, p, &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Dot(a, b) => {
                    let ga: Vec<f64> = self.value(*b).iter().map(|y| g[0] * y).collect();
                    let gb: Vec<f64> = self.value(*a).iter().map(|x| g[0] * x).collect();
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Relu(a) => {
                    let ga: Vec<f64> =
                        g.iter().zip(self.value(*a)).map(|(gi, &x)| if x > 0.0 { *gi } else { 0.0 }).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let ga: Vec<f64> =
                        g.iter().zip(self.value(*a)).map(|(gi, &x)| if x > 0.0 { *gi } else { slope * gi }).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let ga: Vec<f64> = g.iter().zip(&node.value).map(|(gi, s)| gi * s * (1.0 - s)).collect();
                    accumulate(&mut grads, *a, &ga);
                }
                Op::MinSet(xs, arg) => {
                    let n = g.len();
                    for (i, &x) in xs.iter().enumerate() {
                        if arg.contains(&i) {
                            let gx: Vec<f64> = (0..n).map(|j| if arg[j] == i { g[j] } else { 0.0 }).collect();
                            accumulate(&mut grads, x, &gx);
                        }
                    }
                }
                Op::MeanSet(xs) => {
                    let inv = 1.0 / xs.len() as f64;
                    let gx: Vec<f64> = g.iter().map(|v| v * inv).collect();
                    for &x in xs {
                        accumulate(&mut grads, x, &gx);
                    }
                }
                Op::Softmax(logits) => {
                    let s = &node.value;
                    let inner: f64 = g.iter().zip(s).map(|(a, b)| a * b).sum();
                    let gl: Vec<f64> = s.iter().zip(&g).map(|(si, gi)| si * (gi - inner)).collect();
                    accumulate(&mut grads, *logits, &gl);
                }
                Op::WeightedSum(w, xs) => {
                    let wv = self.value(*w);
                    let mut gw = vec![0.0; xs.len()];
                    for (i, &x) in xs.iter().enumerate() {
                        gw[i] = dot_values(&g, self.value(x));
                        let gx: Vec<f64> = g.iter().map(|v| v * wv[i]).collect();
                        accumulate(&mut grads, x, &gx);
                    }
                    accumulate(&mut grads, *w, &gw);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let n = xhat.len() as f64;
                    let gv = self.value(*gain);
                    let dxhat: Vec<f64> = g.iter().zip(gv).map(|(a, b)| a * b).collect();
                    let mean_d = dxhat.iter().sum::<f64>() / n;
                    let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                    let gx: Vec<f64> =
                        dxhat.iter().zip(xhat).map(|(d, h)| inv_std * (d - mean_d - h * mean_dx)).collect();
                    let gg: Vec<f64> = g.iter().zip(xhat).map(|(a, b)| a * b).collect();
                    accumulate(&mut grads, *x, &gx);
                    accumulate(&mut grads, *gain, &gg);
                    accumulate(&mut grads, *bias, &g);
                }
                Op::L2Normalize(x, norm) => {
                    let y = &node.value;
                    let proj = dot_values(y, &g);
                    let gx: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| (gi - yi * proj) / norm).collect();
                    accumulate(&mut grads, *x, &gx);
                }
                Op::Cosine(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let na = norm_values(av);
                    let nb = norm_values(bv);
                    let c = node.value[0];
                    let ga: Vec<f64> =
                        av.iter().zip(bv).map(|(x, y)| g[0] * (y / (na * nb) - c * x / (na * na))).collect();
                    let gb: Vec<f64> =
                        av.iter().zip(bv).map(|(x, y)| g[0] * (x / (na * nb) - c * y / (nb * nb))).collect();
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Hinge { pos, neg, active } => {
                    if *active {
                        accumulate(&mut grads, *pos, &[-g[0]]);
                        accumulate(&mut grads, *neg, &[g[0]]);
                    }
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        accumulate(&mut grads, x, &g);
                    }
                }
            }
        }
        Ok(result)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, x)| *e += x),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot_values(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_values(a: &[f64]) -> f64 {
    dot_values(a, a).sqrt()
}

/// Max-shifted softmax.
pub fn softmax_values(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

pub fn l2_normalize_values(a: &[f64]) -> Result<Vec<f64>, NumericError> {
    let norm = norm_values(a);
    if norm < MIN_NORM {
        return Err(NumericError::ZeroNorm { op: "l2_normalize" });
    }
    Ok(a.iter().map(|v| v / norm).collect())
}

/// Cosine similarity; 0 when either vector has (near) zero norm.
pub fn cosine_values(a: &[f64], b: &[f64]) -> f64 {
    let na = norm_values(a);
    let nb = norm_values(b);
    if na < MIN_NORM || nb < MIN_NORM {
        return 0.0;
    }
    dot_values(a, b) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> (ParamStore, ParamSlice) {
        let mut store = ParamStore::new();
        let id = store.push("x", 1, values.len(), values.to_vec());
        let slice = store.whole(id);
        (store, slice)
    }

    #[test]
    fn dot_self_gradient_is_twice_input() {
        let (store, slice) = store_with(&[1.0, 2.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, slice);
        let y = tape.dot(x, x).unwrap();
        assert_eq!(tape.scalar(y), 5.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(slice).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn cosine_of_vector_with_itself_is_one() {
        let mut tape = Tape::new();
        let v = tape.constant(vec![0.3, -1.2, 4.0]);
        let c = tape.cosine_similarity(v, v).unwrap();
        assert!((tape.scalar(c) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_with_zero_vector_is_zero_without_gradient() {
        let (store, slice) = store_with(&[1.0, 2.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, slice);
        let z = tape.constant(vec![0.0, 0.0]);
        let c = tape.cosine_similarity(x, z).unwrap();
        assert_eq!(tape.scalar(c), 0.0);
        let g = tape.backward(c).unwrap();
        assert!(g.get(slice).map_or(true, |v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let l = tape.constant(vec![0.7; 5]);
        let s = tape.softmax(l).unwrap();
        for v in tape.value(s) {
            assert_eq!(*v, 0.2);
        }
    }

    #[test]
    fn hinge_arithmetic() {
        let mut tape = Tape::new();
        let one = tape.constant_scalar(1.0);
        let zero = tape.constant_scalar(0.0);
        let a = tape.hinge(1.0, one, zero).unwrap();
        let b = tape.hinge(1.0, zero, one).unwrap();
        assert_eq!(tape.scalar(a), 0.0);
        assert_eq!(tape.scalar(b), 2.0);
    }

    #[test]
    fn min_set_routes_gradient_to_first_argmin() {
        let (store, slice) = store_with(&[1.0, 5.0, 1.0, 2.0]);
        let mut tape = Tape::new();
        let x = tape.param(&store, slice);
        let a = tape.mul(x, x).unwrap();
        let b = tape.constant(vec![1.0, 1.0, 9.0, 9.0]);
        let m = tape.min_set(&[a, b]).unwrap();
        assert_eq!(tape.value(m), &[1.0, 1.0, 1.0, 4.0]);
        let ones = tape.constant(vec![1.0; 4]);
        let s = tape.dot(m, ones).unwrap();
        let g = tape.backward(s).unwrap();
        // coordinate 0 ties: routed to the first input (a), d(x²)/dx = 2
        assert_eq!(g.get(slice).unwrap(), &[2.0, 0.0, 2.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1.0, 2.0]);
        let b = tape.constant(vec![1.0, 2.0, 3.0]);
        assert!(matches!(tape.add(a, b), Err(NumericError::ShapeMismatch { .. })));
        assert!(matches!(tape.min_set(&[]), Err(NumericError::EmptyInput { .. })));
    }

    #[test]
    fn layer_norm_rejects_constant_input() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![3.0; 4]);
        let g = tape.constant(vec![1.0; 4]);
        let b = tape.constant(vec![0.0; 4]);
        assert!(matches!(tape.layer_norm(x, g, b), Err(NumericError::DegenerateNorm { .. })));
        let one = tape.constant(vec![1.0]);
        assert!(tape.layer_norm(one, one, one).is_err());
    }

    #[test]
    fn l2_normalize_zero_vector_fails() {
        let mut tape = Tape::new();
        let z = tape.constant(vec![0.0, 0.0]);
        assert!(matches!(tape.l2_normalize(z), Err(NumericError::ZeroNorm { .. })));
    }

    #[test]
    fn param_slice_loaded_once() {
        let (store, slice) = store_with(&[1.0, 2.0]);
        let mut tape = Tape::new();
        let a = tape.param(&store, slice);
        let b = tape.param(&store, slice);
        assert_eq!(a, b);
        let s = tape.dot(a, b).unwrap();
        let t = tape.sum(&[s, s]).unwrap();
        let g = tape.backward(t).unwrap();
        assert_eq!(g.get(slice).unwrap(), &[4.0, 8.0]);
    }

    #[test]
    fn unused_parameters_get_no_gradient() {
        let mut store = ParamStore::new();
        let a = store.push("a", 1, 2, vec![1.0, 1.0]);
        let b = store.push("b", 1, 2, vec![2.0, 2.0]);
        let mut tape = Tape::new();
        let va = tape.param(&store, store.whole(a));
        let _vb = tape.param(&store, store.whole(b));
        let s = tape.dot(va, va).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(store.whole(b)).is_none());
        assert_eq!(g.dense(store.whole(b)), vec![0.0, 0.0]);
    }
}
