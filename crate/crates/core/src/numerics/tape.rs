//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Tape`] records every forward operation in execution order. `backward`
//! replays the record in exact reverse order, accumulating adjoints, and adds
//! the result into the gradients of the participating [`ParamStore`]
//! parameters. One tape serves one forward pass; calling `backward` twice on
//! the same tape is a contract violation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tensor::{mat_mul, Tensor};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf {
        param: Option<ParamId>,
    },
    Matmul {
        a: usize,
        b: usize,
    },
    /// `[m,k] x [k] -> [m]`
    MatVec {
        a: usize,
        x: usize,
    },
    /// `[k] x [k,n] -> [n]` (row vector times matrix)
    VecMat {
        x: usize,
        a: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Tanh {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Neg {
        x: usize,
    },
    Scale {
        x: usize,
        c: f64,
    },
    /// Adds an untaped constant; the constant gets no gradient.
    AddScalar {
        x: usize,
    },
    Softmax {
        x: usize,
    },
    LogSoftmax {
        x: usize,
    },
    MeanPool {
        x: usize,
    },
    HStack {
        cols: Vec<usize>,
    },
    /// Repeat a `[d]` vector as the `n` columns of a `[d,n]` matrix.
    BroadcastCol {
        x: usize,
    },
    Concat {
        a: usize,
        b: usize,
    },
    /// Column `j` of a matrix as a vector.
    Col {
        m: usize,
        j: usize,
    },
    /// Row `i` of a matrix as a vector.
    Row {
        m: usize,
        i: usize,
    },
    /// Element `i` of a vector as a scalar.
    Pick {
        x: usize,
        i: usize,
    },
    Sum {
        x: usize,
    },
    Cosine {
        a: usize,
        b: usize,
    },
    Dropout {
        x: usize,
        mask: Tensor,
    },
    /// Per-filter max over a sliding window of columns; `argmax` stores the
    /// chosen source column for every output element.
    WindowMax {
        x: usize,
        argmax: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Linear record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant leaf; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { param: None }, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Leaf bound to a parameter; `backward` accumulates into its grad.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.get(id).value.clone();
        self.push(value, Op::Leaf { param: Some(id) }, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = mat_mul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Matmul { a: a.0, b: b.0 }, ng))
    }

    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (am, xm) = (self.value(a), self.value(x));
        if !am.is_matrix() || !xm.is_vector() || am.cols() != xm.numel() {
            return Err(Error::dimension(
                "matvec",
                "[m,k] x [k]",
                format!("{:?} x {:?}", am.shape(), xm.shape()),
            ));
        }
        let (m, k) = (am.rows(), am.cols());
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += am.at(i, l) * xm.data()[l];
            }
            out[i] = s;
        }
        let ng = self.needs(a) || self.needs(x);
        Ok(self.push(Tensor::vector(out), Op::MatVec { a: a.0, x: x.0 }, ng))
    }

    pub fn vecmat(&mut self, x: Var, a: Var) -> Result<Var> {
        let (xm, am) = (self.value(x), self.value(a));
        if !am.is_matrix() || !xm.is_vector() || am.rows() != xm.numel() {
            return Err(Error::dimension(
                "vecmat",
                "[k] x [k,n]",
                format!("{:?} x {:?}", xm.shape(), am.shape()),
            ));
        }
        let (k, n) = (am.rows(), am.cols());
        let mut out = vec![0.0; n];
        for l in 0..k {
            let xv = xm.data()[l];
            if xv == 0.0 {
                continue;
            }
            for j in 0..n {
                out[j] += xv * am.at(l, j);
            }
        }
        let ng = self.needs(a) || self.needs(x);
        Ok(self.push(Tensor::vector(out), Op::VecMat { x: x.0, a: a.0 }, ng))
    }

    fn binary_elementwise(
        &mut self,
        op_name: &str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if !am.same_shape(bm) {
            return Err(Error::dimension(
                op_name,
                format!("{:?}", am.shape()),
                format!("{:?}", bm.shape()),
            ));
        }
        let data = am
            .data()
            .iter()
            .zip(bm.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::from_vec(am.shape(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        let ng = self.needs(x);
        self.push(value, Op::Tanh { x: x.0 }, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        let ng = self.needs(x);
        self.push(value, Op::Sigmoid { x: x.0 }, ng)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| -v);
        let ng = self.needs(x);
        self.push(value, Op::Neg { x: x.0 }, ng)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| c * v);
        let ng = self.needs(x);
        self.push(value, Op::Scale { x: x.0, c }, ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        let ng = self.needs(x);
        self.push(value, Op::AddScalar { x: x.0 }, ng)
    }

    fn softmax_values(x: &[f64]) -> Vec<f64> {
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|&e| e / sum).collect()
    }

    /// Numerically stable softmax over a vector (max-subtraction).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xm = self.value(x);
        if xm.numel() == 0 {
            return Err(Error::Argument("softmax of an empty vector".into()));
        }
        if !xm.is_vector() {
            return Err(Error::dimension(
                "softmax",
                "[n]",
                format!("{:?}", xm.shape()),
            ));
        }
        let value = Tensor::vector(Self::softmax_values(xm.data()));
        let ng = self.needs(x);
        Ok(self.push(value, Op::Softmax { x: x.0 }, ng))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let xm = self.value(x);
        if xm.numel() == 0 || !xm.is_vector() {
            return Err(Error::Argument("log_softmax needs a non-empty vector".into()));
        }
        let data = xm.data();
        let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = data.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        let value = Tensor::vector(data.iter().map(|&v| v - log_sum).collect());
        let ng = self.needs(x);
        Ok(self.push(value, Op::LogSoftmax { x: x.0 }, ng))
    }

    /// Column-wise mean of a `[d,n]` matrix.
    pub fn mean_pool(&mut self, x: Var) -> Result<Var> {
        let xm = self.value(x);
        if !xm.is_matrix() {
            return Err(Error::dimension(
                "mean_pool",
                "[d,n]",
                format!("{:?}", xm.shape()),
            ));
        }
        let (d, n) = (xm.rows(), xm.cols());
        if n == 0 {
            return Err(Error::Argument("mean_pool of a zero-column matrix".into()));
        }
        let mut out = vec![0.0; d];
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..n {
                s += xm.at(i, j);
            }
            out[i] = s / n as f64;
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::vector(out), Op::MeanPool { x: x.0 }, ng))
    }

    /// Stack `[d]` vectors as the columns of a `[d,n]` matrix.
    pub fn hstack(&mut self, cols: &[Var]) -> Result<Var> {
        if cols.is_empty() {
            return Err(Error::Argument("hstack of zero columns".into()));
        }
        let d = self.value(cols[0]).numel();
        for c in cols {
            let v = self.value(*c);
            if !v.is_vector() || v.numel() != d {
                return Err(Error::dimension(
                    "hstack",
                    format!("[{d}]"),
                    format!("{:?}", v.shape()),
                ));
            }
        }
        let n = cols.len();
        let mut out = Tensor::zeros(&[d, n]);
        for (j, c) in cols.iter().enumerate() {
            let col: Vec<f64> = self.value(*c).data().to_vec();
            out.set_col(j, &col);
        }
        let ng = cols.iter().any(|&c| self.needs(c));
        Ok(self.push(
            out,
            Op::HStack {
                cols: cols.iter().map(|c| c.0).collect(),
            },
            ng,
        ))
    }

    pub fn broadcast_col(&mut self, x: Var, n: usize) -> Result<Var> {
        let xm = self.value(x);
        if !xm.is_vector() || n == 0 {
            return Err(Error::Argument(
                "broadcast_col needs a vector and n >= 1".into(),
            ));
        }
        let d = xm.numel();
        let col: Vec<f64> = xm.data().to_vec();
        let mut out = Tensor::zeros(&[d, n]);
        for j in 0..n {
            out.set_col(j, &col);
        }
        let ng = self.needs(x);
        Ok(self.push(out, Op::BroadcastCol { x: x.0 }, ng))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if !am.is_vector() || !bm.is_vector() {
            return Err(Error::Argument("concat needs two vectors".into()));
        }
        let mut data = am.data().to_vec();
        data.extend_from_slice(bm.data());
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::vector(data), Op::Concat { a: a.0, b: b.0 }, ng))
    }

    pub fn col(&mut self, m: Var, j: usize) -> Result<Var> {
        let mm = self.value(m);
        if !mm.is_matrix() || j >= mm.cols() {
            return Err(Error::Argument(format!(
                "col {} out of range for shape {:?}",
                j,
                mm.shape()
            )));
        }
        let value = Tensor::vector(mm.col(j));
        let ng = self.needs(m);
        Ok(self.push(value, Op::Col { m: m.0, j }, ng))
    }

    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let mm = self.value(m);
        if !mm.is_matrix() || i >= mm.rows() {
            return Err(Error::Argument(format!(
                "row {} out of range for shape {:?}",
                i,
                mm.shape()
            )));
        }
        let c = mm.cols();
        let value = Tensor::vector(mm.data()[i * c..(i + 1) * c].to_vec());
        let ng = self.needs(m);
        Ok(self.push(value, Op::Row { m: m.0, i }, ng))
    }

    pub fn pick(&mut self, x: Var, i: usize) -> Result<Var> {
        let xm = self.value(x);
        if !xm.is_vector() || i >= xm.numel() {
            return Err(Error::Argument(format!(
                "pick {} out of range for shape {:?}",
                i,
                xm.shape()
            )));
        }
        let value = Tensor::scalar(xm.data()[i]);
        let ng = self.needs(x);
        Ok(self.push(value, Op::Pick { x: x.0, i }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        let ng = self.needs(x);
        self.push(value, Op::Sum { x: x.0 }, ng)
    }

    /// Cosine similarity of two equal-length vectors. Defined as 0 when
    /// either vector has zero norm; that branch propagates no gradient.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if !am.is_vector() || !bm.is_vector() || am.numel() != bm.numel() {
            return Err(Error::dimension(
                "cosine",
                "two [n] vectors",
                format!("{:?}, {:?}", am.shape(), bm.shape()),
            ));
        }
        let value = crate::numerics::tensor::cosine_value(am.data(), bm.data());
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(value), Op::Cosine { a: a.0, b: b.0 }, ng))
    }

    /// Inverted dropout with keep probability `keep`: kept coordinates are
    /// scaled by `1/keep` so the expectation is unchanged. Callers apply this
    /// only in training mode.
    pub fn dropout(&mut self, x: Var, keep: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::Argument(format!("dropout keep {keep} not in (0,1]")));
        }
        let xm = self.value(x);
        let mask_data: Vec<f64> = (0..xm.numel())
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mask = Tensor::from_vec(xm.shape(), mask_data)?;
        let data = xm
            .data()
            .iter()
            .zip(mask.data())
            .map(|(&v, &m)| v * m)
            .collect();
        let value = Tensor::from_vec(xm.shape(), data)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::Dropout { x: x.0, mask }, ng))
    }

    /// Per-row max over a sliding column window of `width`, stride 1,
    /// preserving the column count. For odd widths the window is centered on
    /// the output column; for even widths it is left-aligned (covers columns
    /// `t-width+1 ..= t`). Out-of-range positions are skipped.
    pub fn window_max(&mut self, x: Var, width: usize) -> Result<Var> {
        let xm = self.value(x);
        if !xm.is_matrix() || width == 0 {
            return Err(Error::Argument(
                "window_max needs a matrix and width >= 1".into(),
            ));
        }
        let (k, n) = (xm.rows(), xm.cols());
        let mut out = Tensor::zeros(&[k, n]);
        let mut argmax = vec![0usize; k * n];
        for t in 0..n {
            let (lo, hi) = window_bounds(t, n, width);
            for f in 0..k {
                let mut best = f64::NEG_INFINITY;
                let mut best_j = lo;
                for j in lo..=hi {
                    let v = xm.at(f, j);
                    if v > best {
                        best = v;
                        best_j = j;
                    }
                }
                *out.at_mut(f, t) = best;
                argmax[f * n + t] = best_j;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(out, Op::WindowMax { x: x.0, argmax }, ng))
    }

    /// Accumulate d(loss)/d(param) into the store for every parameter that
    /// participated in this tape. `loss` must be a scalar.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already called on this tape; run a new forward pass".into(),
            ));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            // Split borrows: read node values immutably, write into `grads`.
            macro_rules! acc {
                ($target:expr, $delta:expr) => {{
                    let t = $target;
                    if self.nodes[t].needs_grad {
                        let slot = grads[t]
                            .get_or_insert_with(|| Tensor::zeros(self.nodes[t].value.shape()));
                        for (dst, src) in slot.data_mut().iter_mut().zip($delta) {
                            *dst += src;
                        }
                    }
                }};
            }

            match &self.nodes[idx].op {
                Op::Leaf { param } => {
                    if let Some(id) = param {
                        store.accumulate_grad(*id, &g);
                    }
                }
                Op::Matmul { a, b } => {
                    let (a, b) = (*a, *b);
                    let am = &self.nodes[a].value;
                    let bm = &self.nodes[b].value;
                    let (m, k, n) = (am.rows(), am.cols(), bm.cols());
                    // dA = G Bᵀ
                    if self.nodes[a].needs_grad {
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            for l in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g.data()[i * n + j] * bm.at(l, j);
                                }
                                da[i * k + l] = s;
                            }
                        }
                        acc!(a, da.iter().cloned());
                    }
                    // dB = Aᵀ G
                    if self.nodes[b].needs_grad {
                        let mut db = vec![0.0; k * n];
                        for l in 0..k {
                            for j in 0..n {
                                let mut s = 0.0;
                                for i in 0..m {
                                    s += am.at(i, l) * g.data()[i * n + j];
                                }
                                db[l * n + j] = s;
                            }
                        }
                        acc!(b, db.iter().cloned());
                    }
                }
                Op::MatVec { a, x } => {
                    let (a, x) = (*a, *x);
                    let am = &self.nodes[a].value;
                    let xm = &self.nodes[x].value;
                    let (m, k) = (am.rows(), am.cols());
                    if self.nodes[a].needs_grad {
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            for l in 0..k {
                                da[i * k + l] = g.data()[i] * xm.data()[l];
                            }
                        }
                        acc!(a, da.iter().cloned());
                    }
                    if self.nodes[x].needs_grad {
                        let mut dx = vec![0.0; k];
                        for l in 0..k {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += am.at(i, l) * g.data()[i];
                            }
                            dx[l] = s;
                        }
                        acc!(x, dx.iter().cloned());
                    }
                }
                Op::VecMat { x, a } => {
                    let (x, a) = (*x, *a);
                    let xm = &self.nodes[x].value;
                    let am = &self.nodes[a].value;
                    let (k, n) = (am.rows(), am.cols());
                    if self.nodes[x].needs_grad {
                        let mut dx = vec![0.0; k];
                        for l in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += am.at(l, j) * g.data()[j];
                            }
                            dx[l] = s;
                        }
                        acc!(x, dx.iter().cloned());
                    }
                    if self.nodes[a].needs_grad {
                        let mut da = vec![0.0; k * n];
                        for l in 0..k {
                            for j in 0..n {
                                da[l * n + j] = xm.data()[l] * g.data()[j];
                            }
                        }
                        acc!(a, da.iter().cloned());
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    acc!(a, g.data().iter().cloned());
                    acc!(b, g.data().iter().cloned());
                }
                Op::Sub { a, b } => {
                    let (a, b) = (*a, *b);
                    acc!(a, g.data().iter().cloned());
                    acc!(b, g.data().iter().map(|v| -v));
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.nodes[a].needs_grad {
                        let bd: Vec<f64> = self.nodes[b]
                            .value
                            .data()
                            .iter()
                            .zip(g.data())
                            .map(|(&bv, &gv)| bv * gv)
                            .collect();
                        acc!(a, bd.iter().cloned());
                    }
                    if self.nodes[b].needs_grad {
                        let ad: Vec<f64> = self.nodes[a]
                            .value
                            .data()
                            .iter()
                            .zip(g.data())
                            .map(|(&av, &gv)| av * gv)
                            .collect();
                        acc!(b, ad.iter().cloned());
                    }
                }
                Op::Tanh { x } => {
                    let x = *x;
                    let y = &self.nodes[idx].value;
                    let dx: Vec<f64> = y
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&yv, &gv)| (1.0 - yv * yv) * gv)
                        .collect();
                    acc!(x, dx.iter().cloned());
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let y = &self.nodes[idx].value;
                    let dx: Vec<f64> = y
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&yv, &gv)| yv * (1.0 - yv) * gv)
                        .collect();
                    acc!(x, dx.iter().cloned());
                }
                Op::Neg { x } => {
                    let x = *x;
                    acc!(x, g.data().iter().map(|v| -v));
                }
                Op::Scale { x, c } => {
                    let (x, c) = (*x, *c);
                    acc!(x, g.data().iter().map(|v| c * v));
                }
                Op::AddScalar { x } => {
                    let x = *x;
                    acc!(x, g.data().iter().cloned());
                }
                Op::Softmax { x } => {
                    let x = *x;
                    let y = &self.nodes[idx].value;
                    let dot: f64 = y.data().iter().zip(g.data()).map(|(&yv, &gv)| yv * gv).sum();
                    let dx: Vec<f64> = y
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&yv, &gv)| yv * (gv - dot))
                        .collect();
                    acc!(x, dx.iter().cloned());
                }
                Op::LogSoftmax { x } => {
                    let x = *x;
                    let y = &self.nodes[idx].value;
                    let gsum: f64 = g.data().iter().sum();
                    let dx: Vec<f64> = y
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&yv, &gv)| gv - yv.exp() * gsum)
                        .collect();
                    acc!(x, dx.iter().cloned());
                }
                Op::MeanPool { x } => {
                    let x = *x;
                    let xm = &self.nodes[x].value;
                    let (d, n) = (xm.rows(), xm.cols());
                    let mut dx = vec![0.0; d * n];
                    for i in 0..d {
                        let gi = g.data()[i] / n as f64;
                        for j in 0..n {
                            dx[i * n + j] = gi;
                        }
                    }
                    acc!(x, dx.iter().cloned());
                }
                Op::HStack { cols } => {
                    let cols = cols.clone();
                    let n = cols.len();
                    let d = g.data().len() / n;
                    for (j, c) in cols.iter().enumerate() {
                        let dj: Vec<f64> = (0..d).map(|i| g.data()[i * n + j]).collect();
                        acc!(*c, dj.iter().cloned());
                    }
                }
                Op::BroadcastCol { x } => {
                    let x = *x;
                    let d = self.nodes[x].value.numel();
                    let n = g.data().len() / d;
                    let dx: Vec<f64> = (0..d)
                        .map(|i| (0..n).map(|j| g.data()[i * n + j]).sum())
                        .collect();
                    acc!(x, dx.iter().cloned());
                }
                Op::Concat { a, b } => {
                    let (a, b) = (*a, *b);
                    let p = self.nodes[a].value.numel();
                    acc!(a, g.data()[..p].iter().cloned());
                    acc!(b, g.data()[p..].iter().cloned());
                }
                Op::Col { m, j } => {
                    let (m, j) = (*m, *j);
                    let (r, c) = (self.nodes[m].value.rows(), self.nodes[m].value.cols());
                    let mut dm = vec![0.0; r * c];
                    for i in 0..r {
                        dm[i * c + j] = g.data()[i];
                    }
                    acc!(m, dm.iter().cloned());
                }
                Op::Row { m, i } => {
                    let (m, i) = (*m, *i);
                    let (r, c) = (self.nodes[m].value.rows(), self.nodes[m].value.cols());
                    let mut dm = vec![0.0; r * c];
                    dm[i * c..(i + 1) * c].copy_from_slice(g.data());
                    acc!(m, dm.iter().cloned());
                }
                Op::Pick { x, i } => {
                    let (x, i) = (*x, *i);
                    let n = self.nodes[x].value.numel();
                    let mut dx = vec![0.0; n];
                    dx[i] = g.item();
                    acc!(x, dx.iter().cloned());
                }
                Op::Sum { x } => {
                    let x = *x;
                    let n = self.nodes[x].value.numel();
                    let gv = g.item();
                    acc!(x, std::iter::repeat(gv).take(n));
                }
                Op::Cosine { a, b } => {
                    let (a, b) = (*a, *b);
                    let av = self.nodes[a].value.data();
                    let bv = self.nodes[b].value.data();
                    let na = crate::numerics::tensor::dot(av, av).sqrt();
                    let nb = crate::numerics::tensor::dot(bv, bv).sqrt();
                    if na > 0.0 && nb > 0.0 {
                        let c = self.nodes[idx].value.item();
                        let gv = g.item();
                        if self.nodes[a].needs_grad {
                            let da: Vec<f64> = av
                                .iter()
                                .zip(bv)
                                .map(|(&x, &y)| gv * (y / (na * nb) - c * x / (na * na)))
                                .collect();
                            acc!(a, da.iter().cloned());
                        }
                        if self.nodes[b].needs_grad {
                            let db: Vec<f64> = av
                                .iter()
                                .zip(bv)
                                .map(|(&x, &y)| gv * (x / (na * nb) - c * y / (nb * nb)))
                                .collect();
                            acc!(b, db.iter().cloned());
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    let x = *x;
                    let dx: Vec<f64> = mask
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&m, &gv)| m * gv)
                        .collect();
                    acc!(x, dx.iter().cloned());
                }
                Op::WindowMax { x, argmax } => {
                    let x = *x;
                    let argmax = argmax.clone();
                    let (k, n) = (self.nodes[x].value.rows(), self.nodes[x].value.cols());
                    let mut dx = vec![0.0; k * n];
                    for f in 0..k {
                        for t in 0..n {
                            dx[f * n + argmax[f * n + t]] += g.data()[f * n + t];
                        }
                    }
                    acc!(x, dx.iter().cloned());
                }
            }
        }
        Ok(())
    }
}

/// Inclusive column window for `window_max` and the convolution layer.
pub fn window_bounds(t: usize, n: usize, width: usize) -> (usize, usize) {
    if width % 2 == 1 {
        let half = width / 2;
        (t.saturating_sub(half), (t + half).min(n - 1))
    } else {
        // Left-aligned: covers t-width+1 ..= t.
        (t.saturating_sub(width - 1), t)
    }
}
