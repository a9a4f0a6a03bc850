use super::params::{ParamId, ParamSet};
use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, rows: usize, k: usize, n: usize },
    Bmm { a: Var, b: Var, g: usize, m: usize, k: usize, n: usize, trans_b: bool },
    MixRows { p: Var, x: Var, g: usize, n: usize, k: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias { x: Var, b: Var },
    Scale(Var, f64),
    ScaleBy { x: Var, s: Var },
    MulConst { x: Var, c: Vec<f64> },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat { parts: Vec<(Var, usize)> },
    Sum(Var),
    Mean(Var),
    Mae { pred: Var, target: Vec<f64> },
    Bce { p: Var, y: Vec<f64> },
    Reshape(Var),
    Transpose { x: Var, r: usize, c: usize },
    SwapAxes12 { x: Var, dims: [usize; 4] },
    Shift { x: Var, outer: usize, len: usize, inner: usize, k: usize },
    Narrow { x: Var, outer: usize, len: usize, inner: usize, start: usize, take: usize },
    SelectRows { x: Var, rows: Vec<usize>, width: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Probability clamp applied by [`Tape::bce_loss`].
pub const BCE_CLAMP: f64 = 1e-7;

/// Records a forward computation so it can be differentiated in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(Var, ParamId)>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    params: Vec<(Var, ParamId)>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradients aligned with `params`; unused parameters get zeros.
    pub fn for_params(&self, params: &ParamSet) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        for &(var, id) in &self.params {
            if let Some(g) = &self.grads[var.0] {
                for (o, v) in out[id.index()].data_mut().iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices that cover the strided extents given.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutodiffError {
    AutodiffError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Records a constant or input leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Records a leaf bound to a parameter so its gradient can be collected.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let v = self.leaf(params.get(id).clone());
        self.params.push((v, id));
        v
    }

    /// `a[..., k] · b[k, n]`, with leading axes of `a` flattened into rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() != 2 || sa.is_empty() || *sa.last().unwrap() != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (k, n) = (sb[0], sb[1]);
        let rows = self.value(a).len() / k.max(1);
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = n;
        let mut out = vec![0.0; rows * n];
        gemm(rows, k, n, self.data(a), (k, 1), self.data(b), (n, 1), &mut out, 0.0);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MatMul { a, b, rows, k, n }))
    }

    /// Batched product over the leading axis: `[g,m,k]·[g,k,n]`, or `[g,m,k]·[g,n,k]ᵀ`.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(shape_err("bmm", sa, sb));
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(shape_err("bmm", sa, sb));
        }
        let mut out = vec![0.0; g * m * n];
        let (da, db) = (self.data(a), self.data(b));
        for gi in 0..g {
            let a_s = &da[gi * m * k..(gi + 1) * m * k];
            let b_s = &db[gi * k * n..(gi + 1) * k * n];
            let bs = if trans_b { (1, k) } else { (n, 1) };
            gemm(m, k, n, a_s, (k, 1), b_s, bs, &mut out[gi * m * n..(gi + 1) * m * n], 0.0);
        }
        let t = Tensor::new(vec![g, m, n], out)?;
        Ok(self.push(t, Op::Bmm { a, b, g, m, k, n, trans_b }))
    }

    /// Mixes along axis 1 with a shared matrix: `out[g] = p · x[g]` for `x: [g, n, ...]`.
    pub fn mix_rows(&mut self, p: Var, x: Var) -> Result<Var, AutodiffError> {
        let (sp, sx) = (self.shape(p), self.shape(x));
        if sp.len() != 2 || sp[0] != sp[1] || sx.len() < 2 || sx[1] != sp[0] {
            return Err(shape_err("mix_rows", sp, sx));
        }
        let (g, n) = (sx[0], sx[1]);
        let k: usize = sx[2..].iter().product();
        let shape = sx.to_vec();
        let mut out = vec![0.0; g * n * k];
        let (dp, dx) = (self.data(p), self.data(x));
        for gi in 0..g {
            let xs = &dx[gi * n * k..(gi + 1) * n * k];
            gemm(n, n, k, dp, (n, 1), xs, (k, 1), &mut out[gi * n * k..(gi + 1) * n * k], 0.0);
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MixRows { p, x, g, n, k }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let shape = self.shape(a).to_vec();
        let out = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        self.push(Tensor::new(shape, out).expect("same shape"), op)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let shape = self.shape(x).to_vec();
        let out = self.data(x).iter().map(|&v| f(v)).collect();
        self.push(Tensor::new(shape, out).expect("same shape"), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_map(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    /// Adds a `[n]` bias to every row of `x: [..., n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(shape_err("add_bias", sx, sb));
        }
        let n = sb[0];
        let shape = sx.to_vec();
        let bias = self.data(b);
        let out = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias[i % n])
            .collect();
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::AddBias { x, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    /// Multiplies `x` by the single value held in `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        if self.value(s).len() != 1 {
            return Err(shape_err("scale_by", self.shape(x), self.shape(s)));
        }
        let c = self.data(s)[0];
        Ok(self.map(x, |v| v * c, Op::ScaleBy { x, s }))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, x: Var, c: &Tensor) -> Result<Var, AutodiffError> {
        if self.shape(x) != c.shape() {
            return Err(shape_err("mul_const", self.shape(x), c.shape()));
        }
        let shape = self.shape(x).to_vec();
        let out = self.data(x).iter().zip(c.data()).map(|(a, b)| a * b).collect();
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::MulConst { x, c: c.data().to_vec() }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    /// Softmax over the last axis. With `causal`, the last two axes must be
    /// square and entry `(i, j)` with `j > i` is excluded.
    pub fn softmax_last(&mut self, x: Var, causal: bool) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| shape_err("softmax", &shape, &[]))?;
        if causal && (shape.len() < 2 || shape[shape.len() - 2] != n) {
            return Err(shape_err("softmax(causal)", &shape, &[n, n]));
        }
        let src = self.data(x);
        let mut out = vec![0.0; src.len()];
        for (r, (row, orow)) in src.chunks(n).zip(out.chunks_mut(n)).enumerate() {
            let valid = if causal { r % n + 1 } else { n };
            let max = row[..valid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..valid {
                orow[j] = (row[j] - max).exp();
                total += orow[j];
            }
            for v in &mut orow[..valid] {
                *v /= total;
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Softmax(x)))
    }

    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = self.shape(parts[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if &s[..s.len() - 1] != lead {
                return Err(shape_err("concat_last", &first, s));
            }
            widths.push((p, *s.last().unwrap()));
        }
        let total: usize = widths.iter().map(|w| w.1).sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, w) in &widths {
                out.extend_from_slice(&self.data(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Concat { parts: widths }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Mean absolute error against a constant target.
    pub fn mae_loss(&mut self, pred: Var, target: &Tensor) -> Result<Var, AutodiffError> {
        if self.shape(pred) != target.shape() {
            return Err(shape_err("mae_loss", self.shape(pred), target.shape()));
        }
        let d = self.data(pred);
        let s = d.iter().zip(target.data()).map(|(p, t)| (p - t).abs()).sum::<f64>()
            / d.len().max(1) as f64;
        Ok(self.push(
            Tensor::scalar(s),
            Op::Mae {
                pred,
                target: target.data().to_vec(),
            },
        ))
    }

    /// Mean binary cross-entropy of probabilities `p` against labels `y`,
    /// with `p` clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]`.
    pub fn bce_loss(&mut self, p: Var, y: &Tensor) -> Result<Var, AutodiffError> {
        if self.value(p).len() != y.len() {
            return Err(shape_err("bce_loss", self.shape(p), y.shape()));
        }
        let d = self.data(p);
        let s = d
            .iter()
            .zip(y.data())
            .map(|(&p, &y)| bce(p, y))
            .sum::<f64>()
            / d.len().max(1) as f64;
        Ok(self.push(
            Tensor::scalar(s),
            Op::Bce {
                p,
                y: y.data().to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(shape_err("transpose", s, &[]));
        }
        let (r, c) = (s[0], s[1]);
        let d = self.data(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out)?;
        Ok(self.push(t, Op::Transpose { x, r, c }))
    }

    /// `[a, b, c, d] -> [a, c, b, d]`.
    pub fn swap_axes12(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(shape_err("swap_axes12", s, &[]));
        }
        let dims = [s[0], s[1], s[2], s[3]];
        let out = swap12(self.data(x), dims);
        let t = Tensor::new(vec![dims[0], dims[2], dims[1], dims[3]], out)?;
        Ok(self.push(t, Op::SwapAxes12 { x, dims }))
    }

    /// Delays values along `axis` by `k` positions, filling the front with zeros.
    pub fn shift(&mut self, x: Var, axis: usize, k: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(shape_err("shift", &shape, &[axis]));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let d = self.data(x);
        let mut out = vec![0.0; d.len()];
        for o in 0..outer {
            for t in k..len {
                let dst = (o * len + t) * inner;
                let src = (o * len + t - k) * inner;
                out[dst..dst + inner].copy_from_slice(&d[src..src + inner]);
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::Shift { x, outer, len, inner, k }))
    }

    /// Slice `[start, start + take)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, take: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + take > shape[axis] {
            return Err(shape_err("narrow", &shape, &[axis, start, take]));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let d = self.data(x);
        let mut out = Vec::with_capacity(outer * take * inner);
        for o in 0..outer {
            let s = (o * len + start) * inner;
            out.extend_from_slice(&d[s..s + take * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = take;
        let t = Tensor::new(new_shape, out)?;
        Ok(self.push(t, Op::Narrow { x, outer, len, inner, start, take }))
    }

    /// Gathers rows of `x` viewed as `[rows, last_dim]`.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, AutodiffError> {
        let width = self.value(x).last_dim();
        let total = self.value(x).len() / width.max(1);
        if rows.iter().any(|&r| r >= total) {
            return Err(shape_err("select_rows", self.shape(x), &[rows.len()]));
        }
        let d = self.data(x);
        let mut out = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            out.extend_from_slice(&d[r * width..(r + 1) * width]);
        }
        let t = Tensor::new(vec![rows.len(), width], out)?;
        Ok(self.push(
            t,
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
                width,
            },
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self.params.clone(),
        })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let len = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, rows, k, n } => {
                let (av, bv) = (self.data(a), self.data(b));
                // dA = dC·Bᵀ, dB = Aᵀ·dC
                acc(a, &mut |da| gemm(rows, n, k, g, (n, 1), bv, (1, n), da, 1.0));
                acc(b, &mut |db| gemm(k, rows, n, av, (1, k), g, (n, 1), db, 1.0));
            }
            &Op::Bmm { a, b, g: gs, m, k, n, trans_b } => {
                let (av, bv) = (self.data(a), self.data(b));
                acc(a, &mut |da| {
                    for gi in 0..gs {
                        let gc = &g[gi * m * n..(gi + 1) * m * n];
                        let bsl = &bv[gi * k * n..(gi + 1) * k * n];
                        let dst = &mut da[gi * m * k..(gi + 1) * m * k];
                        if trans_b {
                            gemm(m, n, k, gc, (n, 1), bsl, (k, 1), dst, 1.0);
                        } else {
                            gemm(m, n, k, gc, (n, 1), bsl, (1, n), dst, 1.0);
                        }
                    }
                });
                acc(b, &mut |db| {
                    for gi in 0..gs {
                        let gc = &g[gi * m * n..(gi + 1) * m * n];
                        let asl = &av[gi * m * k..(gi + 1) * m * k];
                        let dst = &mut db[gi * k * n..(gi + 1) * k * n];
                        if trans_b {
                            // dB[n,k] = dCᵀ·A
                            gemm(n, m, k, gc, (1, n), asl, (k, 1), dst, 1.0);
                        } else {
                            gemm(k, m, n, asl, (1, k), gc, (n, 1), dst, 1.0);
                        }
                    }
                });
            }
            &Op::MixRows { p, x, g: gs, n, k } => {
                let (pv, xv) = (self.data(p), self.data(x));
                acc(x, &mut |dx| {
                    for gi in 0..gs {
                        let gc = &g[gi * n * k..(gi + 1) * n * k];
                        gemm(n, n, k, pv, (1, n), gc, (k, 1), &mut dx[gi * n * k..(gi + 1) * n * k], 1.0);
                    }
                });
                acc(p, &mut |dp| {
                    for gi in 0..gs {
                        let gc = &g[gi * n * k..(gi + 1) * n * k];
                        let xs = &xv[gi * n * k..(gi + 1) * n * k];
                        gemm(n, k, n, gc, (k, 1), xs, (1, k), dp, 1.0);
                    }
                });
            }
            &Op::Add(a, b) => {
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| add_into(d, g));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |d| add_into(d, g));
                acc(b, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.data(a), self.data(b));
                acc(a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * bv[j];
                    }
                });
                acc(b, &mut |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * av[j];
                    }
                });
            }
            &Op::AddBias { x, b } => {
                acc(x, &mut |d| add_into(d, g));
                acc(b, &mut |d| {
                    let n = d.len();
                    for (j, v) in g.iter().enumerate() {
                        d[j % n] += v;
                    }
                });
            }
            &Op::Scale(x, c) => acc(x, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += c * g)),
            &Op::ScaleBy { x, s } => {
                let c = self.data(s)[0];
                let xv = self.data(x);
                acc(x, &mut |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += c * g));
                acc(s, &mut |d| d[0] += g.iter().zip(xv).map(|(g, x)| g * x).sum::<f64>());
            }
            Op::MulConst { x, c } => acc(*x, &mut |d| {
                for j in 0..d.len() {
                    d[j] += g[j] * c[j];
                }
            }),
            &Op::Relu(x) => {
                let xv = self.data(x);
                acc(x, &mut |d| {
                    for j in 0..d.len() {
                        if xv[j] > 0.0 {
                            d[j] += g[j];
                        }
                    }
                });
            }
            &Op::Tanh(x) => acc(x, &mut |d| {
                for j in 0..d.len() {
                    d[j] += g[j] * (1.0 - out[j] * out[j]);
                }
            }),
            &Op::Sigmoid(x) => acc(x, &mut |d| {
                for j in 0..d.len() {
                    d[j] += g[j] * out[j] * (1.0 - out[j]);
                }
            }),
            &Op::Softmax(x) => {
                let n = node.value.last_dim();
                acc(x, &mut |d| {
                    for ((dr, yr), gr) in d.chunks_mut(n).zip(out.chunks(n)).zip(g.chunks(n)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for j in 0..n {
                            dr[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::Concat { parts } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let rows = g.len() / total.max(1);
                let mut offset = 0;
                for &(p, w) in parts {
                    acc(p, &mut |d| {
                        for r in 0..rows {
                            add_into(&mut d[r * w..(r + 1) * w], &g[r * total + offset..r * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            &Op::Sum(x) => acc(x, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
            &Op::Mean(x) => acc(x, &mut |d| {
                let s = g[0] / d.len() as f64;
                d.iter_mut().for_each(|d| *d += s);
            }),
            Op::Mae { pred, target } => {
                let pv = self.data(*pred);
                acc(*pred, &mut |d| {
                    let s = g[0] / d.len() as f64;
                    for j in 0..d.len() {
                        let diff = pv[j] - target[j];
                        if diff > 0.0 {
                            d[j] += s;
                        } else if diff < 0.0 {
                            d[j] -= s;
                        }
                    }
                });
            }
            Op::Bce { p, y } => {
                let pv = self.data(*p);
                acc(*p, &mut |d| {
                    let s = g[0] / d.len() as f64;
                    for j in 0..d.len() {
                        let q = pv[j];
                        if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&q) {
                            d[j] += s * (-y[j] / q + (1.0 - y[j]) / (1.0 - q));
                        }
                    }
                });
            }
            &Op::Reshape(x) => acc(x, &mut |d| add_into(d, g)),
            &Op::Transpose { x, r, c } => acc(x, &mut |d| {
                for i in 0..r {
                    for j in 0..c {
                        d[i * c + j] += g[j * r + i];
                    }
                }
            }),
            &Op::SwapAxes12 { x, dims } => {
                let back = swap12(g, [dims[0], dims[2], dims[1], dims[3]]);
                acc(x, &mut |d| add_into(d, &back));
            }
            &Op::Shift { x, outer, len, inner, k } => acc(x, &mut |d| {
                for o in 0..outer {
                    for t in k..len {
                        let dst = (o * len + t - k) * inner;
                        let src = (o * len + t) * inner;
                        add_into(&mut d[dst..dst + inner], &g[src..src + inner]);
                    }
                }
            }),
            &Op::Narrow { x, outer, len, inner, start, take } => acc(x, &mut |d| {
                for o in 0..outer {
                    let dst = (o * len + start) * inner;
                    let src = o * take * inner;
                    add_into(&mut d[dst..dst + take * inner], &g[src..src + take * inner]);
                }
            }),
            Op::SelectRows { x, rows, width } => {
                let w = *width;
                acc(*x, &mut |d| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut d[r * w..(r + 1) * w], &g[i * w..(i + 1) * w]);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn swap12(src: &[f64], [a, b, c, d]: [usize; 4]) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                let s = ((i * b + j) * c + k) * d;
                let t = ((i * c + k) * b + j) * d;
                out[t..t + d].copy_from_slice(&src[s..s + d]);
            }
        }
    }
    out
}

/// Binary cross-entropy for one probability, clamped.
pub fn bce(p: f64, y: f64) -> f64 {
    let q = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
}
