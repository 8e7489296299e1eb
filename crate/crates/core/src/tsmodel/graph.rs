//! Minimal reverse-mode tape over dense 2-D matrices. Each op records its
//! parents; backward walks the tape in reverse and accumulates parameter
//! gradients into a caller-owned flat vector keyed by leaf offsets.

use super::TsModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044715;
const LN_EPS: f64 = 1e-5;

#[inline]
fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

#[inline]
fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

enum Op {
    /// Constant or parameter leaf; parameters carry their flat offset.
    Leaf { param_offset: Option<usize> },
    MatMul(usize, usize),
    Add(usize, usize),
    /// a [m,n] plus a row vector [1,n] broadcast over rows.
    AddRow(usize, usize),
    Scale(usize, f64),
    Gelu(usize),
    LayerNorm { x: usize, gamma: usize, beta: usize },
    SoftmaxRows(usize),
    MeanRows(usize),
    Transpose(usize),
    SliceCols { x: usize, start: usize },
    ConcatCols(Vec<usize>),
    /// Elementwise product; used with a constant dropout mask.
    Hadamard(usize, usize),
}

pub struct Tape {
    values: Vec<Mat>,
    ops: Vec<Op>,
}

pub type NodeId = usize;

impl Tape {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.values[id]
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        self.values.push(value);
        self.ops.push(op);
        self.values.len() - 1
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(Op::Leaf { param_offset: None }, value)
    }

    /// A parameter leaf copied out of the flat vector; backward accumulates
    /// its gradient at `offset`.
    pub fn param(&mut self, params: &[f64], offset: usize, rows: usize, cols: usize) -> NodeId {
        let data = params[offset..offset + rows * cols].to_vec();
        self.push(
            Op::Leaf { param_offset: Some(offset) },
            Mat::from_vec(rows, cols, data),
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ma, mb) = (&self.values[a], &self.values[b]);
        assert_eq!(ma.cols, mb.rows, "matmul inner dims");
        let (m, k, n) = (ma.rows, ma.cols, mb.cols);
        let mut out = Mat::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let aip = ma.at(i, p);
                if aip == 0.0 {
                    continue;
                }
                for j in 0..n {
                    *out.at_mut(i, j) += aip * mb.at(p, j);
                }
            }
        }
        self.push(Op::MatMul(a, b), out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ma, mb) = (&self.values[a], &self.values[b]);
        assert_eq!((ma.rows, ma.cols), (mb.rows, mb.cols), "add shapes");
        let mut out = ma.clone();
        for (o, v) in out.data.iter_mut().zip(&mb.data) {
            *o += v;
        }
        self.push(Op::Add(a, b), out)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (ma, mr) = (&self.values[a], &self.values[row]);
        assert_eq!(mr.rows, 1, "add_row needs a row vector");
        assert_eq!(ma.cols, mr.cols, "add_row widths");
        let mut out = ma.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                *out.at_mut(r, c) += mr.at(0, c);
            }
        }
        self.push(Op::AddRow(a, row), out)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut out = self.values[a].clone();
        for v in &mut out.data {
            *v *= factor;
        }
        self.push(Op::Scale(a, factor), out)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let mut out = self.values[a].clone();
        for v in &mut out.data {
            *v = gelu(*v);
        }
        self.push(Op::Gelu(a), out)
    }

    /// Per-row normalization with learned per-column scale and shift.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let (mx, mg, mb) = (&self.values[x], &self.values[gamma], &self.values[beta]);
        assert_eq!(mg.rows, 1);
        assert_eq!(mb.rows, 1);
        assert_eq!(mg.cols, mx.cols);
        assert_eq!(mb.cols, mx.cols);
        let n = mx.cols as f64;
        let mut out = Mat::zeros(mx.rows, mx.cols);
        for r in 0..mx.rows {
            let mean = (0..mx.cols).map(|c| mx.at(r, c)).sum::<f64>() / n;
            let var = (0..mx.cols)
                .map(|c| (mx.at(r, c) - mean).powi(2))
                .sum::<f64>()
                / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..mx.cols {
                let xhat = (mx.at(r, c) - mean) * inv;
                *out.at_mut(r, c) = mg.at(0, c) * xhat + mb.at(0, c);
            }
        }
        self.push(Op::LayerNorm { x, gamma, beta }, out)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let ma = &self.values[a];
        let mut out = Mat::zeros(ma.rows, ma.cols);
        for r in 0..ma.rows {
            let max = (0..ma.cols).map(|c| ma.at(r, c)).fold(f64::MIN, f64::max);
            let mut sum = 0.0;
            for c in 0..ma.cols {
                let e = (ma.at(r, c) - max).exp();
                *out.at_mut(r, c) = e;
                sum += e;
            }
            for c in 0..ma.cols {
                *out.at_mut(r, c) /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), out)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let ma = &self.values[a];
        let mut out = Mat::zeros(1, ma.cols);
        for r in 0..ma.rows {
            for c in 0..ma.cols {
                *out.at_mut(0, c) += ma.at(r, c);
            }
        }
        let m = ma.rows as f64;
        for v in &mut out.data {
            *v /= m;
        }
        self.push(Op::MeanRows(a), out)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let ma = &self.values[a];
        let mut out = Mat::zeros(ma.cols, ma.rows);
        for r in 0..ma.rows {
            for c in 0..ma.cols {
                *out.at_mut(c, r) = ma.at(r, c);
            }
        }
        self.push(Op::Transpose(a), out)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> NodeId {
        let ma = &self.values[a];
        assert!(start + width <= ma.cols, "slice_cols out of range");
        let mut out = Mat::zeros(ma.rows, width);
        for r in 0..ma.rows {
            for c in 0..width {
                *out.at_mut(r, c) = ma.at(r, start + c);
            }
        }
        self.push(Op::SliceCols { x: a, start }, out)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.values[parts[0]].rows;
        let total: usize = parts.iter().map(|&p| self.values[p].cols).sum();
        let mut out = Mat::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let mp = &self.values[p];
            assert_eq!(mp.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..mp.cols {
                    *out.at_mut(r, offset + c) = mp.at(r, c);
                }
            }
            offset += mp.cols;
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ma, mb) = (&self.values[a], &self.values[b]);
        assert_eq!((ma.rows, ma.cols), (mb.rows, mb.cols), "hadamard shapes");
        let mut out = ma.clone();
        for (o, v) in out.data.iter_mut().zip(&mb.data) {
            *o *= v;
        }
        self.push(Op::Hadamard(a, b), out)
    }

    /// Reverse pass from a 1x1 root seeded with `seed`; parameter gradients
    /// accumulate into `grad_out` at each leaf's offset. Non-finite
    /// intermediates abort with the op named.
    pub fn backward(
        &self,
        root: NodeId,
        seed: f64,
        grad_out: &mut [f64],
    ) -> Result<(), TsModelError> {
        assert_eq!(self.values[root].data.len(), 1, "root must be scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; self.values.len()];
        grads[root] = Some(Mat::from_vec(1, 1, vec![seed]));

        for id in (0..=root).rev() {
            let Some(grad) = grads[id].take() else { continue };
            if grad.data.iter().any(|v| !v.is_finite()) {
                return Err(TsModelError::Numeric(format!(
                    "non-finite gradient at {}",
                    self.op_name(id)
                )));
            }
            let bump = |grads: &mut Vec<Option<Mat>>, parent: usize, delta: Mat| {
                match &mut grads[parent] {
                    Some(existing) => {
                        for (e, d) in existing.data.iter_mut().zip(&delta.data) {
                            *e += d;
                        }
                    }
                    slot => *slot = Some(delta),
                }
            };
            match &self.ops[id] {
                Op::Leaf { param_offset } => {
                    if let Some(offset) = param_offset {
                        for (i, g) in grad.data.iter().enumerate() {
                            grad_out[offset + i] += g;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ma, mb) = (&self.values[*a], &self.values[*b]);
                    // dA = dC B^T
                    let mut da = Mat::zeros(ma.rows, ma.cols);
                    for i in 0..ma.rows {
                        for p in 0..ma.cols {
                            let mut acc = 0.0;
                            for j in 0..mb.cols {
                                acc += grad.at(i, j) * mb.at(p, j);
                            }
                            *da.at_mut(i, p) = acc;
                        }
                    }
                    // dB = A^T dC
                    let mut db = Mat::zeros(mb.rows, mb.cols);
                    for p in 0..mb.rows {
                        for j in 0..mb.cols {
                            let mut acc = 0.0;
                            for i in 0..ma.rows {
                                acc += ma.at(i, p) * grad.at(i, j);
                            }
                            *db.at_mut(p, j) = acc;
                        }
                    }
                    bump(&mut grads, *a, da);
                    bump(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    bump(&mut grads, *a, grad.clone());
                    bump(&mut grads, *b, grad);
                }
                Op::AddRow(a, row) => {
                    let cols = grad.cols;
                    let mut drow = Mat::zeros(1, cols);
                    for r in 0..grad.rows {
                        for c in 0..cols {
                            *drow.at_mut(0, c) += grad.at(r, c);
                        }
                    }
                    bump(&mut grads, *a, grad);
                    bump(&mut grads, *row, drow);
                }
                Op::Scale(a, factor) => {
                    let mut da = grad;
                    for v in &mut da.data {
                        *v *= factor;
                    }
                    bump(&mut grads, *a, da);
                }
                Op::Gelu(a) => {
                    let ma = &self.values[*a];
                    let mut da = grad;
                    for (g, x) in da.data.iter_mut().zip(&ma.data) {
                        *g *= gelu_prime(*x);
                    }
                    bump(&mut grads, *a, da);
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let (mx, mg) = (&self.values[*x], &self.values[*gamma]);
                    let n = mx.cols as f64;
                    let mut dx = Mat::zeros(mx.rows, mx.cols);
                    let mut dgamma = Mat::zeros(1, mx.cols);
                    let mut dbeta = Mat::zeros(1, mx.cols);
                    for r in 0..mx.rows {
                        let mean = (0..mx.cols).map(|c| mx.at(r, c)).sum::<f64>() / n;
                        let var = (0..mx.cols)
                            .map(|c| (mx.at(r, c) - mean).powi(2))
                            .sum::<f64>()
                            / n;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let xhat: Vec<f64> =
                            (0..mx.cols).map(|c| (mx.at(r, c) - mean) * inv).collect();
                        let dxhat: Vec<f64> = (0..mx.cols)
                            .map(|c| grad.at(r, c) * mg.at(0, c))
                            .collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / n;
                        let mean_dxhat_xhat = dxhat
                            .iter()
                            .zip(&xhat)
                            .map(|(d, h)| d * h)
                            .sum::<f64>()
                            / n;
                        for c in 0..mx.cols {
                            *dgamma.at_mut(0, c) += grad.at(r, c) * xhat[c];
                            *dbeta.at_mut(0, c) += grad.at(r, c);
                            *dx.at_mut(r, c) =
                                inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                        }
                    }
                    bump(&mut grads, *x, dx);
                    bump(&mut grads, *gamma, dgamma);
                    bump(&mut grads, *beta, dbeta);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.values[id];
                    let mut da = Mat::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let dot: f64 =
                            (0..y.cols).map(|c| grad.at(r, c) * y.at(r, c)).sum();
                        for c in 0..y.cols {
                            *da.at_mut(r, c) = y.at(r, c) * (grad.at(r, c) - dot);
                        }
                    }
                    bump(&mut grads, *a, da);
                }
                Op::MeanRows(a) => {
                    let ma = &self.values[*a];
                    let m = ma.rows as f64;
                    let mut da = Mat::zeros(ma.rows, ma.cols);
                    for r in 0..ma.rows {
                        for c in 0..ma.cols {
                            *da.at_mut(r, c) = grad.at(0, c) / m;
                        }
                    }
                    bump(&mut grads, *a, da);
                }
                Op::Transpose(a) => {
                    let mut da = Mat::zeros(grad.cols, grad.rows);
                    for r in 0..grad.rows {
                        for c in 0..grad.cols {
                            *da.at_mut(c, r) = grad.at(r, c);
                        }
                    }
                    bump(&mut grads, *a, da);
                }
                Op::SliceCols { x, start } => {
                    let mx = &self.values[*x];
                    let mut da = Mat::zeros(mx.rows, mx.cols);
                    for r in 0..grad.rows {
                        for c in 0..grad.cols {
                            *da.at_mut(r, start + c) = grad.at(r, c);
                        }
                    }
                    bump(&mut grads, *x, da);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.values[p].cols;
                        let mut dp = Mat::zeros(grad.rows, cols);
                        for r in 0..grad.rows {
                            for c in 0..cols {
                                *dp.at_mut(r, c) = grad.at(r, offset + c);
                            }
                        }
                        bump(&mut grads, p, dp);
                        offset += cols;
                    }
                }
                Op::Hadamard(a, b) => {
                    let (ma, mb) = (&self.values[*a], &self.values[*b]);
                    let mut da = Mat::zeros(ma.rows, ma.cols);
                    let mut db = Mat::zeros(mb.rows, mb.cols);
                    for i in 0..grad.data.len() {
                        da.data[i] = grad.data[i] * mb.data[i];
                        db.data[i] = grad.data[i] * ma.data[i];
                    }
                    bump(&mut grads, *a, da);
                    bump(&mut grads, *b, db);
                }
            }
        }
        Ok(())
    }

    fn op_name(&self, id: NodeId) -> &'static str {
        match self.ops[id] {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Gelu(..) => "gelu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::SoftmaxRows(..) => "softmax",
            Op::MeanRows(..) => "mean_rows",
            Op::Transpose(..) => "transpose",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::Hadamard(..) => "hadamard",
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Finite-difference check of an arbitrary scalar graph built from a
    /// flat parameter vector.
    fn fd_check(
        build: impl Fn(&mut Tape, &[f64]) -> NodeId,
        params: &[f64],
        tol: f64,
    ) {
        let mut tape = Tape::new();
        let root = build(&mut tape, params);
        let mut analytic = vec![0.0; params.len()];
        tape.backward(root, 1.0, &mut analytic).unwrap();

        let h = 1e-5;
        for i in 0..params.len() {
            let mut plus = params.to_vec();
            plus[i] += h;
            let mut minus = params.to_vec();
            minus[i] -= h;
            let mut tp = Tape::new();
            let rp = build(&mut tp, &plus);
            let mut tm = Tape::new();
            let rm = build(&mut tm, &minus);
            let numeric = (tp.value(rp).data[0] - tm.value(rm).data[0]) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic[i] - numeric).abs() / denom;
            assert!(
                rel < tol,
                "param {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
        }
    }

    fn random_params(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn matmul_addrow_gelu_gradients() {
        // x [2,3] fixed constant, w [3,2], b [1,2]; scalar = mean of gelu.
        let params = random_params(8, 1);
        fd_check(
            |tape, p| {
                let x = tape.constant(Mat::from_vec(
                    2,
                    3,
                    vec![0.3, -0.7, 1.1, 0.2, 0.9, -1.3],
                ));
                let w = tape.param(p, 0, 3, 2);
                let b = tape.param(p, 6, 1, 2);
                let xw = tape.matmul(x, w);
                let pre = tape.add_row(xw, b);
                let act = tape.gelu(pre);
                let pooled = tape.mean_rows(act);
                let ones = tape.constant(Mat::from_vec(2, 1, vec![1.0, 1.0]));
                let half = tape.scale(ones, 0.5);
                tape.matmul(pooled, half)
            },
            &params,
            1e-5,
        );
    }

    #[test]
    fn layer_norm_gradients() {
        let params = random_params(16, 2);
        fd_check(
            |tape, p| {
                let x = tape.param(p, 0, 2, 4);
                let gamma = tape.param(p, 8, 1, 4);
                let beta = tape.param(p, 12, 1, 4);
                let normed = tape.layer_norm(x, gamma, beta);
                let act = tape.gelu(normed);
                let pooled = tape.mean_rows(act);
                let w = tape.constant(Mat::from_vec(4, 1, vec![0.6, -0.3, 0.8, 0.1]));
                tape.matmul(pooled, w)
            },
            &params,
            2e-5,
        );
    }

    #[test]
    fn softmax_attention_gradients() {
        // q,k,v as parameters [3,2]; attention out pooled to a scalar.
        let params = random_params(18, 3);
        fd_check(
            |tape, p| {
                let q = tape.param(p, 0, 3, 2);
                let k = tape.param(p, 6, 3, 2);
                let v = tape.param(p, 12, 3, 2);
                let kt = tape.transpose(k);
                let scores = tape.matmul(q, kt);
                let scaled = tape.scale(scores, 1.0 / (2.0f64).sqrt());
                let attn = tape.softmax_rows(scaled);
                let out = tape.matmul(attn, v);
                let pooled = tape.mean_rows(out);
                let w = tape.constant(Mat::from_vec(2, 1, vec![0.7, -0.4]));
                tape.matmul(pooled, w)
            },
            &params,
            1e-5,
        );
    }

    #[test]
    fn slice_concat_transpose_gradients() {
        let params = random_params(12, 4);
        fd_check(
            |tape, p| {
                let x = tape.param(p, 0, 3, 4);
                let left = tape.slice_cols(x, 0, 2);
                let right = tape.slice_cols(x, 2, 2);
                let scaled = tape.scale(right, 1.5);
                let joined = tape.concat_cols(&[left, scaled]);
                let pooled = tape.mean_rows(joined);
                let w = tape.constant(Mat::from_vec(4, 1, vec![0.2, -0.5, 0.9, 0.4]));
                tape.matmul(pooled, w)
            },
            &params,
            1e-5,
        );
    }

    #[test]
    fn hadamard_and_add_gradients() {
        let params = random_params(8, 5);
        fd_check(
            |tape, p| {
                let a = tape.param(p, 0, 2, 2);
                let b = tape.param(p, 4, 2, 2);
                let mask = tape.constant(Mat::from_vec(2, 2, vec![1.0, 0.0, 1.0, 1.0]));
                let masked = tape.hadamard(a, mask);
                let sum = tape.add(masked, b);
                let pooled = tape.mean_rows(sum);
                let w = tape.constant(Mat::from_vec(2, 1, vec![1.0, -1.0]));
                tape.matmul(pooled, w)
            },
            &params,
            1e-5,
        );
    }

    #[test]
    fn shared_parameter_accumulates() {
        // Root = mean_rows(w)·1 + mean_rows(w)·1 uses w twice; gradient
        // doubles.
        let params = vec![0.4, -0.2];
        let mut tape = Tape::new();
        let w = tape.param(&params, 0, 1, 2);
        let ones = tape.constant(Mat::from_vec(2, 1, vec![1.0, 1.0]));
        let first = tape.matmul(w, ones);
        let second = tape.matmul(w, ones);
        let root = tape.add(first, second);
        let mut grads = vec![0.0; 2];
        tape.backward(root, 1.0, &mut grads).unwrap();
        assert_eq!(grads, vec![2.0, 2.0]);
    }
}
