//! Reverse-mode gradient tape.
//!
//! The tape records every forward operation as an append-only node list in
//! topological order; [`Tape::backward`] walks the list once in reverse and
//! accumulates exact adjoints. Only the operations the model needs exist —
//! no broadcasting rules, no higher-order derivatives — and everything is
//! computed and accumulated in f64.
//!
//! Shape and domain violations are programming errors and panic.

use super::{Dense, RowMask};
use crate::graph::SparseAdjacency;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'g> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, k: f64 },
    MatmulNt(Var, Var),
    Spmm { adj: &'g SparseAdjacency, x: Var },
    SpmmScaled { adj: &'g SparseAdjacency, scale: Var, x: Var },
    GatherRows { x: Var, idx: &'g [u32] },
    MaskRows { x: Var, mask: &'g RowMask, token: Var },
    ConcatRows(Var, Var),
    SliceRows { x: Var, start: usize, len: usize },
    SliceCols { x: Var, start: usize, len: usize },
    MeanPool(Vec<Var>),
    RowNormalize(Var),
    RowDot(Var, Var),
    RowLogSumExp(Var),
    RowSum(Var),
    Diag(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    SumAll(Var),
}

struct Node<'g> {
    op: Op<'g>,
    value: Dense,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Dense>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a node, if the node was on the path.
    pub fn get(&self, v: Var) -> Option<&Dense> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient as an owned matrix, zeros when the node was off the path.
    pub fn take_or_zeros(&mut self, tape: &Tape, v: Var) -> Dense {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => Dense::zeros(tape.value(v).raw_dim()),
        }
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

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Forward recorder and backward evaluator.
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
}

impl<'g> Default for Tape<'g> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op<'g>, value: Dense) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Enter an input or parameter matrix.
    pub fn leaf(&mut self, value: Dense) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &Dense {
        &self.nodes[v.0].value
    }

    /// Forward value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "expected a scalar node");
        m[[0, 0]]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), value)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), value)
    }

    /// k·x + b, elementwise. The shift is constant, so only k matters to
    /// the adjoint.
    pub fn affine(&mut self, x: Var, k: f64, b: f64) -> Var {
        let value = self.value(x).mapv(|v| k * v + b);
        self.push(Op::Affine { x, k }, value)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.affine(x, k, 0.0)
    }

    /// A·Bᵀ for row-aligned similarity matrices.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.value(a).ncols(),
            self.value(b).ncols(),
            "matmul_nt inner dimension mismatch"
        );
        let value = self.value(a).dot(&self.value(b).t());
        self.push(Op::MatmulNt(a, b), value)
    }

    /// Multiply by a normalized sparse operator.
    pub fn spmm(&mut self, adj: &'g SparseAdjacency, x: Var) -> Var {
        let value = adj.apply(self.value(x));
        self.push(Op::Spmm { adj, x }, value)
    }

    /// Multiply by the operator with each stored entry scaled by
    /// `scale[k]` (an nnz×1 node); both inputs receive gradients.
    pub fn spmm_scaled(&mut self, adj: &'g SparseAdjacency, scale: Var, x: Var) -> Var {
        assert_eq!(
            self.value(scale).dim(),
            (adj.nnz(), 1),
            "one scale entry per stored entry"
        );
        let s: Vec<f64> = self.value(scale).column(0).to_vec();
        let value = adj.apply_scaled(&s, self.value(x));
        self.push(Op::SpmmScaled { adj, scale, x }, value)
    }

    /// Select rows by index; repeats allowed, adjoint scatter-adds.
    pub fn gather_rows(&mut self, x: Var, idx: &'g [u32]) -> Var {
        let src = self.value(x);
        let mut value = Dense::zeros((idx.len(), src.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            value.row_mut(r).assign(&src.row(i as usize));
        }
        self.push(Op::GatherRows { x, idx }, value)
    }

    /// Replace masked rows by the (broadcast) token row.
    pub fn mask_rows(&mut self, x: Var, mask: &'g RowMask, token: Var) -> Var {
        let src = self.value(x);
        assert_eq!(src.nrows(), mask.size(), "mask covers a different row count");
        assert_eq!(self.value(token).nrows(), 1, "token must be a single row");
        assert_eq!(self.value(token).ncols(), src.ncols(), "token width mismatch");
        let mut value = src.clone();
        let token_row = self.value(token).row(0).to_owned();
        for &r in mask.masked_rows() {
            value.row_mut(r as usize).assign(&token_row);
        }
        self.push(Op::MaskRows { x, mask, token }, value)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.value(a).dim();
        let (rb, cb) = self.value(b).dim();
        assert_eq!(ca, cb, "concat_rows width mismatch");
        let mut value = Dense::zeros((ra + rb, ca));
        value.slice_mut(ndarray::s![..ra, ..]).assign(self.value(a));
        value.slice_mut(ndarray::s![ra.., ..]).assign(self.value(b));
        self.push(Op::ConcatRows(a, b), value)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (r, _) = self.value(x).dim();
        assert!(start + len <= r, "row slice out of range");
        let value = self
            .value(x)
            .slice(ndarray::s![start..start + len, ..])
            .to_owned();
        self.push(Op::SliceRows { x, start, len }, value)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let (_, c) = self.value(x).dim();
        assert!(start + len <= c, "column slice out of range");
        let value = self
            .value(x)
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(Op::SliceCols { x, start, len }, value)
    }

    /// Split an even-width matrix into its left and right column halves.
    pub fn split_cols_halves(&mut self, x: Var) -> (Var, Var) {
        let (_, c) = self.value(x).dim();
        assert!(c % 2 == 0, "split_cols_halves needs an even width");
        (self.slice_cols(x, 0, c / 2), self.slice_cols(x, c / 2, c / 2))
    }

    /// Elementwise mean of equally shaped matrices.
    pub fn mean_pool_rows(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "mean over an empty list");
        let dim = self.value(xs[0]).dim();
        let mut value = Dense::zeros(dim);
        for &v in xs {
            assert_eq!(self.value(v).dim(), dim, "mean_pool_rows shape mismatch");
            value += self.value(v);
        }
        value.mapv_inplace(|v| v / xs.len() as f64);
        self.push(Op::MeanPool(xs.to_vec()), value)
    }

    /// L2-normalize each row; zero rows pass through as zeros.
    pub fn rowwise_l2_normalize(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut value = src.clone();
        for mut row in value.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        self.push(Op::RowNormalize(x), value)
    }

    /// Per-row dot product of two equally shaped matrices, as n×1.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "row_dot shape mismatch");
        let n = self.value(a).nrows();
        let mut value = Dense::zeros((n, 1));
        for i in 0..n {
            value[[i, 0]] = self.value(a).row(i).dot(&self.value(b).row(i));
        }
        self.push(Op::RowDot(a, b), value)
    }

    /// log Σⱼ exp(xᵢⱼ) per row, max-shifted for stability, as n×1.
    pub fn row_logsumexp(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let n = src.nrows();
        let mut value = Dense::zeros((n, 1));
        for i in 0..n {
            let row = src.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
            value[[i, 0]] = m + sum.ln();
        }
        self.push(Op::RowLogSumExp(x), value)
    }

    /// Row sums as n×1.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let n = src.nrows();
        let mut value = Dense::zeros((n, 1));
        for i in 0..n {
            value[[i, 0]] = src.row(i).sum();
        }
        self.push(Op::RowSum(x), value)
    }

    /// Main diagonal of a square matrix, as n×1.
    pub fn diag(&mut self, x: Var) -> Var {
        let src = self.value(x);
        assert_eq!(src.nrows(), src.ncols(), "diag of a non-square matrix");
        let n = src.nrows();
        let mut value = Dense::zeros((n, 1));
        for i in 0..n {
            value[[i, 0]] = src[[i, i]];
        }
        self.push(Op::Diag(x), value)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(sigmoid);
        self.push(Op::Sigmoid(x), value)
    }

    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(log_sigmoid);
        self.push(Op::LogSigmoid(x), value)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(softplus);
        self.push(Op::Softplus(x), value)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::exp);
        self.push(Op::Exp(x), value)
    }

    /// Natural log; panics on non-positive input (domain error).
    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| {
            assert!(v > 0.0, "log of non-positive value {v}");
            v.ln()
        });
        self.push(Op::Log(x), value)
    }

    /// Sum of all entries, as 1×1.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Dense::from_elem((1, 1), self.value(x).sum());
        self.push(Op::SumAll(x), value)
    }

    /// Mean of all entries, as 1×1.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dim();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / (r * c) as f64)
    }

    /// Reverse pass from a scalar loss node. Visits each node once; leaves
    /// that the loss never touched report no gradient.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Dense>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Dense::from_elem((1, 1), 1.0));

        for i in (0..=loss.0).rev() {
            if grads[i].is_none() {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let g = grads[i].take().expect("checked above");
            let add_to = |grads: &mut Vec<Option<Dense>>, v: Var, delta: Dense| {
                match &mut grads[v.0] {
                    Some(acc) => *acc += &delta,
                    slot @ None => *slot = Some(delta),
                }
            };
            match &self.nodes[i].op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    add_to(&mut grads, *a, g.clone());
                    add_to(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    add_to(&mut grads, *a, g.clone());
                    add_to(&mut grads, *b, -g);
                }
                Op::Mul(a, b) => {
                    add_to(&mut grads, *a, &g * self.value(*b));
                    add_to(&mut grads, *b, &g * self.value(*a));
                }
                Op::Affine { x, k } => {
                    add_to(&mut grads, *x, g.mapv(|v| v * k));
                }
                Op::MatmulNt(a, b) => {
                    add_to(&mut grads, *a, g.dot(self.value(*b)));
                    add_to(&mut grads, *b, g.t().dot(self.value(*a)));
                }
                Op::Spmm { adj, x } => {
                    add_to(&mut grads, *x, adj.apply(&g));
                }
                Op::SpmmScaled { adj, scale, x } => {
                    let s: Vec<f64> = self.value(*scale).column(0).to_vec();
                    add_to(&mut grads, *x, adj.apply_scaled_transpose(&s, &g));

                    let xv = self.value(*x);
                    let mut sg = Dense::zeros((adj.nnz(), 1));
                    let mut k = 0usize;
                    for i_row in 0..adj.n() {
                        let cols = adj.row_indices(i_row);
                        let base = adj.row_weights(i_row);
                        let grow = g.row(i_row);
                        for (off, &j) in cols.iter().enumerate() {
                            sg[[k, 0]] = base[off] * grow.dot(&xv.row(j as usize));
                            k += 1;
                        }
                    }
                    add_to(&mut grads, *scale, sg);
                }
                Op::GatherRows { x, idx } => {
                    let mut xg = Dense::zeros(self.value(*x).raw_dim());
                    for (r, &ix) in idx.iter().enumerate() {
                        let mut row = xg.row_mut(ix as usize);
                        row += &g.row(r);
                    }
                    add_to(&mut grads, *x, xg);
                }
                Op::MaskRows { x, mask, token } => {
                    let mut xg = g.clone();
                    let mut tg = Dense::zeros((1, g.ncols()));
                    for &r in mask.masked_rows() {
                        {
                            let mut trow = tg.row_mut(0);
                            trow += &g.row(r as usize);
                        }
                        xg.row_mut(r as usize).fill(0.0);
                    }
                    add_to(&mut grads, *x, xg);
                    add_to(&mut grads, *token, tg);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.value(*a).nrows();
                    add_to(&mut grads, *a, g.slice(ndarray::s![..ra, ..]).to_owned());
                    add_to(&mut grads, *b, g.slice(ndarray::s![ra.., ..]).to_owned());
                }
                Op::SliceRows { x, start, len } => {
                    let mut xg = Dense::zeros(self.value(*x).raw_dim());
                    xg.slice_mut(ndarray::s![*start..start + len, ..]).assign(&g);
                    add_to(&mut grads, *x, xg);
                }
                Op::SliceCols { x, start, len } => {
                    let mut xg = Dense::zeros(self.value(*x).raw_dim());
                    xg.slice_mut(ndarray::s![.., *start..start + len]).assign(&g);
                    add_to(&mut grads, *x, xg);
                }
                Op::MeanPool(xs) => {
                    let share = g.mapv(|v| v / xs.len() as f64);
                    for &v in xs {
                        add_to(&mut grads, v, share.clone());
                    }
                }
                Op::RowNormalize(x) => {
                    let src = self.value(*x);
                    let out = &self.nodes[i].value;
                    let mut xg = Dense::zeros(src.raw_dim());
                    for r in 0..src.nrows() {
                        let norm = src.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            let y = out.row(r);
                            let gr = g.row(r);
                            let proj = gr.dot(&y);
                            let mut row = xg.row_mut(r);
                            for c in 0..src.ncols() {
                                row[c] = (gr[c] - y[c] * proj) / norm;
                            }
                        }
                    }
                    add_to(&mut grads, *x, xg);
                }
                Op::RowDot(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let mut ag = Dense::zeros(av.raw_dim());
                    let mut bg = Dense::zeros(bv.raw_dim());
                    for r in 0..av.nrows() {
                        let gr = g[[r, 0]];
                        for c in 0..av.ncols() {
                            ag[[r, c]] = gr * bv[[r, c]];
                            bg[[r, c]] = gr * av[[r, c]];
                        }
                    }
                    add_to(&mut grads, *a, ag);
                    add_to(&mut grads, *b, bg);
                }
                Op::RowLogSumExp(x) => {
                    let src = self.value(*x);
                    let out = &self.nodes[i].value;
                    let mut xg = Dense::zeros(src.raw_dim());
                    for r in 0..src.nrows() {
                        let gr = g[[r, 0]];
                        let lse = out[[r, 0]];
                        for c in 0..src.ncols() {
                            xg[[r, c]] = gr * (src[[r, c]] - lse).exp();
                        }
                    }
                    add_to(&mut grads, *x, xg);
                }
                Op::RowSum(x) => {
                    let src = self.value(*x);
                    let mut xg = Dense::zeros(src.raw_dim());
                    for r in 0..src.nrows() {
                        let gr = g[[r, 0]];
                        xg.row_mut(r).fill(gr);
                    }
                    add_to(&mut grads, *x, xg);
                }
                Op::Diag(x) => {
                    let mut xg = Dense::zeros(self.value(*x).raw_dim());
                    for r in 0..xg.nrows() {
                        xg[[r, r]] = g[[r, 0]];
                    }
                    add_to(&mut grads, *x, xg);
                }
                Op::Sigmoid(x) => {
                    let out = &self.nodes[i].value;
                    add_to(&mut grads, *x, &g * &out.mapv(|s| s * (1.0 - s)));
                }
                Op::LogSigmoid(x) => {
                    let src = self.value(*x);
                    add_to(&mut grads, *x, &g * &src.mapv(|v| sigmoid(-v)));
                }
                Op::Softplus(x) => {
                    let src = self.value(*x);
                    add_to(&mut grads, *x, &g * &src.mapv(sigmoid));
                }
                Op::Exp(x) => {
                    add_to(&mut grads, *x, &g * &self.nodes[i].value);
                }
                Op::Log(x) => {
                    add_to(&mut grads, *x, &g / self.value(*x));
                }
                Op::SumAll(x) => {
                    let gs = g[[0, 0]];
                    add_to(&mut grads, *x, Dense::from_elem(self.value(*x).raw_dim(), gs));
                }
            }
        }
        Gradients { grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_adjacency;
    use crate::tensor::{dense, fd, max_abs_diff, sample_mask};

    #[test]
    fn sum_of_matrix_has_all_ones_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(dense(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let loss = tape.sum_all(x);
        let grads = tape.backward(loss);
        assert_eq!(grads.get(x).unwrap(), &Dense::from_elem((2, 2), 1.0));
    }

    #[test]
    fn squared_shift_has_analytic_gradient() {
        // loss = (x − 3)² at x = 5 → gradient 4.
        let mut tape = Tape::new();
        let x = tape.leaf(dense(&[&[5.0]]));
        let shifted = tape.affine(x, 1.0, -3.0);
        let sq = tape.mul(shifted, shifted);
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss);
        assert!((grads.get(x).unwrap()[[0, 0]] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn log_sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(dense(&[&[0.0]]));
        let y = tape.log_sigmoid(x);
        assert!((tape.value(y)[[0, 0]] + std::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn normalize_keeps_unit_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(dense(&[&[0.6, 0.8], &[0.0, 0.0]]));
        let y = tape.rowwise_l2_normalize(x);
        assert!(max_abs_diff(tape.value(y), &dense(&[&[0.6, 0.8], &[0.0, 0.0]])) < 1e-15);
    }

    #[test]
    fn mean_pool_of_identical_matrices_is_identity() {
        let mut tape = Tape::new();
        let m = dense(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let a = tape.leaf(m.clone());
        let b = tape.leaf(m.clone());
        let c = tape.leaf(m.clone());
        let pooled = tape.mean_pool_rows(&[a, b, c]);
        assert!(max_abs_diff(tape.value(pooled), &m) < 1e-15);
    }

    #[test]
    fn spmm_matches_dense_and_identity_passthrough() {
        let adj = normalize_adjacency(3, &[(0, 1), (1, 2)]);
        let x = dense(&[&[1.0, 0.0], &[2.0, -1.0], &[0.5, 4.0]]);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = tape.spmm(&adj, xv);
        assert!(max_abs_diff(tape.value(y), &adj.to_dense().dot(&x)) < 1e-12);

        let empty = normalize_adjacency(3, &[]);
        let z = tape.spmm(&empty, xv);
        assert_eq!(tape.value(z), &Dense::zeros((3, 2)));
    }

    #[test]
    fn off_path_leaves_have_no_gradient() {
        let mut tape = Tape::new();
        let used = tape.leaf(dense(&[&[2.0]]));
        let unused = tape.leaf(dense(&[&[7.0]]));
        let loss = tape.sum_all(used);
        let mut grads = tape.backward(loss);
        assert!(grads.get(unused).is_none());
        assert_eq!(
            grads.take_or_zeros(&tape, unused),
            Dense::zeros((1, 1))
        );
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(dense(&[&[1.0, 2.0]]));
        tape.backward(x);
    }

    #[test]
    fn masked_rows_route_gradient_to_token() {
        let mut rng = crate::rng::stream(3, "mask");
        let mask = sample_mask(4, 0.5, &mut rng);
        assert_eq!(mask.len(), 2);

        let mut tape = Tape::new();
        let x = tape.leaf(dense(&[&[1.0], &[2.0], &[3.0], &[4.0]]));
        let token = tape.leaf(dense(&[&[10.0]]));
        let masked = tape.mask_rows(x, &mask, token);
        for &r in mask.masked_rows() {
            assert_eq!(tape.value(masked)[[r as usize, 0]], 10.0);
        }
        let loss = tape.sum_all(masked);
        let grads = tape.backward(loss);
        assert_eq!(grads.get(token).unwrap()[[0, 0]], mask.len() as f64);
        let xg = grads.get(x).unwrap();
        for r in 0..4 {
            let expected = if mask.contains(r) { 0.0 } else { 1.0 };
            assert_eq!(xg[[r, 0]], expected);
        }
    }

    #[test]
    fn row_logsumexp_matches_naive() {
        let x = dense(&[&[0.1, -0.4, 2.0], &[5.0, 5.0, 5.0]]);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let lse = tape.row_logsumexp(xv);
        for r in 0..2 {
            let naive: f64 = x.row(r).iter().map(|v| v.exp()).sum::<f64>().ln();
            assert!((tape.value(lse)[[r, 0]] - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_then_slice_round_trips() {
        let mut tape = Tape::new();
        let a = tape.leaf(dense(&[&[1.0, 2.0]]));
        let b = tape.leaf(dense(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let cat = tape.concat_rows(a, b);
        assert_eq!(tape.value(cat).nrows(), 3);
        let (left, right) = tape.split_cols_halves(cat);
        assert_eq!(tape.value(left).dim(), (3, 1));
        assert_eq!(tape.value(right).dim(), (3, 1));
        assert_eq!(tape.value(left)[[1, 0]], 3.0);
        assert_eq!(tape.value(right)[[2, 0]], 6.0);
    }

    /// Every op composed into one expression, checked against central
    /// finite differences through the full tape.
    #[test]
    fn composite_expression_passes_finite_difference_check() {
        use rand::Rng;
        let adj = normalize_adjacency(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 4)]);
        let idx: Vec<u32> = vec![0, 2, 2, 4];
        let entry_edges: Vec<u32> = adj.entry_edges().to_vec();
        let mut rng = crate::rng::stream(9, "fd");
        let mask = sample_mask(5, 0.4, &mut rng);

        let x0: Dense = Dense::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));
        let logits0: Dense = Dense::from_shape_fn((adj.edge_count(), 1), |_| rng.gen_range(-0.5..0.5));
        let token0: Dense = Dense::from_shape_fn((1, 4), |_| rng.gen_range(-1.0..1.0));

        let eval = |x: &Dense, logits: &Dense, token: &Dense| -> (f64, Option<[Dense; 3]>) {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let lv = tape.leaf(logits.clone());
            let tv = tape.leaf(token.clone());

            let masked = tape.mask_rows(xv, &mask, tv);
            let keep = tape.sigmoid(lv);
            let scale = tape.gather_rows(keep, &entry_edges);
            let h1 = tape.spmm_scaled(&adj, scale, masked);
            let h2 = tape.spmm(&adj, h1);
            let pooled = tape.mean_pool_rows(&[h1, h2]);
            let picked = tape.gather_rows(pooled, &idx);
            let normed = tape.rowwise_l2_normalize(picked);
            let sims = tape.matmul_nt(normed, normed);
            let scaled = tape.scale(sims, 1.0 / 0.3);
            let lse = tape.row_logsumexp(scaled);
            let pos = tape.diag(scaled);
            let nce = tape.sub(lse, pos);

            let (mu, eta_raw) = tape.split_cols_halves(picked);
            let eta_sp = tape.softplus(eta_raw);
            let eta = tape.affine(eta_sp, 1.0, 1e-3);
            let mu2 = tape.mul(mu, mu);
            let eta2 = tape.mul(eta, eta);
            let ln_eta = tape.log(eta);
            let quad = tape.add(mu2, eta2);
            let half = tape.scale(quad, 0.5);
            let shifted = tape.affine(half, 1.0, -0.5);
            let kl = tape.sub(shifted, ln_eta);

            let dots = tape.row_dot(picked, normed);
            let ls = tape.log_sigmoid(dots);
            let e = tape.exp(ls);

            let s1 = tape.sum_all(nce);
            let s2 = tape.sum_all(kl);
            let s3 = tape.mean_all(e);
            let partial = tape.add(s1, s2);
            let loss = tape.add(partial, s3);

            let value = tape.scalar(loss);
            let mut grads = tape.backward(loss);
            let out = [
                grads.take_or_zeros(&tape, xv),
                grads.take_or_zeros(&tape, lv),
                grads.take_or_zeros(&tape, tv),
            ];
            (value, Some(out))
        };

        let (_, grads) = eval(&x0, &logits0, &token0);
        let [gx, gl, gt] = grads.unwrap();

        let h = 1e-5;
        let nx = fd::central_gradient(&mut |x| eval(x, &logits0, &token0).0, &x0, h);
        let nl = fd::central_gradient(&mut |l| eval(&x0, l, &token0).0, &logits0, h);
        let nt = fd::central_gradient(&mut |t| eval(&x0, &logits0, t).0, &token0, h);

        assert!(fd::max_rel_error(&gx, &nx) < 1e-6, "x: {}", fd::max_rel_error(&gx, &nx));
        assert!(fd::max_rel_error(&gl, &nl) < 1e-6, "logits: {}", fd::max_rel_error(&gl, &nl));
        assert!(fd::max_rel_error(&gt, &nt) < 1e-6, "token: {}", fd::max_rel_error(&gt, &nt));
    }

    #[test]
    fn replaying_a_tape_is_bit_identical() {
        use rand::Rng;
        let adj = normalize_adjacency(4, &[(0, 1), (1, 2), (2, 3)]);
        let run = || -> (f64, Dense) {
            let mut rng = crate::rng::stream(21, "replay");
            let x0: Dense = Dense::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
            let mut tape = Tape::new();
            let x = tape.leaf(x0);
            let y = tape.spmm(&adj, x);
            let z = tape.mul(y, y);
            let loss = tape.sum_all(z);
            let value = tape.scalar(loss);
            let mut grads = tape.backward(loss);
            (value, grads.take_or_zeros(&tape, x))
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        assert_eq!(g1, g2);
        assert!(g1.iter().zip(g2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
