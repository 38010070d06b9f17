//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns an arena of tensors ([`Var`] handles index into it) and an
//! ordered record of executed operations. The forward pass appends records in
//! topological order by construction; [`Tape::backward`] replays them in
//! reverse, pushing vector-Jacobian products into a transient adjoint
//! workspace and finally accumulating into the persistent gradient buffers of
//! `requires_grad` leaves. Repeated backward calls without [`Tape::zero_grads`]
//! therefore accumulate, one gradient unit per call.
//!
//! Every operation validates shapes up front and checks its output for
//! non-finite values; NaN/Inf never propagates silently.
//!
//! A tape and its tensors are confined to one thread during a training step;
//! kernels may parallelize internally (bit-exactly, see [`crate::exec`]).

use crate::error::{Error, Result};
use crate::kernels as k;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a tensor stored on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub(crate) fn idx(self) -> usize {
        self.0
    }
}

struct Node<E> {
    value: Tensor<E>,
    requires_grad: bool,
    /// Persistent gradient accumulator; present iff this is a
    /// `requires_grad` leaf.
    grad: Option<Vec<E>>,
    is_leaf: bool,
}

enum Op<E> {
    Add,
    Sub,
    Hadamard,
    Scale(E),
    Matmul { m: usize, k: usize, n: usize },
    MatmulNT { m: usize, k: usize, n: usize },
    AddBiasRow { rows: usize, cols: usize },
    AddChannel { hw: usize },
    MulChannel { hw: usize },
    Relu,
    Silu,
    Sigmoid,
    GroupNorm { groups: usize, rstds: Vec<E> },
    SoftmaxRows { rows: usize, cols: usize },
    MeanRows { rows: usize, cols: usize },
    SumAll,
    MeanAll,
    Conv2d { ci: usize, h: usize, w: usize, co: usize, stride: usize },
    Upsample2x { c: usize, h: usize, w: usize },
    Mse,
    Cosine { tau: E },
    CrossEntropy { target: usize },
    Reshape,
    Transpose2d { rows: usize, cols: usize },
    Slice1d { start: usize, full: usize },
}

struct Record<E> {
    op: Op<E>,
    inputs: Vec<usize>,
    out: usize,
}

/// Ordered record of executed operations with the tensors they touched.
pub struct Tape<E> {
    nodes: Vec<Node<E>>,
    records: Vec<Record<E>>,
    grad_enabled: bool,
}

impl<E: Scalar> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), records: Vec::new(), grad_enabled: true }
    }

    /// A tape that records nothing; used for inference/sampling.
    pub fn no_grad() -> Self {
        Tape { nodes: Vec::new(), records: Vec::new(), grad_enabled: false }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    /// Register a leaf tensor. Trainable leaves get a persistent gradient
    /// accumulator of the same shape.
    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite("leaf".into()));
        }
        let rg = requires_grad && self.grad_enabled;
        let grad = rg.then(|| vec![E::ZERO; value.numel()]);
        self.nodes.push(Node { value, requires_grad: rg, grad, is_leaf: true });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Register a non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<E>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a trainable leaf (None for constants and
    /// intermediates).
    pub fn grad(&self, v: Var) -> Option<Tensor<E>> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| {
            Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape matches value")
        })
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = &mut node.grad {
                g.iter_mut().for_each(|v| *v = E::ZERO);
            }
        }
    }

    fn push(
        &mut self,
        op: Op<E>,
        inputs: &[Var],
        shape: Vec<usize>,
        data: Vec<E>,
        op_name: &'static str,
    ) -> Result<Var> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(op_name.into()));
        }
        let requires_grad =
            self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = Tensor::new(shape, data)?;
        self.nodes.push(Node { value, requires_grad, grad: None, is_leaf: false });
        let out = self.nodes.len() - 1;
        if requires_grad {
            self.records.push(Record { op, inputs: inputs.iter().map(|v| v.0).collect(), out });
        }
        Ok(Var(out))
    }

    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !ta.is_same_shape(tb) {
            return Err(Error::Dimension {
                op,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn rank2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.nodes[v.0].value.shape();
        if s.len() != 2 {
            return Err(Error::Dimension { op, lhs: s.to_vec(), rhs: vec![] });
        }
        Ok((s[0], s[1]))
    }

    fn rank1(&self, op: &'static str, v: Var) -> Result<usize> {
        let s = self.nodes[v.0].value.shape();
        if s.len() != 1 {
            return Err(Error::Dimension { op, lhs: s.to_vec(), rhs: vec![] });
        }
        Ok(s[0])
    }

    fn rank3(&self, op: &'static str, v: Var) -> Result<(usize, usize, usize)> {
        let s = self.nodes[v.0].value.shape();
        if s.len() != 3 {
            return Err(Error::Dimension { op, lhs: s.to_vec(), rhs: vec![] });
        }
        Ok((s[0], s[1], s[2]))
    }

    // ── elementwise ──────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let data = k::ew_add(self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        self.push(Op::Add, &[a, b], self.nodes[a.0].value.shape().to_vec(), data, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("sub", a, b)?;
        let data = k::ew_sub(self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        self.push(Op::Sub, &[a, b], self.nodes[a.0].value.shape().to_vec(), data, "sub")
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("hadamard", a, b)?;
        let data = k::ew_mul(self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        self.push(Op::Hadamard, &[a, b], self.nodes[a.0].value.shape().to_vec(), data, "hadamard")
    }

    pub fn scale(&mut self, a: Var, c: E) -> Result<Var> {
        let data = k::ew_scale(self.nodes[a.0].value.data(), c);
        self.push(Op::Scale(c), &[a], self.nodes[a.0].value.shape().to_vec(), data, "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let data = k::relu(self.nodes[a.0].value.data());
        self.push(Op::Relu, &[a], self.nodes[a.0].value.shape().to_vec(), data, "relu")
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        let data = k::silu(self.nodes[a.0].value.data());
        self.push(Op::Silu, &[a], self.nodes[a.0].value.shape().to_vec(), data, "silu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let data = k::sigmoid(self.nodes[a.0].value.data());
        self.push(Op::Sigmoid, &[a], self.nodes[a.0].value.shape().to_vec(), data, "sigmoid")
    }

    // ── matrix products ──────────────────────────────────────────

    /// `(m,k) x (k,n) -> (m,n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.rank2("matmul", a)?;
        let (kb, n) = self.rank2("matmul", b)?;
        if ka != kb {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: vec![m, ka],
                rhs: vec![kb, n],
            });
        }
        let data = k::matmul(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), m, ka, n);
        self.push(Op::Matmul { m, k: ka, n }, &[a, b], vec![m, n], data, "matmul")
    }

    /// `(m,k) x (n,k)^T -> (m,n)`: linear layers applied as `x * W^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.rank2("matmul_nt", a)?;
        let (n, kb) = self.rank2("matmul_nt", b)?;
        if ka != kb {
            return Err(Error::Dimension {
                op: "matmul_nt",
                lhs: vec![m, ka],
                rhs: vec![n, kb],
            });
        }
        let data =
            k::matmul_nt(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), m, ka, n);
        self.push(Op::MatmulNT { m, k: ka, n }, &[a, b], vec![m, n], data, "matmul_nt")
    }

    // ── broadcasts ───────────────────────────────────────────────

    /// `(rows,cols) + (cols)`: add a vector to every row.
    pub fn add_bias_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.rank2("add_bias_row", x)?;
        let blen = self.rank1("add_bias_row", bias)?;
        if blen != cols {
            return Err(Error::Dimension {
                op: "add_bias_row",
                lhs: vec![rows, cols],
                rhs: vec![blen],
            });
        }
        let data =
            k::add_bias_row(self.nodes[x.0].value.data(), self.nodes[bias.0].value.data(), rows, cols);
        self.push(Op::AddBiasRow { rows, cols }, &[x, bias], vec![rows, cols], data, "add_bias_row")
    }

    /// `(c,h,w) + (c)`: per-channel bias broadcast over the spatial extent.
    pub fn add_channel(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (c, h, w) = self.rank3("add_channel", x)?;
        let blen = self.rank1("add_channel", bias)?;
        if blen != c {
            return Err(Error::Dimension {
                op: "add_channel",
                lhs: vec![c, h, w],
                rhs: vec![blen],
            });
        }
        let data = k::add_channel(self.nodes[x.0].value.data(), self.nodes[bias.0].value.data(), h * w);
        self.push(Op::AddChannel { hw: h * w }, &[x, bias], vec![c, h, w], data, "add_channel")
    }

    /// `(c,h,w) * (c)`: per-channel gate broadcast over the spatial extent.
    pub fn mul_channel(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (c, h, w) = self.rank3("mul_channel", x)?;
        let glen = self.rank1("mul_channel", gate)?;
        if glen != c {
            return Err(Error::Dimension {
                op: "mul_channel",
                lhs: vec![c, h, w],
                rhs: vec![glen],
            });
        }
        let data = k::mul_channel(self.nodes[x.0].value.data(), self.nodes[gate.0].value.data(), h * w);
        self.push(Op::MulChannel { hw: h * w }, &[x, gate], vec![c, h, w], data, "mul_channel")
    }

    // ── normalization and shaping ────────────────────────────────

    /// Affine-free group normalization of a `(c,h,w)` map.
    pub fn group_norm(&mut self, x: Var, groups: usize, eps: E) -> Result<Var> {
        let (c, h, w) = self.rank3("group_norm", x)?;
        if groups == 0 || c % groups != 0 {
            return Err(Error::Config(format!(
                "group_norm: {c} channels not divisible by {groups} groups"
            )));
        }
        let out = k::group_norm(self.nodes[x.0].value.data(), c, h * w, groups, eps);
        self.push(
            Op::GroupNorm { groups, rstds: out.rstds },
            &[x],
            vec![c, h, w],
            out.y,
            "group_norm",
        )
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.rank2("softmax_rows", x)?;
        let data = k::softmax_rows(self.nodes[x.0].value.data(), rows, cols);
        self.push(Op::SoftmaxRows { rows, cols }, &[x], vec![rows, cols], data, "softmax_rows")
    }

    /// Column means of a `(rows,cols)` matrix -> `(cols)`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.rank2("mean_rows", x)?;
        let data = k::mean_rows(self.nodes[x.0].value.data(), rows, cols);
        self.push(Op::MeanRows { rows, cols }, &[x], vec![cols], data, "mean_rows")
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = k::sum_all(self.nodes[x.0].value.data());
        self.push(Op::SumAll, &[x], vec![], vec![s], "sum_all")
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let s = k::mean_all(self.nodes[x.0].value.data());
        self.push(Op::MeanAll, &[x], vec![], vec![s], "mean_all")
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[x.0].value.numel() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.nodes[x.0].value.shape().to_vec(),
                rhs: shape,
            });
        }
        let data = self.nodes[x.0].value.data().to_vec();
        self.push(Op::Reshape, &[x], shape, data, "reshape")
    }

    pub fn transpose2d(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.rank2("transpose2d", x)?;
        let src = self.nodes[x.0].value.data();
        let data = k::transpose(src, rows, cols);
        self.push(Op::Transpose2d { rows, cols }, &[x], vec![cols, rows], data, "transpose2d")
    }

    /// Contiguous slice of a rank-1 tensor.
    pub fn slice1d(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let full = self.rank1("slice1d", x)?;
        if start + len > full {
            return Err(Error::Range {
                what: "slice1d",
                got: start + len,
                expected: format!("<= {full}"),
            });
        }
        let data = self.nodes[x.0].value.data()[start..start + len].to_vec();
        self.push(Op::Slice1d { start, full }, &[x], vec![len], data, "slice1d")
    }

    // ── convolution / upsampling ─────────────────────────────────

    /// 3x3 convolution with zero padding 1 and stride 1 or 2.
    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        if stride != 1 && stride != 2 {
            return Err(Error::Config(format!("conv2d stride must be 1 or 2, got {stride}")));
        }
        let (ci, h, w) = self.rank3("conv2d", x)?;
        let ws = self.nodes[weight.0].value.shape().to_vec();
        if ws.len() != 4 || ws[1] != ci || ws[2] != 3 || ws[3] != 3 {
            return Err(Error::Dimension { op: "conv2d", lhs: vec![ci, h, w], rhs: ws });
        }
        let co = ws[0];
        if let Some(b) = bias {
            let blen = self.rank1("conv2d", b)?;
            if blen != co {
                return Err(Error::Dimension { op: "conv2d", lhs: vec![co], rhs: vec![blen] });
            }
        }
        let data = k::conv2d(
            self.nodes[x.0].value.data(),
            self.nodes[weight.0].value.data(),
            bias.map(|b| self.nodes[b.0].value.data()),
            ci,
            h,
            w,
            co,
            stride,
        );
        let (oh, ow) = (k::conv_out_extent(h, stride), k::conv_out_extent(w, stride));
        let mut inputs = vec![x, weight];
        if let Some(b) = bias {
            inputs.push(b);
        }
        self.push(Op::Conv2d { ci, h, w, co, stride }, &inputs, vec![co, oh, ow], data, "conv2d")
    }

    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.rank3("upsample_nearest2x", x)?;
        let data = k::upsample_nearest2x(self.nodes[x.0].value.data(), c, h, w);
        self.push(Op::Upsample2x { c, h, w }, &[x], vec![c, h * 2, w * 2], data, "upsample_nearest2x")
    }

    // ── losses ───────────────────────────────────────────────────

    /// Mean squared error over all elements -> scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("mse", a, b)?;
        let s = k::mse(self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        self.push(Op::Mse, &[a, b], vec![], vec![s], "mse")
    }

    /// Stabilized cosine similarity of two equal-length vectors -> scalar.
    pub fn cosine(&mut self, a: Var, b: Var, tau: E) -> Result<Var> {
        let la = self.rank1("cosine_similarity", a)?;
        let lb = self.rank1("cosine_similarity", b)?;
        if la != lb || la == 0 {
            return Err(Error::Dimension {
                op: "cosine_similarity",
                lhs: vec![la],
                rhs: vec![lb],
            });
        }
        let s = k::cosine(self.nodes[a.0].value.data(), self.nodes[b.0].value.data(), tau);
        self.push(Op::Cosine { tau }, &[a, b], vec![], vec![s], "cosine_similarity")
    }

    /// Cross-entropy of a rank-1 logit vector against a class index -> scalar.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.rank1("cross_entropy", logits)?;
        if target >= n {
            return Err(Error::Range {
                what: "cross_entropy target",
                got: target,
                expected: format!("< {n}"),
            });
        }
        let s = k::cross_entropy_logits(self.nodes[logits.0].value.data(), target);
        self.push(Op::CrossEntropy { target }, &[logits], vec![], vec![s], "cross_entropy")
    }

    // ── backward ─────────────────────────────────────────────────

    /// Reverse-replay the tape from a scalar loss, accumulating gradients
    /// into every `requires_grad` leaf that the loss depends on. Leaves not
    /// reachable from the loss are untouched.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lnode = &self.nodes[loss.0];
        if lnode.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lnode.value.shape()
            )));
        }
        if !lnode.requires_grad {
            // Loss does not depend on any trainable leaf: all gradients are
            // identically zero and the accumulators stay untouched.
            return Ok(());
        }

        let mut adjoint: Vec<Option<Vec<E>>> = vec![None; self.nodes.len()];
        adjoint[loss.0] = Some(vec![E::ONE]);

        for rec_idx in (0..self.records.len()).rev() {
            let (out, n_inputs) = {
                let r = &self.records[rec_idx];
                (r.out, r.inputs.len())
            };
            let Some(g) = adjoint[out].take() else {
                continue;
            };
            let contribs = self.vjp(rec_idx, &g)?;
            debug_assert_eq!(contribs.len(), n_inputs);
            for (slot, contrib) in contribs.into_iter().enumerate() {
                let Some(c) = contrib else { continue };
                let input_idx = self.records[rec_idx].inputs[slot];
                match &mut adjoint[input_idx] {
                    Some(acc) => {
                        for (a, v) in acc.iter_mut().zip(c.iter()) {
                            *a += *v;
                        }
                    }
                    None => adjoint[input_idx] = Some(c),
                }
            }
        }

        for (idx, adj) in adjoint.into_iter().enumerate() {
            let Some(adj) = adj else { continue };
            let node = &mut self.nodes[idx];
            if node.is_leaf && node.requires_grad {
                let g = node.grad.as_mut().expect("trainable leaf has accumulator");
                for (a, v) in g.iter_mut().zip(adj.iter()) {
                    if !v.is_finite() {
                        return Err(Error::NonFinite("gradient".into()));
                    }
                    *a += *v;
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of one record; `None` per input slot whose
    /// node does not require grad.
    fn vjp(&self, rec_idx: usize, g: &[E]) -> Result<Vec<Option<Vec<E>>>> {
        let rec = &self.records[rec_idx];
        let needs: Vec<bool> =
            rec.inputs.iter().map(|&i| self.nodes[i].requires_grad).collect();
        let input = |slot: usize| self.nodes[rec.inputs[slot]].value.data();
        let out_val = self.nodes[rec.out].value.data();

        let result: Vec<Option<Vec<E>>> = match &rec.op {
            Op::Add => vec![
                needs[0].then(|| g.to_vec()),
                needs[1].then(|| g.to_vec()),
            ],
            Op::Sub => vec![
                needs[0].then(|| g.to_vec()),
                needs[1].then(|| k::ew_scale(g, -E::ONE)),
            ],
            Op::Hadamard => vec![
                needs[0].then(|| k::ew_mul(g, input(1))),
                needs[1].then(|| k::ew_mul(g, input(0))),
            ],
            Op::Scale(c) => vec![needs[0].then(|| k::ew_scale(g, *c))],
            Op::Matmul { m, k: kk, n } => vec![
                needs[0].then(|| k::matmul_nt(g, input(1), *m, *n, *kk)),
                needs[1].then(|| k::matmul_tn(input(0), g, *m, *kk, *n)),
            ],
            Op::MatmulNT { m, k: kk, n } => vec![
                needs[0].then(|| k::matmul(g, input(1), *m, *n, *kk)),
                needs[1].then(|| k::matmul_tn(g, input(0), *m, *n, *kk)),
            ],
            Op::AddBiasRow { rows, cols } => vec![
                needs[0].then(|| g.to_vec()),
                needs[1].then(|| k::col_sums(g, *rows, *cols)),
            ],
            Op::AddChannel { hw } => vec![
                needs[0].then(|| g.to_vec()),
                needs[1].then(|| k::channel_sums(g, input(1).len(), *hw)),
            ],
            Op::MulChannel { hw } => vec![
                needs[0].then(|| k::mul_channel(g, input(1), *hw)),
                needs[1].then(|| k::channel_dot_sums(g, input(0), input(1).len(), *hw)),
            ],
            Op::Relu => vec![needs[0].then(|| k::relu_bwd(input(0), g))],
            Op::Silu => vec![needs[0].then(|| k::silu_bwd(input(0), g))],
            Op::Sigmoid => vec![needs[0].then(|| k::sigmoid_bwd(out_val, g))],
            Op::GroupNorm { groups, rstds } => {
                let shape = self.nodes[rec.out].value.shape();
                let (c, hw) = (shape[0], shape[1] * shape[2]);
                vec![needs[0].then(|| k::group_norm_bwd(g, out_val, rstds, c, hw, *groups))]
            }
            Op::SoftmaxRows { rows, cols } => {
                vec![needs[0].then(|| k::softmax_rows_bwd(g, out_val, *rows, *cols))]
            }
            Op::MeanRows { rows, cols } => vec![needs[0].then(|| {
                let inv = E::ONE / E::from_f64(*rows as f64);
                let mut dx = vec![E::ZERO; rows * cols];
                for i in 0..*rows {
                    for j in 0..*cols {
                        dx[i * cols + j] = g[j] * inv;
                    }
                }
                dx
            })],
            Op::SumAll => {
                vec![needs[0].then(|| vec![g[0]; input(0).len()])]
            }
            Op::MeanAll => vec![needs[0].then(|| {
                let inv = E::ONE / E::from_f64(input(0).len() as f64);
                vec![g[0] * inv; input(0).len()]
            })],
            Op::Conv2d { ci, h, w, co, stride } => {
                let mut out = vec![
                    needs[0].then(|| k::conv2d_bwd_input(g, input(1), *ci, *h, *w, *co, *stride)),
                    needs[1].then(|| k::conv2d_bwd_weight(g, input(0), *ci, *h, *w, *co, *stride)),
                ];
                if rec.inputs.len() == 3 {
                    let (oh, ow) =
                        (k::conv_out_extent(*h, *stride), k::conv_out_extent(*w, *stride));
                    out.push(needs[2].then(|| k::conv2d_bwd_bias(g, *co, oh, ow)));
                }
                out
            }
            Op::Upsample2x { c, h, w } => {
                vec![needs[0].then(|| k::upsample_nearest2x_bwd(g, *c, *h, *w))]
            }
            Op::Mse => vec![
                needs[0].then(|| k::mse_bwd_a(input(0), input(1), g[0])),
                needs[1].then(|| k::mse_bwd_a(input(1), input(0), g[0])),
            ],
            Op::Cosine { tau } => {
                let (da, db) = k::cosine_bwd(input(0), input(1), *tau, g[0]);
                vec![needs[0].then_some(da), needs[1].then_some(db)]
            }
            Op::CrossEntropy { target } => {
                vec![needs[0].then(|| k::cross_entropy_logits_bwd(input(0), *target, g[0]))]
            }
            Op::Reshape => vec![needs[0].then(|| g.to_vec())],
            Op::Transpose2d { rows, cols } => {
                // g has the transposed shape (cols, rows); transpose back.
                vec![needs[0].then(|| k::transpose(g, *cols, *rows))]
            }
            Op::Slice1d { start, full } => vec![needs[0].then(|| {
                let mut dx = vec![E::ZERO; *full];
                dx[*start..*start + g.len()].copy_from_slice(g);
                dx
            })],
        };
        Ok(result)
    }
}
