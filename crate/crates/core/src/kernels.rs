//! Numeric kernels: the forward and adjoint computations behind every tape
//! operation, plus the plain (no-grad) math used by frozen encoders.
//!
//! Layout conventions: all buffers are row-major. Matrices are `(rows, cols)`,
//! feature maps are `(channels, height, width)`. Reductions to a single value
//! always accumulate in row-major order so results are reproducible; the
//! parallel paths only split across independent output elements.

use crate::exec::{map_indexed, map_tasks, Exec};
use crate::scalar::Scalar;

// ── elementwise ──────────────────────────────────────────────────────

pub fn ew_add<E: Scalar>(a: &[E], b: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), a.len(), |i| a[i] + b[i])
}

pub fn ew_sub<E: Scalar>(a: &[E], b: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), a.len(), |i| a[i] - b[i])
}

pub fn ew_mul<E: Scalar>(a: &[E], b: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), a.len(), |i| a[i] * b[i])
}

pub fn ew_scale<E: Scalar>(a: &[E], c: E) -> Vec<E> {
    map_indexed(Exec::default(), a.len(), |i| a[i] * c)
}

pub fn relu<E: Scalar>(x: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), x.len(), |i| {
        if x[i] > E::ZERO {
            x[i]
        } else {
            E::ZERO
        }
    })
}

/// d(relu)/dx with upstream gradient `g`.
pub fn relu_bwd<E: Scalar>(x: &[E], g: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), x.len(), |i| {
        if x[i] > E::ZERO {
            g[i]
        } else {
            E::ZERO
        }
    })
}

pub fn sigmoid_one<E: Scalar>(x: E) -> E {
    E::ONE / (E::ONE + (-x).exp())
}

pub fn sigmoid<E: Scalar>(x: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), x.len(), |i| sigmoid_one(x[i]))
}

/// Sigmoid adjoint from the forward *output* `y`.
pub fn sigmoid_bwd<E: Scalar>(y: &[E], g: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), y.len(), |i| g[i] * y[i] * (E::ONE - y[i]))
}

pub fn silu<E: Scalar>(x: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), x.len(), |i| x[i] * sigmoid_one(x[i]))
}

pub fn silu_bwd<E: Scalar>(x: &[E], g: &[E]) -> Vec<E> {
    map_indexed(Exec::default(), x.len(), |i| {
        let s = sigmoid_one(x[i]);
        g[i] * (s + x[i] * s * (E::ONE - s))
    })
}

// ── reductions ───────────────────────────────────────────────────────

/// Row-major sequential sum; the reduction order all determinism rests on.
pub fn sum_all<E: Scalar>(x: &[E]) -> E {
    let mut acc = E::ZERO;
    for v in x {
        acc += *v;
    }
    acc
}

pub fn mean_all<E: Scalar>(x: &[E]) -> E {
    sum_all(x) / E::from_f64(x.len() as f64)
}

pub fn dot<E: Scalar>(a: &[E], b: &[E]) -> E {
    let mut acc = E::ZERO;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Column means of a `(rows, cols)` matrix.
pub fn mean_rows<E: Scalar>(x: &[E], rows: usize, cols: usize) -> Vec<E> {
    let inv = E::ONE / E::from_f64(rows as f64);
    map_indexed(Exec::default(), cols, |j| {
        let mut acc = E::ZERO;
        for i in 0..rows {
            acc += x[i * cols + j];
        }
        acc * inv
    })
}

// ── matrix products ──────────────────────────────────────────────────

/// `(m,k) x (k,n) -> (m,n)`.
///
/// Row-saxpy form: each output element still accumulates over `p` in
/// ascending order, so results match the naive triple loop bit-for-bit.
pub fn matmul<E: Scalar>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    matmul_exec(Exec::default(), a, b, m, k, n)
}

pub fn matmul_exec<E: Scalar>(exec: Exec, a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let rows = map_tasks(exec, m, |i| {
        let mut row = vec![E::ZERO; n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (r, bv) in row.iter_mut().zip(brow) {
                *r += av * *bv;
            }
        }
        row
    });
    rows.concat()
}

/// `(m,k) x (n,k)^T -> (m,n)`; the natural shape for `x * W^T` linear layers.
pub fn matmul_nt<E: Scalar>(a: &[E], b: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    map_indexed(Exec::default(), m * n, |idx| {
        let (i, j) = (idx / n, idx % n);
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[j * k..(j + 1) * k];
        let mut acc = E::ZERO;
        for p in 0..k {
            acc += arow[p] * brow[p];
        }
        acc
    })
}

/// `(m,k)^T x (m,n) -> (k,n)`; the weight-gradient product.
pub fn matmul_tn<E: Scalar>(a: &[E], g: &[E], m: usize, k: usize, n: usize) -> Vec<E> {
    let rows = map_tasks(Exec::default(), k, |i| {
        let mut row = vec![E::ZERO; n];
        for p in 0..m {
            let av = a[p * k + i];
            let grow = &g[p * n..(p + 1) * n];
            for (r, gv) in row.iter_mut().zip(grow) {
                *r += av * *gv;
            }
        }
        row
    });
    rows.concat()
}

/// `(rows,cols) -> (cols,rows)` transpose.
pub fn transpose<E: Scalar>(x: &[E], rows: usize, cols: usize) -> Vec<E> {
    map_indexed(Exec::default(), rows * cols, |idx| {
        let (j, i) = (idx / rows, idx % rows);
        x[i * cols + j]
    })
}

// ── broadcasts over rows and channels ───────────────────────────────

/// `(rows, cols) + (cols)` broadcast add.
pub fn add_bias_row<E: Scalar>(x: &[E], bias: &[E], rows: usize, cols: usize) -> Vec<E> {
    map_indexed(Exec::default(), rows * cols, |idx| x[idx] + bias[idx % cols])
}

/// Bias gradient for [`add_bias_row`]: column sums of `g`.
pub fn col_sums<E: Scalar>(g: &[E], rows: usize, cols: usize) -> Vec<E> {
    map_indexed(Exec::default(), cols, |j| {
        let mut acc = E::ZERO;
        for i in 0..rows {
            acc += g[i * cols + j];
        }
        acc
    })
}

/// `(c,h,w) + (c)` broadcast add over the spatial extent.
pub fn add_channel<E: Scalar>(x: &[E], bias: &[E], hw: usize) -> Vec<E> {
    map_indexed(Exec::default(), x.len(), |idx| x[idx] + bias[idx / hw])
}

/// `(c,h,w) * (c)` broadcast multiply over the spatial extent.
pub fn mul_channel<E: Scalar>(x: &[E], gate: &[E], hw: usize) -> Vec<E> {
    map_indexed(Exec::default(), x.len(), |idx| x[idx] * gate[idx / hw])
}

/// Per-channel sums of `g` over the spatial extent.
pub fn channel_sums<E: Scalar>(g: &[E], channels: usize, hw: usize) -> Vec<E> {
    map_indexed(Exec::default(), channels, |c| {
        let mut acc = E::ZERO;
        for i in 0..hw {
            acc += g[c * hw + i];
        }
        acc
    })
}

/// Per-channel sums of `g * x` over the spatial extent (gate gradient).
pub fn channel_dot_sums<E: Scalar>(g: &[E], x: &[E], channels: usize, hw: usize) -> Vec<E> {
    map_indexed(Exec::default(), channels, |c| {
        let mut acc = E::ZERO;
        for i in 0..hw {
            acc += g[c * hw + i] * x[c * hw + i];
        }
        acc
    })
}

// ── 3x3 convolution, zero padding 1, stride 1 or 2 ─────────────────

pub fn conv_out_extent(extent: usize, stride: usize) -> usize {
    (extent - 1) / stride + 1
}

/// Forward convolution: input `(ci,h,w)`, weight `(co,ci,3,3)`, optional
/// per-output-channel bias, output `(co, oh, ow)`.
pub fn conv2d<E: Scalar>(
    x: &[E],
    w: &[E],
    bias: Option<&[E]>,
    ci: usize,
    h: usize,
    wd: usize,
    co: usize,
    stride: usize,
) -> Vec<E> {
    conv2d_exec(Exec::default(), x, w, bias, ci, h, wd, co, stride)
}

/// Valid output range along one axis for a kernel offset `k` in 0..3 with
/// zero padding 1: indices `o` with `0 <= o*stride + k - 1 < extent`,
/// returned as `lo..hi`.
fn tap_range(extent: usize, stride: usize, k: usize) -> (usize, usize) {
    let out_extent = conv_out_extent(extent, stride);
    if k > extent {
        return (0, 0);
    }
    let lo = if k == 0 { 1usize.div_ceil(stride) } else { 0 };
    let hi = ((extent - k) / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_exec<E: Scalar>(
    exec: Exec,
    x: &[E],
    w: &[E],
    bias: Option<&[E]>,
    ci: usize,
    h: usize,
    wd: usize,
    co: usize,
    stride: usize,
) -> Vec<E> {
    let (oh, ow) = (conv_out_extent(h, stride), conv_out_extent(wd, stride));
    // One output plane per task; per-element accumulation runs over
    // (ic, ky, kx) in ascending order, matching the naive formulation.
    let planes = map_tasks(exec, co, |oc| {
        let init = match bias {
            Some(b) => b[oc],
            None => E::ZERO,
        };
        let mut plane = vec![init; oh * ow];
        for ic in 0..ci {
            let xplane = &x[ic * h * wd..(ic + 1) * h * wd];
            for ky in 0..3 {
                let (oy_lo, oy_hi) = tap_range(h, stride, ky);
                for kx in 0..3 {
                    let (ox_lo, ox_hi) = tap_range(wd, stride, kx);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let wv = w[((oc * ci + ic) * 3 + ky) * 3 + kx];
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - 1;
                        let xrow = &xplane[iy * wd..(iy + 1) * wd];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            // contiguous tap: vectorizable
                            let xseg = &xrow[ox_lo + kx - 1..ox_hi + kx - 1];
                            for (o, xv) in orow[ox_lo..ox_hi].iter_mut().zip(xseg) {
                                *o += wv * *xv;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                orow[ox] += wv * xrow[ox * stride + kx - 1];
                            }
                        }
                    }
                }
            }
        }
        plane
    });
    planes.concat()
}

/// Input gradient. Parallel over input channels; contributions to each
/// input element arrive in ascending (oc, ky, kx) order, the same sequence
/// as an element-wise gather.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd_input<E: Scalar>(
    g: &[E],
    w: &[E],
    ci: usize,
    h: usize,
    wd: usize,
    co: usize,
    stride: usize,
) -> Vec<E> {
    let (oh, ow) = (conv_out_extent(h, stride), conv_out_extent(wd, stride));
    let planes = map_tasks(Exec::default(), ci, |ic| {
        let mut plane = vec![E::ZERO; h * wd];
        for oc in 0..co {
            let gplane = &g[oc * oh * ow..(oc + 1) * oh * ow];
            for ky in 0..3 {
                let (oy_lo, oy_hi) = tap_range(h, stride, ky);
                for kx in 0..3 {
                    let (ox_lo, ox_hi) = tap_range(wd, stride, kx);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let wv = w[((oc * ci + ic) * 3 + ky) * 3 + kx];
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - 1;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        let drow = &mut plane[iy * wd..(iy + 1) * wd];
                        if stride == 1 {
                            let dseg = &mut drow[ox_lo + kx - 1..ox_hi + kx - 1];
                            for (d, gv) in dseg.iter_mut().zip(&grow[ox_lo..ox_hi]) {
                                *d += wv * *gv;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                drow[ox * stride + kx - 1] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
        plane
    });
    planes.concat()
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_bwd_weight<E: Scalar>(
    g: &[E],
    x: &[E],
    ci: usize,
    h: usize,
    wd: usize,
    co: usize,
    stride: usize,
) -> Vec<E> {
    let (oh, ow) = (conv_out_extent(h, stride), conv_out_extent(wd, stride));
    map_indexed(Exec::default(), co * ci * 9, |idx| {
        let oc = idx / (ci * 9);
        let ic = (idx / 9) % ci;
        let ky = (idx / 3) % 3;
        let kx = idx % 3;
        let (oy_lo, oy_hi) = tap_range(h, stride, ky);
        let (ox_lo, ox_hi) = tap_range(wd, stride, kx);
        let gplane = &g[oc * oh * ow..(oc + 1) * oh * ow];
        let xplane = &x[ic * h * wd..(ic + 1) * h * wd];
        let mut acc = E::ZERO;
        for oy in oy_lo..oy_hi {
            let iy = oy * stride + ky - 1;
            let grow = &gplane[oy * ow..(oy + 1) * ow];
            let xrow = &xplane[iy * wd..(iy + 1) * wd];
            if stride == 1 && ox_lo < ox_hi {
                let xseg = &xrow[ox_lo + kx - 1..ox_hi + kx - 1];
                for (gv, xv) in grow[ox_lo..ox_hi].iter().zip(xseg) {
                    acc += *gv * *xv;
                }
            } else {
                for ox in ox_lo..ox_hi {
                    acc += grow[ox] * xrow[ox * stride + kx - 1];
                }
            }
        }
        acc
    })
}

pub fn conv2d_bwd_bias<E: Scalar>(g: &[E], co: usize, oh: usize, ow: usize) -> Vec<E> {
    channel_sums(g, co, oh * ow)
}

// ── nearest-neighbour 2x upsampling ─────────────────────────────────

pub fn upsample_nearest2x<E: Scalar>(x: &[E], c: usize, h: usize, w: usize) -> Vec<E> {
    let (oh, ow) = (h * 2, w * 2);
    map_indexed(Exec::default(), c * oh * ow, |idx| {
        let ch = idx / (oh * ow);
        let oy = (idx / ow) % oh;
        let ox = idx % ow;
        x[(ch * h + oy / 2) * w + ox / 2]
    })
}

pub fn upsample_nearest2x_bwd<E: Scalar>(g: &[E], c: usize, h: usize, w: usize) -> Vec<E> {
    let (oh, ow) = (h * 2, w * 2);
    map_indexed(Exec::default(), c * h * w, |idx| {
        let ch = idx / (h * w);
        let iy = (idx / w) % h;
        let ix = idx % w;
        let mut acc = E::ZERO;
        for dy in 0..2 {
            for dx in 0..2 {
                acc += g[(ch * oh + iy * 2 + dy) * ow + ix * 2 + dx];
            }
        }
        acc
    })
}

// ── group normalization (affine-free; scale/shift are separate ops) ─

pub struct GroupNormOut<E> {
    pub y: Vec<E>,
    pub means: Vec<E>,
    pub rstds: Vec<E>,
}

/// Normalize `(c,h,w)` per channel group to zero mean / unit variance.
pub fn group_norm<E: Scalar>(x: &[E], c: usize, hw: usize, groups: usize, eps: E) -> GroupNormOut<E> {
    assert!(c % groups == 0, "channels {c} not divisible by groups {groups}");
    let gsize = (c / groups) * hw;
    let mut means = Vec::with_capacity(groups);
    let mut rstds = Vec::with_capacity(groups);
    for g in 0..groups {
        let base = g * gsize;
        let mut acc = E::ZERO;
        for i in 0..gsize {
            acc += x[base + i];
        }
        let mean = acc / E::from_f64(gsize as f64);
        let mut var = E::ZERO;
        for i in 0..gsize {
            let d = x[base + i] - mean;
            var += d * d;
        }
        var = var / E::from_f64(gsize as f64);
        means.push(mean);
        rstds.push(E::ONE / (var + eps).sqrt());
    }
    let y = map_indexed(Exec::default(), c * hw, |idx| {
        let g = idx / gsize;
        (x[idx] - means[g]) * rstds[g]
    });
    GroupNormOut { y, means, rstds }
}

/// Group-norm adjoint: `dx = rstd * (g - mean(g) - y * mean(g*y))` per group.
pub fn group_norm_bwd<E: Scalar>(
    g: &[E],
    y: &[E],
    rstds: &[E],
    c: usize,
    hw: usize,
    groups: usize,
) -> Vec<E> {
    let gsize = (c / groups) * hw;
    let inv_m = E::ONE / E::from_f64(gsize as f64);
    let mut mean_g = Vec::with_capacity(groups);
    let mut mean_gy = Vec::with_capacity(groups);
    for grp in 0..groups {
        let base = grp * gsize;
        let mut sg = E::ZERO;
        let mut sgy = E::ZERO;
        for i in 0..gsize {
            sg += g[base + i];
            sgy += g[base + i] * y[base + i];
        }
        mean_g.push(sg * inv_m);
        mean_gy.push(sgy * inv_m);
    }
    map_indexed(Exec::default(), c * hw, |idx| {
        let grp = idx / gsize;
        rstds[grp] * (g[idx] - mean_g[grp] - y[idx] * mean_gy[grp])
    })
}

// ── softmax over matrix rows ─────────────────────────────────────────

pub fn softmax_rows<E: Scalar>(x: &[E], rows: usize, cols: usize) -> Vec<E> {
    let mut out = vec![E::ZERO; rows * cols];
    let row_out = map_indexed(Exec::default(), rows, |i| {
        let row = &x[i * cols..(i + 1) * cols];
        let mut m = row[0];
        for v in row {
            m = m.max(*v);
        }
        let mut exps = Vec::with_capacity(cols);
        let mut s = E::ZERO;
        for v in row {
            let e = (*v - m).exp();
            exps.push(e);
            s += e;
        }
        let inv = E::ONE / s;
        exps.iter_mut().for_each(|e| *e *= inv);
        exps
    });
    for (i, r) in row_out.into_iter().enumerate() {
        out[i * cols..(i + 1) * cols].copy_from_slice(&r);
    }
    out
}

/// Softmax adjoint from the forward output `y`: `dx = y * (g - sum(g*y))` per row.
pub fn softmax_rows_bwd<E: Scalar>(g: &[E], y: &[E], rows: usize, cols: usize) -> Vec<E> {
    let mut dots = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut acc = E::ZERO;
        for j in 0..cols {
            acc += g[i * cols + j] * y[i * cols + j];
        }
        dots.push(acc);
    }
    map_indexed(Exec::default(), rows * cols, |idx| {
        let i = idx / cols;
        y[idx] * (g[idx] - dots[i])
    })
}

// ── losses ───────────────────────────────────────────────────────────

/// Mean squared error over all elements.
pub fn mse<E: Scalar>(a: &[E], b: &[E]) -> E {
    let mut acc = E::ZERO;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc / E::from_f64(a.len() as f64)
}

/// d(mse)/da scaled by upstream `g`; db is the negation.
pub fn mse_bwd_a<E: Scalar>(a: &[E], b: &[E], g: E) -> Vec<E> {
    let scale = g * E::from_f64(2.0) / E::from_f64(a.len() as f64);
    map_indexed(Exec::default(), a.len(), |i| (a[i] - b[i]) * scale)
}

/// Stabilized cosine similarity `a.b / (sqrt(|a|^2 |b|^2) + tau)`.
///
/// The denominator is `sqrt(na * nb)` rather than `sqrt(na) * sqrt(nb)`: with
/// a correctly rounded sqrt this makes `cosine(v, v)` evaluate to exactly 1
/// whenever tau is absorbed, and both all-zero vectors yield 0 by convention.
pub fn cosine<E: Scalar>(a: &[E], b: &[E], tau: E) -> E {
    let (d, na, nb) = cosine_parts(a, b);
    let q = (na * nb).sqrt();
    d / (q + tau)
}

pub fn cosine_parts<E: Scalar>(a: &[E], b: &[E]) -> (E, E, E) {
    let mut d = E::ZERO;
    let mut na = E::ZERO;
    let mut nb = E::ZERO;
    for i in 0..a.len() {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    (d, na, nb)
}

/// Cosine adjoints `(da, db)` scaled by upstream `g`. Zero-vector inputs get
/// zero gradients (the forward value is the constant 0 by convention there).
pub fn cosine_bwd<E: Scalar>(a: &[E], b: &[E], tau: E, g: E) -> (Vec<E>, Vec<E>) {
    let (d, na, nb) = cosine_parts(a, b);
    let q = (na * nb).sqrt();
    if q == E::ZERO {
        return (vec![E::ZERO; a.len()], vec![E::ZERO; b.len()]);
    }
    let denom = q + tau;
    let denom2 = denom * denom;
    let da = map_indexed(Exec::default(), a.len(), |i| {
        g * (b[i] / denom - d * nb * a[i] / (q * denom2))
    });
    let db = map_indexed(Exec::default(), b.len(), |i| {
        g * (a[i] / denom - d * na * b[i] / (q * denom2))
    });
    (da, db)
}

/// Cross-entropy of a logit vector against a class index:
/// `logsumexp(x) - x[target]`.
pub fn cross_entropy_logits<E: Scalar>(x: &[E], target: usize) -> E {
    let mut m = x[0];
    for v in x {
        m = m.max(*v);
    }
    let mut s = E::ZERO;
    for v in x {
        s += (*v - m).exp();
    }
    m + ln(s) - x[target]
}

pub fn cross_entropy_logits_bwd<E: Scalar>(x: &[E], target: usize, g: E) -> Vec<E> {
    let mut m = x[0];
    for v in x {
        m = m.max(*v);
    }
    let mut s = E::ZERO;
    for v in x {
        s += (*v - m).exp();
    }
    let inv = E::ONE / s;
    map_indexed(Exec::default(), x.len(), |i| {
        let p = (x[i] - m).exp() * inv;
        if i == target {
            g * (p - E::ONE)
        } else {
            g * p
        }
    })
}

fn ln<E: Scalar>(x: E) -> E {
    E::from_f64(x.to_f64().ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;

    #[test]
    fn matmul_hand_case() {
        // [[1,2],[3,4]] x [[1],[1]] = [[3],[7]]
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [1.0f32, 1.0];
        assert_eq!(matmul(&a, &b, 2, 2, 1), vec![3.0, 7.0]);
    }

    #[test]
    fn matmul_identity() {
        let a = [1.5f32, -2.0, 0.25, 3.0, 7.0, -1.0];
        let eye = [1.0f32, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(matmul(&a, &eye, 2, 3, 3), a.to_vec());
    }

    #[test]
    fn conv_identity_kernel_preserves_input() {
        // center-1 kernel, stride 1: output equals input
        let x: Vec<f32> = (0..25).map(|i| i as f32 * 0.5 - 3.0).collect();
        let mut w = vec![0.0f32; 9];
        w[4] = 1.0;
        let y = conv2d(&x, &w, None, 1, 5, 5, 1, 1);
        assert_eq!(y, x);
    }

    #[test]
    fn conv_seq_par_bitwise_equal() {
        let x: Vec<f32> = (0..3 * 16 * 16).map(|i| ((i * 37) % 101) as f32 * 0.013 - 0.5).collect();
        let w: Vec<f32> = (0..8 * 3 * 9).map(|i| ((i * 11) % 61) as f32 * 0.021 - 0.6).collect();
        let b: Vec<f32> = (0..8).map(|i| i as f32 * 0.1).collect();
        for stride in [1usize, 2] {
            let seq = conv2d_exec(Exec::Seq, &x, &w, Some(&b), 3, 16, 16, 8, stride);
            let par = conv2d_exec(Exec::Par, &x, &w, Some(&b), 3, 16, 16, 8, stride);
            assert_eq!(seq, par);
        }
    }

    #[test]
    fn softmax_rows_normalize() {
        let x = [0.0f32, 1.0, 2.0, -1.0, 0.5, 0.25];
        let y = softmax_rows(&x, 2, 3);
        for row in y.chunks(3) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn cosine_conventions() {
        let tau = 1e-8f32;
        assert_eq!(cosine(&[1.0f32, 0.0], &[0.0, 1.0], tau), 0.0);
        let v = [0.8f32, 1.3, -0.4];
        assert_eq!(cosine(&v, &v, tau), 1.0);
        // positive scaling invariance (within float tolerance)
        let w = [1.6f32, 2.6, -0.8];
        assert!((cosine(&v, &w, tau) - 1.0).abs() < 1e-6);
        // both all-zero: 0 by convention
        assert_eq!(cosine(&[0.0f32; 3], &[0.0f32; 3], tau), 0.0);
    }

    #[test]
    fn mse_hand_case() {
        assert_eq!(mse(&[0.0f32, 0.0], &[1.0, 1.0]), 1.0);
        let a = [0.3f32, -0.7, 2.0];
        assert_eq!(mse(&a, &a), 0.0);
    }

    #[test]
    fn group_norm_zero_mean_unit_var() {
        let x: Vec<f32> = (0..32).map(|i| (i as f32).sin() * 3.0 + 1.0).collect();
        let out = group_norm(&x, 4, 8, 2, 1e-5);
        // each group: 2 channels x 8 = 16 elements
        for g in 0..2 {
            let slice = &out.y[g * 16..(g + 1) * 16];
            let mean: f32 = slice.iter().sum::<f32>() / 16.0;
            let var: f32 = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 16.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn upsample_then_downgrad_counts_four() {
        let x = [1.0f32, 2.0, 3.0, 4.0];
        let y = upsample_nearest2x(&x, 1, 2, 2);
        assert_eq!(y.len(), 16);
        assert_eq!(y[0], 1.0);
        assert_eq!(y[2], 2.0); // row 0: [1,1,2,2]
        assert_eq!(y[10], 4.0); // row 2: [3,3,4,4]
        let g = vec![1.0f32; 16];
        let dx = upsample_nearest2x_bwd(&g, 1, 2, 2);
        assert_eq!(dx, vec![4.0; 4]);
    }

    #[test]
    fn cross_entropy_matches_manual() {
        let x = [0.2f32, -1.0, 0.7];
        let loss = cross_entropy_logits(&x, 2);
        let s: f32 = x.iter().map(|v| v.exp()).sum();
        let manual = s.ln() - x[2];
        assert!((loss - manual).abs() < 1e-6);
    }
}
