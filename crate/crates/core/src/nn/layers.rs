//! Layer forward/backward passes. All backwards are analytic and are
//! checked against central finite differences in the tests.

use super::{NnError, Scalar, Tensor};

fn conv_out_size(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Unfold `x` ([C,H,W]) into a `[C*k*k, H_out*W_out]` patch matrix.
fn im2col<S: Scalar>(
    x: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
) -> Vec<S> {
    let p = h_out * w_out;
    let mut col = vec![S::ZERO; c_in * k * k * p];
    for c in 0..c_in {
        let x_plane = &x[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..h_out {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = iy as usize * w;
                    let dst_row = oy * w_out;
                    for ox in 0..w_out {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[dst_row + ox] = x_plane[src_row + ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add a patch matrix back to input layout; adjoint of [`im2col`].
#[allow(clippy::too_many_arguments)]
fn col2im<S: Scalar>(
    col: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
) -> Vec<S> {
    let p = h_out * w_out;
    let mut x = vec![S::ZERO; c_in * h * w];
    for c in 0..c_in {
        let x_plane = &mut x[c * h * w..(c + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..h_out {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = oy * w_out;
                    let dst_row = iy as usize * w;
                    for ox in 0..w_out {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x_plane[dst_row + ix as usize] += src[src_row + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Cross-correlation of `x` ([C_in,H,W]) with `w` ([C_out,C_in,k,k]) plus
/// per-channel bias; zero padding, floor output sizing.
pub fn conv2d_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<S>, NnError> {
    let (c_in, h, win) = match x.shape() {
        [c, h, w] => (*c, *h, *w),
        s => {
            return Err(NnError::ShapeMismatch { op: "conv2d", detail: format!("input must be [C,H,W], got {s:?}") })
        }
    };
    let (c_out, wc_in, k) = match w.shape() {
        [co, ci, kh, kw] if kh == kw => (*co, *ci, *kh),
        s => {
            return Err(NnError::ShapeMismatch { op: "conv2d", detail: format!("weights must be [Co,Ci,k,k], got {s:?}") })
        }
    };
    if wc_in != c_in || b.shape() != [c_out] || h + 2 * pad < k || win + 2 * pad < k {
        return Err(NnError::ShapeMismatch {
            op: "conv2d",
            detail: format!("x {:?} w {:?} b {:?} stride {stride} pad {pad}", x.shape(), w.shape(), b.shape()),
        });
    }

    let h_out = conv_out_size(h, k, stride, pad);
    let w_out = conv_out_size(win, k, stride, pad);
    let p = h_out * w_out;
    let kk = c_in * k * k;

    let col = im2col(x.data(), c_in, h, win, k, stride, pad, h_out, w_out);
    let mut y = Tensor::zeros(&[c_out, h_out, w_out]);
    unsafe {
        S::gemm(
            c_out, kk, p,
            S::ONE,
            w.data().as_ptr(), kk as isize, 1,
            col.as_ptr(), p as isize, 1,
            S::ZERO,
            y.data_mut().as_mut_ptr(), p as isize, 1,
        );
    }
    for co in 0..c_out {
        let bias = b.data()[co];
        for v in y.data_mut()[co * p..(co + 1) * p].iter_mut() {
            *v += bias;
        }
    }
    Ok(y)
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weights, and bias.
pub fn conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>), NnError> {
    let (c_in, h, win) = match x.shape() {
        [c, h, w] => (*c, *h, *w),
        s => {
            return Err(NnError::ShapeMismatch { op: "conv2d_backward", detail: format!("input {s:?}") })
        }
    };
    let (c_out, _, k) = match w.shape() {
        [co, ci, kh, kw] if *ci == c_in && kh == kw => (*co, *ci, *kh),
        s => {
            return Err(NnError::ShapeMismatch { op: "conv2d_backward", detail: format!("weights {s:?}") })
        }
    };
    let h_out = conv_out_size(h, k, stride, pad);
    let w_out = conv_out_size(win, k, stride, pad);
    if dy.shape() != [c_out, h_out, w_out] {
        return Err(NnError::ShapeMismatch {
            op: "conv2d_backward",
            detail: format!("dy {:?}, expected [{c_out},{h_out},{w_out}]", dy.shape()),
        });
    }
    let p = h_out * w_out;
    let kk = c_in * k * k;

    let col = im2col(x.data(), c_in, h, win, k, stride, pad, h_out, w_out);

    // dw[Co,K] = dy[Co,P] * col^T[P,K]
    let mut dw = Tensor::zeros(&[c_out, c_in, k, k]);
    unsafe {
        S::gemm(
            c_out, p, kk,
            S::ONE,
            dy.data().as_ptr(), p as isize, 1,
            col.as_ptr(), 1, p as isize,
            S::ZERO,
            dw.data_mut().as_mut_ptr(), kk as isize, 1,
        );
    }

    // dcol[K,P] = w^T[K,Co] * dy[Co,P], then fold back to input layout
    let mut dcol = vec![S::ZERO; kk * p];
    unsafe {
        S::gemm(
            kk, c_out, p,
            S::ONE,
            w.data().as_ptr(), 1, kk as isize,
            dy.data().as_ptr(), p as isize, 1,
            S::ZERO,
            dcol.as_mut_ptr(), p as isize, 1,
        );
    }
    let dx = Tensor::from_vec(&[c_in, h, win], col2im(&dcol, c_in, h, win, k, stride, pad, h_out, w_out));

    let mut db = Tensor::zeros(&[c_out]);
    for co in 0..c_out {
        let mut s = S::ZERO;
        for v in &dy.data()[co * p..(co + 1) * p] {
            s += *v;
        }
        db.data_mut()[co] = s;
    }
    Ok((dx, dw, db))
}

/// Fully connected `y = W x + b` on a flat input.
pub fn linear_forward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
) -> Result<Tensor<S>, NnError> {
    let n_in = x.len();
    let (n_out, wn_in) = match w.shape() {
        [o, i] => (*o, *i),
        s => {
            return Err(NnError::ShapeMismatch { op: "linear", detail: format!("weights must be [Out,In], got {s:?}") })
        }
    };
    if wn_in != n_in || b.shape() != [n_out] {
        return Err(NnError::ShapeMismatch {
            op: "linear",
            detail: format!("x len {n_in}, w {:?}, b {:?}", w.shape(), b.shape()),
        });
    }
    let mut y = Tensor::zeros(&[n_out]);
    for o in 0..n_out {
        let row = &w.data()[o * n_in..(o + 1) * n_in];
        let mut acc = S::ZERO;
        for (wi, xi) in row.iter().zip(x.data().iter()) {
            acc += *wi * *xi;
        }
        y.data_mut()[o] = acc + b.data()[o];
    }
    Ok(y)
}

/// Gradients of [`linear_forward`] w.r.t. input, weights, and bias.
pub fn linear_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>), NnError> {
    let n_in = x.len();
    let n_out = dy.len();
    if w.shape() != [n_out, n_in] {
        return Err(NnError::ShapeMismatch {
            op: "linear_backward",
            detail: format!("w {:?} vs x len {n_in}, dy len {n_out}", w.shape()),
        });
    }
    let mut dx = Tensor::zeros(&[n_in]);
    let mut dw = Tensor::zeros(&[n_out, n_in]);
    for o in 0..n_out
    {
        let g = dy.data()[o];
        let row = &w.data()[o * n_in..(o + 1) * n_in];
        let drow = &mut dw.data_mut()[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            dx.data_mut()[i] += row[i] * g;
            drow[i] = x.data()[i] * g;
        }
    }
    Ok((dx, dw, dy.clone()))
}

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = v.maximum(S::ZERO);
    }
    y
}

/// `dx = dy` where the forward input was positive, zero elsewhere.
pub fn relu_backward<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    debug_assert_eq!(x.shape(), dy.shape());
    let mut dx = dy.clone();
    for (g, v) in dx.data_mut().iter_mut().zip(x.data().iter()) {
        if *v <= S::ZERO {
            *g = S::ZERO;
        }
    }
    dx
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::ZERO {
        S::ONE / (S::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::ONE + e)
    }
}

/// Derivative through a sigmoid given its forward output `s`.
pub fn sigmoid_backward<S: Scalar>(s: S, dy: S) -> S {
    dy * s * (S::ONE - s)
}

/// Shift-invariant softmax with max subtraction.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let mut m = logits[0];
    for &v in &logits[1..] {
        m = m.maximum(v);
    }
    let mut out: Vec<S> = logits.iter().map(|&v| (v - m).exp()).collect();
    let mut z = S::ZERO;
    for &v in &out {
        z += v;
    }
    for v in out.iter_mut() {
        *v = *v / z;
    }
    out
}

/// Backward through softmax: `dx = p .* (dy - dot(p, dy))`.
pub fn softmax_backward<S: Scalar>(probs: &[S], dy: &[S]) -> Vec<S> {
    debug_assert_eq!(probs.len(), dy.len());
    let mut dot = S::ZERO;
    for (p, g) in probs.iter().zip(dy.iter()) {
        dot += *p * *g;
    }
    probs.iter().zip(dy.iter()).map(|(&p, &g)| p * (g - dot)).collect()
}

/// Mean over the spatial plane per channel: `[C,H,W] -> [C]`.
pub fn global_avg_pool<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let [c, h, w] = *x.shape() else { panic!("gap expects [C,H,W], got {:?}", x.shape()) };
    let p = h * w;
    let inv = S::from_f64(1.0 / p as f64);
    let mut y = Tensor::zeros(&[c]);
    for ci in 0..c {
        let mut acc = S::ZERO;
        for v in &x.data()[ci * p..(ci + 1) * p] {
            acc += *v;
        }
        y.data_mut()[ci] = acc * inv;
    }
    y
}

pub fn global_avg_pool_backward<S: Scalar>(x_shape: &[usize], dy: &Tensor<S>) -> Tensor<S> {
    let [c, h, w] = *x_shape else { panic!("gap expects [C,H,W]") };
    let p = h * w;
    let inv = S::from_f64(1.0 / p as f64);
    let mut dx = Tensor::zeros(&[c, h, w]);
    for ci in 0..c {
        let g = dy.data()[ci] * inv;
        for v in dx.data_mut()[ci * p..(ci + 1) * p].iter_mut() {
            *v = g;
        }
    }
    dx
}

/// Concatenate along the channel axis: `[Ca,H,W] + [Cb,H,W] -> [Ca+Cb,H,W]`.
pub fn channel_concat<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, NnError> {
    let ([ca, ha, wa], [cb, hb, wb]) = (dims3(a, "channel_concat")?, dims3(b, "channel_concat")?);
    if (ha, wa) != (hb, wb) {
        return Err(NnError::ShapeMismatch {
            op: "channel_concat",
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    let mut data = Vec::with_capacity((ca + cb) * ha * wa);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Ok(Tensor::from_vec(&[ca + cb, ha, wa], data))
}

/// Split the concat gradient back into both branches.
pub fn channel_concat_backward<S: Scalar>(dy: &Tensor<S>, ca: usize) -> (Tensor<S>, Tensor<S>) {
    let [c, h, w] = *dy.shape() else { panic!("concat backward expects [C,H,W]") };
    let split = ca * h * w;
    (
        Tensor::from_vec(&[ca, h, w], dy.data()[..split].to_vec()),
        Tensor::from_vec(&[c - ca, h, w], dy.data()[split..].to_vec()),
    )
}

/// Elementwise skip connection `a + b`; the backward is the identity into
/// both branches, so no dedicated backward function exists.
pub fn residual_add<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>, NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch {
            op: "residual_add",
            detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    let mut y = a.clone();
    y.add_assign(b);
    Ok(y)
}

fn dims3<S: Scalar>(t: &Tensor<S>, op: &'static str) -> Result<[usize; 3], NnError> {
    match t.shape() {
        [a, b, c] => Ok([*a, *b, *c]),
        s => Err(NnError::ShapeMismatch { op, detail: format!("expected [C,H,W], got {s:?}") }),
    }
}
