//! 2D convolution (im2col + GEMM) and the cross-channel 3D convolution.
//!
//! All convolutions use cross-correlation orientation (no kernel flip) and
//! zero padding. Under [`Padding::Same`] the kernel is odd-sided, padded by
//! `(k−1)/2` on every side, and the output side is `ceil(in / stride)`.

use super::scalar::{gemm, Mat};
use super::{NetError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_planes: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        in_planes: usize,
        in_h: usize,
        in_w: usize,
        (kh, kw): (usize, usize),
        stride: usize,
        padding: Padding,
    ) -> Result<Self, NetError> {
        if stride == 0 || kh == 0 || kw == 0 || in_h == 0 || in_w == 0 {
            return Err(NetError::Shape(format!(
                "degenerate convolution: input {in_h}x{in_w}, kernel {kh}x{kw}, stride {stride}"
            )));
        }
        let (pad_h, pad_w, out_h, out_w) = match padding {
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(NetError::Shape(format!(
                        "same padding needs an odd kernel, got {kh}x{kw}"
                    )));
                }
                (
                    (kh - 1) / 2,
                    (kw - 1) / 2,
                    in_h.div_ceil(stride),
                    in_w.div_ceil(stride),
                )
            }
            Padding::Valid => {
                if kh > in_h || kw > in_w {
                    return Err(NetError::Shape(format!(
                        "kernel {kh}x{kw} larger than input {in_h}x{in_w}"
                    )));
                }
                (0, 0, (in_h - kh) / stride + 1, (in_w - kw) / stride + 1)
            }
        };
        Ok(ConvGeometry {
            in_planes,
            in_h,
            in_w,
            kh,
            kw,
            stride,
            pad_h,
            pad_w,
            out_h,
            out_w,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.in_planes * self.kh * self.kw
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_planes * self.in_h * self.in_w
    }
}

/// Unfolds `input` (`[planes][h][w]`) into `cols`
/// (`[plane·kh·kw][out_h·out_w]`).
pub(crate) fn im2col<T: Real>(g: &ConvGeometry, input: &[T], cols: &mut [T]) {
    debug_assert_eq!(input.len(), g.in_len());
    debug_assert_eq!(cols.len(), g.col_rows() * g.out_positions());
    let npos = g.out_positions();
    let mut row = 0;
    for p in 0..g.in_planes {
        let plane = &input[p * g.in_h * g.in_w..(p + 1) * g.in_h * g.in_w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let dst = &mut cols[row * npos..(row + 1) * npos];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + u) as isize - g.pad_h as isize;
                    let seg = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, d) in seg.iter_mut().enumerate() {
                        let ix = (ox * g.stride + v) as isize - g.pad_w as isize;
                        *d = if ix < 0 || ix >= g.in_w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back, accumulating into `grad_in`.
pub(crate) fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], grad_in: &mut [T]) {
    debug_assert_eq!(grad_in.len(), g.in_len());
    let npos = g.out_positions();
    let mut row = 0;
    for p in 0..g.in_planes {
        let plane = &mut grad_in[p * g.in_h * g.in_w..(p + 1) * g.in_h * g.in_w];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let src = &cols[row * npos..(row + 1) * npos];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + u) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + v) as isize - g.pad_w as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Linear part of a convolution layer on an already unfolded input:
/// `out[q] = W[q]·cols + b[q]`.
pub(crate) fn conv_forward_cols<T: Real>(
    g: &ConvGeometry,
    weights: &[T],
    bias: &[T],
    cols: &[T],
    out: &mut [T],
) {
    let q = bias.len();
    let npos = g.out_positions();
    for (o, &b) in out.chunks_exact_mut(npos).zip(bias) {
        o.fill(b);
    }
    gemm(
        Mat::new(weights, q, g.col_rows()),
        Mat::new(cols, g.col_rows(), npos),
        T::one(),
        out,
    );
}

/// Accumulates weight/bias gradients and, if requested, the input gradient.
pub(crate) fn conv_backward_cols<T: Real>(
    g: &ConvGeometry,
    weights: &[T],
    cols: &[T],
    grad_out: &[T],
    dw: &mut [T],
    db: &mut [T],
    grad_in: Option<&mut [T]>,
) {
    let q = db.len();
    let npos = g.out_positions();
    let rows = g.col_rows();
    for (d, go) in db.iter_mut().zip(grad_out.chunks_exact(npos)) {
        *d += go.iter().copied().sum::<T>();
    }
    gemm(
        Mat::new(grad_out, q, npos),
        Mat::new(cols, rows, npos).t(),
        T::one(),
        dw,
    );
    if let Some(grad_in) = grad_in {
        let mut dcols = vec![T::zero(); rows * npos];
        gemm(
            Mat::new(weights, q, rows).t(),
            Mat::new(grad_out, q, npos),
            T::zero(),
            &mut dcols,
        );
        col2im(g, &dcols, grad_in);
    }
}

/// `X_q = Σ_p W_pq ∗ X_p + b_q` for `input: [P][H][W]`,
/// `weights: [Q][P][kh][kw]`, `bias: [Q]`. Returns `[Q][H'][W']`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>, NetError> {
    let &[p, h, w] = input.shape() else {
        return Err(NetError::Shape(format!(
            "conv2d input must be [P][H][W], got {:?}",
            input.shape()
        )));
    };
    let &[q, wp, kh, kw] = weights.shape() else {
        return Err(NetError::Shape(format!(
            "conv2d weights must be [Q][P][kh][kw], got {:?}",
            weights.shape()
        )));
    };
    if wp != p || bias.len() != q {
        return Err(NetError::Shape(format!(
            "weights {:?} / bias {} inconsistent with {p} input planes",
            weights.shape(),
            bias.len()
        )));
    }
    let g = ConvGeometry::new(p, h, w, (kh, kw), stride, padding)?;
    let mut cols = vec![T::zero(); g.col_rows() * g.out_positions()];
    im2col(&g, input.data(), &mut cols);
    let mut out = vec![T::zero(); q * g.out_positions()];
    conv_forward_cols(&g, weights.data(), bias, &cols, &mut out);
    Tensor::new(&[q, g.out_h, g.out_w], out)
}

/// Views a `[C][S][H][W]` cube as `C·S` planes, plane index `c·S + s`.
pub fn flatten_planes<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>, NetError> {
    let &[c, s, h, w] = input.shape() else {
        return Err(NetError::Shape(format!(
            "expected [C][S][H][W], got {:?}",
            input.shape()
        )));
    };
    input.clone().reshape(&[c * s, h, w])
}

/// Cross-channel 3D convolution, evaluated literally as the double sum
/// over channels `i` and slices `j` of per-slice 2D correlations:
///
/// `X_k = Σ_j Σ_i W_ijk ∗ X_ij + b_k`
///
/// `input: [C][S][H][W]`, `weights: [K][C][S][kh][kw]`, `bias: [K]`.
/// Stride 1, same padding, no activation. Returns `[K][H][W]`.
pub fn conv3d_cross_channel<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>, NetError> {
    let &[c, s, h, w] = input.shape() else {
        return Err(NetError::Shape(format!(
            "cross-channel input must be [C][S][H][W], got {:?}",
            input.shape()
        )));
    };
    let &[k, wc, ws, kh, kw] = weights.shape() else {
        return Err(NetError::Shape(format!(
            "cross-channel weights must be [K][C][S][kh][kw], got {:?}",
            weights.shape()
        )));
    };
    if wc != c || ws != s || bias.len() != k {
        return Err(NetError::Shape(format!(
            "weights {:?} / bias {} inconsistent with input {:?}",
            weights.shape(),
            bias.len(),
            input.shape()
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(NetError::Shape(format!("kernel {kh}x{kw} must be odd-sided")));
    }
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![T::zero(); k * h * w];
    for kk in 0..k {
        let map = &mut out[kk * h * w..(kk + 1) * h * w];
        map.fill(bias[kk]);
        for j in 0..s {
            for i in 0..c {
                let plane = &x[(i * s + j) * h * w..(i * s + j + 1) * h * w];
                let kern = &wt[((kk * c + i) * s + j) * kh * kw..((kk * c + i) * s + j + 1) * kh * kw];
                for oy in 0..h {
                    for ox in 0..w {
                        let mut acc = T::zero();
                        for u in 0..kh {
                            let iy = (oy + u) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for v in 0..kw {
                                let ix = (ox + v) as isize - pw as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += kern[u * kw + v] * plane[iy as usize * w + ix as usize];
                            }
                        }
                        map[oy * w + ox] += acc;
                    }
                }
            }
        }
    }
    Tensor::new(&[k, h, w], out)
}
