//! Convolution kernels via im2col + GEMM.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Real;

/// Zero padding `(k - 1) / 2`: a 4×4 stride-2 kernel halves the spatial
/// size exactly, a 1×1 stride-1 kernel keeps it.
pub fn half_pad(kernel: usize) -> usize {
    (kernel - 1) / 2
}

/// Geometry of a convolution from a `c×h×w` image to `oh×ow` outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    /// Forward convolution geometry; `None` if the kernel does not fit.
    pub fn conv(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || k == 0 || h + 2 * pad < k || w + 2 * pad < k {
            return None;
        }
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        Some(ConvGeometry { c, h, w, k, stride, pad, oh, ow })
    }

    /// Geometry of the convolution whose adjoint maps `ih×iw` inputs to
    /// the transposed-convolution output.
    pub fn transposed(c: usize, ih: usize, iw: usize, k: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || ih == 0 || iw == 0 {
            return None;
        }
        let h = ((ih - 1) * stride + k).checked_sub(2 * pad)?;
        let w = ((iw - 1) * stride + k).checked_sub(2 * pad)?;
        let g = Self::conv(c, h, w, k, stride, pad)?;
        (g.oh == ih && g.ow == iw).then_some(g)
    }

    pub fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    fn source(&self, o: usize, kk: usize, size: usize) -> Option<usize> {
        let p = (o * self.stride + kk) as isize - self.pad as isize;
        (p >= 0 && (p as usize) < size).then_some(p as usize)
    }
}

/// Unfolds one `c×h×w` image into a `(c·k·k)×(oh·ow)` matrix.
pub(crate) fn im2col<T: Real>(img: &[T], g: &ConvGeometry, col: &mut [T]) {
    let cols = g.col_cols();
    for ch in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ch * g.k + ky) * g.k + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    match g.source(oy, ky, g.h) {
                        None => line.fill(T::zero()),
                        Some(iy) => {
                            let src = &img[(ch * g.h + iy) * g.w..(ch * g.h + iy + 1) * g.w];
                            for (ox, v) in line.iter_mut().enumerate() {
                                *v = g.source(ox, kx, g.w).map_or(T::zero(), |ix| src[ix]);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into the image.
pub(crate) fn col2im<T: Real>(col: &[T], g: &ConvGeometry, img: &mut [T]) {
    let cols = g.col_cols();
    for ch in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ch * g.k + ky) * g.k + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let Some(iy) = g.source(oy, ky, g.h) else { continue };
                    let dst = &mut img[(ch * g.h + iy) * g.w..(ch * g.h + iy + 1) * g.w];
                    for ox in 0..g.ow {
                        if let Some(ix) = g.source(ox, kx, g.w) {
                            dst[ix] = dst[ix] + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution forward for a batch: `input` is `n×c×h×w`, `kernel` is
/// `k_out×c×k×k`; returns `n×k_out×oh×ow`.
pub(crate) fn conv_forward<T: Real>(input: &[T], n: usize, g: &ConvGeometry, kernel: &[T], k_out: usize) -> Vec<T> {
    let in_sz = g.c * g.h * g.w;
    let out_sz = k_out * g.col_cols();
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let mut out = vec![T::zero(); n * out_sz];
    for b in 0..n {
        im2col(&input[b * in_sz..(b + 1) * in_sz], g, &mut col);
        T::gemm(false, false, k_out, g.col_cols(), g.col_rows(), T::one(), kernel, &col, T::zero(), &mut out[b * out_sz..(b + 1) * out_sz]);
    }
    out
}

/// Gradients of [`conv_forward`] with respect to input and kernel.
pub(crate) fn conv_backward<T: Real>(
    input: &[T],
    n: usize,
    g: &ConvGeometry,
    kernel: &[T],
    k_out: usize,
    d_out: &[T],
    want_input: bool,
    want_kernel: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let in_sz = g.c * g.h * g.w;
    let out_sz = k_out * g.col_cols();
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut col = vec![T::zero(); rows * cols];
    let mut d_in = want_input.then(|| vec![T::zero(); n * in_sz]);
    let mut d_k = want_kernel.then(|| vec![T::zero(); k_out * rows]);
    for b in 0..n {
        let dy = &d_out[b * out_sz..(b + 1) * out_sz];
        if let Some(dk) = d_k.as_mut() {
            im2col(&input[b * in_sz..(b + 1) * in_sz], g, &mut col);
            T::gemm(false, true, k_out, rows, cols, T::one(), dy, &col, T::one(), dk);
        }
        if let Some(di) = d_in.as_mut() {
            T::gemm(true, false, rows, cols, k_out, T::one(), kernel, dy, T::zero(), &mut col);
            col2im(&col, g, &mut di[b * in_sz..(b + 1) * in_sz]);
        }
    }
    (d_in, d_k)
}

/// Transposed convolution: `input` is `n×k_in×oh×ow` (the geometry's
/// output side), `kernel` is `k_in×c×k×k`; returns `n×c×h×w`.
pub(crate) fn deconv_forward<T: Real>(input: &[T], n: usize, g: &ConvGeometry, kernel: &[T], k_in: usize) -> Vec<T> {
    let in_sz = k_in * g.col_cols();
    let out_sz = g.c * g.h * g.w;
    let mut col = vec![T::zero(); g.col_rows() * g.col_cols()];
    let mut out = vec![T::zero(); n * out_sz];
    for b in 0..n {
        T::gemm(true, false, g.col_rows(), g.col_cols(), k_in, T::one(), kernel, &input[b * in_sz..(b + 1) * in_sz], T::zero(), &mut col);
        col2im(&col, g, &mut out[b * out_sz..(b + 1) * out_sz]);
    }
    out
}

pub(crate) fn deconv_backward<T: Real>(
    input: &[T],
    n: usize,
    g: &ConvGeometry,
    kernel: &[T],
    k_in: usize,
    d_out: &[T],
    want_input: bool,
    want_kernel: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let in_sz = k_in * g.col_cols();
    let out_sz = g.c * g.h * g.w;
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut col = vec![T::zero(); rows * cols];
    let mut d_in = want_input.then(|| vec![T::zero(); n * in_sz]);
    let mut d_k = want_kernel.then(|| vec![T::zero(); k_in * rows]);
    for b in 0..n {
        im2col(&d_out[b * out_sz..(b + 1) * out_sz], g, &mut col);
        if let Some(di) = d_in.as_mut() {
            T::gemm(false, false, k_in, cols, rows, T::one(), kernel, &col, T::zero(), &mut di[b * in_sz..(b + 1) * in_sz]);
        }
        if let Some(dk) = d_k.as_mut() {
            T::gemm(false, true, k_in, rows, cols, T::one(), &input[b * in_sz..(b + 1) * in_sz], &col, T::one(), dk);
        }
    }
    (d_in, d_k)
}
