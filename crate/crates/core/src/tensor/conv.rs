//! Direct (loop-nest) 2-D convolution kernels over NCHW buffers.
//!
//! Shape formulas, with `p` padding and `s` stride:
//!
//! * conv2d:            `out = floor((in + 2p - k) / s) + 1`, requires `in + 2p >= k`
//! * conv2d_transpose:  `out = (in - 1) * s - 2p + k + output_padding`,
//!   with `output_padding < s`, so that conv2d maps the output back to `in`.
//!
//! The kernel tensor is `O×I×Kh×Kw` for conv2d. The transpose reuses the same
//! tensor as its adjoint, so its own input has `O` channels and output `I`.

/// Stride and zero padding shared by both spatial axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dParams {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dParams {
    pub fn new(stride: usize, padding: usize) -> Self {
        Conv2dParams { stride, padding }
    }
}

pub fn conv2d_output_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

pub fn conv2d_transpose_output_len(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    if stride == 0 || output_padding >= stride {
        return None;
    }
    let full = (input - 1) * stride + kernel + output_padding;
    full.checked_sub(2 * padding).filter(|&v| v > 0)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct KernelDims {
    pub o: usize,
    pub i: usize,
    pub kh: usize,
    pub kw: usize,
}

/// Range of output positions `o` with `o * s + k - p` inside `[0, len)`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, k: usize, s: usize, p: usize) -> std::ops::Range<usize> {
    let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
    let hi = if in_len + p > k {
        ((in_len - 1 + p - k) / s + 1).min(out_len)
    } else {
        0
    };
    lo..hi.max(lo)
}

/// `out[n,o] = sum_i x[n,i] * k[o,i]` with stride and padding.
pub(crate) fn forward(x: &[f64], xd: Dims, k: &[f64], kd: KernelDims, p: Conv2dParams, od: Dims) -> Vec<f64> {
    let (s, pad) = (p.stride, p.padding);
    let mut out = vec![0.0; od.n * od.c * od.h * od.w];
    for n in 0..xd.n {
        for o in 0..kd.o {
            let out_plane = &mut out[((n * od.c + o) * od.h * od.w)..((n * od.c + o + 1) * od.h * od.w)];
            for i in 0..kd.i {
                let x_plane = &x[((n * xd.c + i) * xd.h * xd.w)..((n * xd.c + i + 1) * xd.h * xd.w)];
                for ky in 0..kd.kh {
                    let rows = valid_range(od.h, xd.h, ky, s, pad);
                    for kx in 0..kd.kw {
                        let wv = k[((o * kd.i + i) * kd.kh + ky) * kd.kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let cols = valid_range(od.w, xd.w, kx, s, pad);
                        for oy in rows.clone() {
                            let iy = oy * s + ky - pad;
                            let orow = &mut out_plane[oy * od.w..(oy + 1) * od.w];
                            let xrow = &x_plane[iy * xd.w..(iy + 1) * xd.w];
                            for ox in cols.clone() {
                                orow[ox] += wv * xrow[ox * s + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`forward`] with respect to `x`: scatters `g` back through `k`.
pub(crate) fn backward_input(g: &[f64], gd: Dims, k: &[f64], kd: KernelDims, p: Conv2dParams, xd: Dims) -> Vec<f64> {
    let (s, pad) = (p.stride, p.padding);
    let mut gx = vec![0.0; xd.n * xd.c * xd.h * xd.w];
    for n in 0..gd.n {
        for o in 0..kd.o {
            let g_plane = &g[((n * gd.c + o) * gd.h * gd.w)..((n * gd.c + o + 1) * gd.h * gd.w)];
            for i in 0..kd.i {
                let gx_plane = &mut gx[((n * xd.c + i) * xd.h * xd.w)..((n * xd.c + i + 1) * xd.h * xd.w)];
                for ky in 0..kd.kh {
                    let rows = valid_range(gd.h, xd.h, ky, s, pad);
                    for kx in 0..kd.kw {
                        let wv = k[((o * kd.i + i) * kd.kh + ky) * kd.kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let cols = valid_range(gd.w, xd.w, kx, s, pad);
                        for oy in rows.clone() {
                            let iy = oy * s + ky - pad;
                            let grow = &g_plane[oy * gd.w..(oy + 1) * gd.w];
                            let xrow = &mut gx_plane[iy * xd.w..(iy + 1) * xd.w];
                            for ox in cols.clone() {
                                xrow[ox * s + kx - pad] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Gradient of [`forward`] with respect to the kernel.
pub(crate) fn backward_kernel(g: &[f64], gd: Dims, x: &[f64], xd: Dims, kd: KernelDims, p: Conv2dParams) -> Vec<f64> {
    let (s, pad) = (p.stride, p.padding);
    let mut gk = vec![0.0; kd.o * kd.i * kd.kh * kd.kw];
    for n in 0..gd.n {
        for o in 0..kd.o {
            let g_plane = &g[((n * gd.c + o) * gd.h * gd.w)..((n * gd.c + o + 1) * gd.h * gd.w)];
            for i in 0..kd.i {
                let x_plane = &x[((n * xd.c + i) * xd.h * xd.w)..((n * xd.c + i + 1) * xd.h * xd.w)];
                for ky in 0..kd.kh {
                    let rows = valid_range(gd.h, xd.h, ky, s, pad);
                    for kx in 0..kd.kw {
                        let cols = valid_range(gd.w, xd.w, kx, s, pad);
                        let mut acc = 0.0;
                        for oy in rows.clone() {
                            let iy = oy * s + ky - pad;
                            let grow = &g_plane[oy * gd.w..(oy + 1) * gd.w];
                            let xrow = &x_plane[iy * xd.w..(iy + 1) * xd.w];
                            for ox in cols.clone() {
                                acc += grow[ox] * xrow[ox * s + kx - pad];
                            }
                        }
                        gk[((o * kd.i + i) * kd.kh + ky) * kd.kw + kx] += acc;
                    }
                }
            }
        }
    }
    gk
}

/// Per-channel sum over batch and space, the bias gradient.
pub(crate) fn channel_sums(g: &[f64], gd: Dims) -> Vec<f64> {
    let plane = gd.h * gd.w;
    let mut out = vec![0.0; gd.c];
    for (idx, chunk) in g.chunks_exact(plane).enumerate() {
        out[idx % gd.c] += chunk.iter().sum::<f64>();
    }
    out
}

pub(crate) fn add_channel_bias(out: &mut [f64], od: Dims, bias: &[f64]) {
    let plane = od.h * od.w;
    for (idx, chunk) in out.chunks_exact_mut(plane).enumerate() {
        let b = bias[idx % od.c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_formulas() {
        assert_eq!(conv2d_output_len(5, 3, 2, 1), Some(3));
        assert_eq!(conv2d_output_len(3, 2, 1, 0), Some(2));
        assert_eq!(conv2d_output_len(1, 3, 1, 0), None);
        assert_eq!(conv2d_transpose_output_len(3, 3, 2, 1, 0), Some(5));
        assert_eq!(conv2d_transpose_output_len(4, 4, 2, 1, 0), Some(8));
        assert_eq!(conv2d_transpose_output_len(4, 3, 2, 1, 2), None);
    }

    #[test]
    fn valid_range_matches_bruteforce() {
        for in_len in 1..7 {
            for k in 0..4 {
                for s in 1..4 {
                    for p in 0..3 {
                        let out_len = 9;
                        let expect: Vec<usize> = (0..out_len)
                            .filter(|&o| {
                                let pos = (o * s + k) as isize - p as isize;
                                pos >= 0 && (pos as usize) < in_len
                            })
                            .collect();
                        let got: Vec<usize> = valid_range(out_len, in_len, k, s, p).collect();
                        assert_eq!(got, expect, "in={in_len} k={k} s={s} p={p}");
                    }
                }
            }
        }
    }
}
