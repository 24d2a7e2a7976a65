//! Separable bicubic resizing (Keys kernel, a = −0.5) with antialiasing on
//! downscale and replicated borders.

const A: f64 = -0.5;

fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Taps and normalized weights for every output sample along one axis.
struct Contributions {
    taps: Vec<Vec<(usize, f64)>>,
    /// Nearest source sample per output, the reference for the weighted sum.
    anchor: Vec<usize>,
}

fn contributions(in_len: usize, out_len: usize) -> Contributions {
    let scale = out_len as f64 / in_len as f64;
    // Downscaling stretches the kernel to low-pass before decimation.
    let stretch = scale.min(1.0);
    let support = 2.0 / stretch;
    let mut taps = Vec::with_capacity(out_len);
    let mut anchor = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = (i as f64 + 0.5) / scale - 0.5;
        let lo = (center - support).floor() as isize;
        let hi = (center + support).ceil() as isize;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
        for j in lo..=hi {
            let w = cubic((center - j as f64) * stretch);
            if w != 0.0 {
                let idx = j.clamp(0, in_len as isize - 1) as usize;
                row.push((idx, w));
            }
        }
        let total: f64 = row.iter().map(|&(_, w)| w).sum();
        row.iter_mut().for_each(|(_, w)| *w /= total);
        taps.push(row);
        anchor.push((center.round().max(0.0) as usize).min(in_len - 1));
    }
    Contributions { taps, anchor }
}

/// Resample along contiguous runs. Written relative to an anchor sample so a
/// constant signal maps to exactly the same constant.
fn resample_axis(src: &[f64], stride: usize, count: usize, run_stride: usize, c: &Contributions) -> Vec<f64> {
    let out_len = c.taps.len();
    let mut out = vec![0.0; out_len * count];
    for r in 0..count {
        let base = r * run_stride;
        for (i, row) in c.taps.iter().enumerate() {
            let x0 = src[base + c.anchor[i] * stride];
            let delta: f64 = row.iter().map(|&(j, w)| w * (src[base + j * stride] - x0)).sum();
            out[r * out_len + i] = x0 + delta;
        }
    }
    out
}

/// Resize one `h×w` plane to `out_h×out_w`.
pub fn resize_plane(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w);
    // Horizontal pass: each row is a run.
    let cw = contributions(w, out_w);
    let horiz = resample_axis(src, 1, h, w, &cw);
    // Vertical pass over columns of the h×out_w intermediate.
    let ch = contributions(h, out_h);
    let cols = resample_axis(&horiz, out_w, out_w, 1, &ch);
    // `cols` is column-major (out_w runs of out_h); transpose back.
    let mut out = vec![0.0; out_h * out_w];
    for x in 0..out_w {
        for y in 0..out_h {
            out[y * out_w + x] = cols[x * out_h + y];
        }
    }
    out
}
