//! Separable bicubic resampling (Catmull-Rom family, a = -0.5) with
//! kernel widening when downscaling, so large reductions average rather
//! than alias.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// The bicubic kernel with a = -0.5.
pub fn cubic_kernel(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x < 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Weights and source indices for one output coordinate along an axis of
/// length `src_len` resampled to `dst_len`. Indices are clamped to the
/// edge (replicate padding); weights are renormalized to sum to 1.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, Vec<(usize, f64)>)> {
    let scale = src_len as f64 / dst_len as f64;
    // widen the kernel footprint when shrinking
    let support = 2.0 * scale.max(1.0);
    let inv = 1.0 / scale.max(1.0);
    (0..dst_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).ceil() as i64;
            let hi = (center + support).floor() as i64;
            let mut taps = Vec::with_capacity((hi - lo + 1) as usize);
            let mut total = 0.0;
            for s in lo..=hi {
                let w = cubic_kernel((s as f64 - center) * inv);
                if w != 0.0 {
                    let idx = s.clamp(0, src_len as i64 - 1) as usize;
                    total += w;
                    taps.push((idx, w));
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            (o, taps)
        })
        .collect()
}

/// Resize every image in the batch to (new_h, new_w).
pub fn resize_bicubic<T: Scalar>(input: &Tensor<T>, new_h: usize, new_w: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if new_h == 0 || new_w == 0 {
        return Err(Error::Shape(format!("cannot resize {s} to {new_h}x{new_w}")));
    }
    let h_taps = axis_taps(s.h, new_h);
    let w_taps = axis_taps(s.w, new_w);

    // horizontal pass, accumulated in f64
    let mut mid = vec![0.0f64; s.n * s.c * s.h * new_w];
    for b in 0..s.n {
        for c in 0..s.c {
            for y in 0..s.h {
                let row_out = ((b * s.c + c) * s.h + y) * new_w;
                for &(x, ref taps) in &w_taps {
                    let mut acc = 0.0;
                    for &(sx, w) in taps {
                        acc += input.at(b, c, y, sx).as_f64() * w;
                    }
                    mid[row_out + x] = acc;
                }
            }
        }
    }

    // vertical pass
    let out_shape = Shape::new(s.n, s.c, new_h, new_w);
    let mut out = Tensor::zeros(out_shape);
    for b in 0..s.n {
        for c in 0..s.c {
            let plane_in = (b * s.c + c) * s.h * new_w;
            for &(y, ref taps) in &h_taps {
                for x in 0..new_w {
                    let mut acc = 0.0;
                    for &(sy, w) in taps {
                        acc += mid[plane_in + sy * new_w + x] * w;
                    }
                    out.set(b, c, y, x, T::of_f64(acc));
                }
            }
        }
    }
    Ok(out)
}

/// Shrink by an integer factor; the usual path for making training inputs.
pub fn downscale<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if factor < 1 || s.h % factor != 0 || s.w % factor != 0 {
        return Err(Error::Shape(format!("cannot downscale {s} by {factor}")));
    }
    resize_bicubic(input, s.h / factor, s.w / factor)
}

/// Grow by an integer factor; the comparison baseline at evaluation time.
pub fn upscale<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    resize_bicubic(input, s.h * factor, s.w * factor)
}
