use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Space-to-depth: (n, c, h, w) -> (n, c*r^2, h/r, w/r).
///
/// Sub-pixel ordering is dy-major, then dx, then source channel:
/// out[b, c*(dy*r + dx) + i, y, x] = in[b, i, y*r + dy, x*r + dx].
/// A pure index permutation; no arithmetic on values.
pub fn space_to_depth<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    if r < 2 {
        return Err(Error::Config(format!("rearrange factor must be >= 2, got {r}")));
    }
    let s = input.shape();
    if s.h % r != 0 || s.w % r != 0 {
        return Err(Error::Shape(format!(
            "spatial dims {}x{} not divisible by factor {r}",
            s.h, s.w
        )));
    }
    let (oh, ow) = (s.h / r, s.w / r);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c * r * r, oh, ow));
    for b in 0..s.n {
        for dy in 0..r {
            for dx in 0..r {
                for ci in 0..s.c {
                    let oc = s.c * (dy * r + dx) + ci;
                    for y in 0..oh {
                        for x in 0..ow {
                            let v = input.at(b, ci, y * r + dy, x * r + dx);
                            out.set(b, oc, y, x, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Depth-to-space (pixel shuffle): (n, c, h, w) -> (n, c/r^2, h*r, w*r).
/// Exact inverse of `space_to_depth` under the same ordering.
pub fn depth_to_space<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    if r < 2 {
        return Err(Error::Config(format!("rearrange factor must be >= 2, got {r}")));
    }
    let s = input.shape();
    if s.c % (r * r) != 0 {
        return Err(Error::Shape(format!(
            "channel count {} not divisible by r^2 = {}",
            s.c,
            r * r
        )));
    }
    let oc = s.c / (r * r);
    let mut out = Tensor::zeros(Shape::new(s.n, oc, s.h * r, s.w * r));
    for b in 0..s.n {
        for dy in 0..r {
            for dx in 0..r {
                for ci in 0..oc {
                    let ic = oc * (dy * r + dx) + ci;
                    for y in 0..s.h {
                        for x in 0..s.w {
                            let v = input.at(b, ic, y, x);
                            out.set(b, ci, y * r + dy, x * r + dx, v);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
