use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{check_same_shape, Shape, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape(a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Tensor::from_vec(a.shape(), data)
}

/// Elementwise product. `b` may either match `a` exactly or be a
/// single-channel map broadcast across `a`'s channels.
pub fn mul_elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa == sb {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        return Tensor::from_vec(sa, data);
    }
    if sb.c == 1 && sb.n == sa.n && sb.h == sa.h && sb.w == sa.w {
        let mut out = Tensor::zeros(sa);
        for bn in 0..sa.n {
            for c in 0..sa.c {
                for y in 0..sa.h {
                    for x in 0..sa.w {
                        out.set(bn, c, y, x, a.at(bn, c, y, x) * b.at(bn, 0, y, x));
                    }
                }
            }
        }
        return Ok(out);
    }
    Err(Error::Shape(format!(
        "mul_elementwise: {sa} vs {sb} (need equal shapes or single-channel rhs)"
    )))
}

/// Stack along channels; `a` occupies channels [0, c_a).
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::Shape(format!(
            "concat_channels: batch/spatial mismatch {sa} vs {sb}"
        )));
    }
    let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
    let plane = sa.h * sa.w;
    let mut data = Vec::with_capacity(out_shape.len());
    for bn in 0..sa.n {
        data.extend_from_slice(&a.data()[bn * sa.c * plane..(bn + 1) * sa.c * plane]);
        data.extend_from_slice(&b.data()[bn * sb.c * plane..(bn + 1) * sb.c * plane]);
    }
    Tensor::from_vec(out_shape, data)
}
