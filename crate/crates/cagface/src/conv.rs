use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Convolution weights laid out (kh, kw, c_in, c_out) row-major, plus a
/// per-output-channel bias. Parameter count is kh*kw*c_in*c_out (+ c_out).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub kh: usize,
    pub kw: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(kh: usize, kw: usize, c_in: usize, c_out: usize) -> Self {
        ConvParams {
            kh,
            kw,
            c_in,
            c_out,
            weights: vec![T::zero(); kh * kw * c_in * c_out],
            bias: vec![T::zero(); c_out],
        }
    }

    #[inline]
    pub fn widx(&self, dy: usize, dx: usize, ci: usize, co: usize) -> usize {
        ((dy * self.kw + dx) * self.c_in + ci) * self.c_out + co
    }

    pub fn kernel_param_count(&self) -> usize {
        self.kh * self.kw * self.c_in * self.c_out
    }

    pub fn validate(&self, input: Shape) -> Result<()> {
        if self.kh % 2 == 0 || self.kw % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel dims must be odd, got {}x{}",
                self.kh, self.kw
            )));
        }
        if input.c != self.c_in {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.c_in, input.c
            )));
        }
        Ok(())
    }
}

/// Output shape of a "same"-padded convolution.
pub fn conv2d_output_shape(input: Shape, c_out: usize) -> Shape {
    Shape::new(input.n, c_out, input.h, input.w)
}

/// Direct reference convolution: zero padding, spatial size preserved.
pub fn conv2d_naive<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    p.validate(input.shape())?;
    let s = input.shape();
    let mut out = Tensor::zeros(conv2d_output_shape(s, p.c_out));
    let (py, px) = (p.kh / 2, p.kw / 2);
    for b in 0..s.n {
        for co in 0..p.c_out {
            for y in 0..s.h {
                for x in 0..s.w {
                    let mut acc = p.bias[co];
                    for dy in 0..p.kh {
                        let sy = y as isize + dy as isize - py as isize;
                        if sy < 0 || sy >= s.h as isize {
                            continue;
                        }
                        for dx in 0..p.kw {
                            let sx = x as isize + dx as isize - px as isize;
                            if sx < 0 || sx >= s.w as isize {
                                continue;
                            }
                            for ci in 0..p.c_in {
                                acc = acc
                                    + input.at(b, ci, sy as usize, sx as usize)
                                        * p.weights[p.widx(dy, dx, ci, co)];
                            }
                        }
                    }
                    out.set(b, co, y, x, acc);
                }
            }
        }
    }
    Ok(out)
}

const COL_CHUNK: usize = 4096;

/// Gather the im2col block for output columns [j0, j0+nc) of one batch item.
/// Row k = (dy*kw + dx)*c_in + ci matches the weight layout's leading index.
fn im2col_chunk<T: Scalar>(
    input: &Tensor<T>,
    b: usize,
    p: &ConvParams<T>,
    j0: usize,
    nc: usize,
    col: &mut [T],
) {
    let s = input.shape();
    let (py, px) = (p.kh as isize / 2, p.kw as isize / 2);
    let plane = s.h * s.w;
    let base = b * s.c * plane;
    let data = input.data();
    for dy in 0..p.kh {
        for dx in 0..p.kw {
            for ci in 0..p.c_in {
                let k = (dy * p.kw + dx) * p.c_in + ci;
                let row = &mut col[k * nc..(k + 1) * nc];
                for (j, slot) in row.iter_mut().enumerate() {
                    let pos = j0 + j;
                    let y = (pos / s.w) as isize + dy as isize - py;
                    let x = (pos % s.w) as isize + dx as isize - px;
                    *slot = if y < 0 || y >= s.h as isize || x < 0 || x >= s.w as isize {
                        T::zero()
                    } else {
                        data[base + ci * plane + y as usize * s.w + x as usize]
                    };
                }
            }
        }
    }
}

/// im2col + GEMM convolution. Matches `conv2d_naive` up to floating-point
/// summation order.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    p.validate(input.shape())?;
    let s = input.shape();
    let plane = s.h * s.w;
    let k_dim = p.kh * p.kw * p.c_in;
    let mut out = Tensor::zeros(conv2d_output_shape(s, p.c_out));
    let out_plane = plane;
    {
        let od = out.data_mut();
        for b in 0..s.n {
            for co in 0..p.c_out {
                let start = (b * p.c_out + co) * out_plane;
                od[start..start + out_plane].fill(p.bias[co]);
            }
        }
    }
    let mut col = vec![T::zero(); k_dim * COL_CHUNK.min(plane)];
    for b in 0..s.n {
        let mut j0 = 0;
        while j0 < plane {
            let nc = COL_CHUNK.min(plane - j0);
            im2col_chunk(input, b, p, j0, nc, &mut col);
            unsafe {
                // C[co, j] += sum_k W[k, co] * col[k, j]
                T::gemm(
                    p.c_out,
                    k_dim,
                    nc,
                    T::one(),
                    p.weights.as_ptr(),
                    1,
                    p.c_out as isize,
                    col.as_ptr(),
                    nc as isize,
                    1,
                    T::one(),
                    out.data_mut()
                        .as_mut_ptr()
                        .add(b * p.c_out * out_plane + j0),
                    out_plane as isize,
                    1,
                );
            }
            j0 += nc;
        }
    }
    Ok(out)
}

/// Gradients of the same-padded convolution w.r.t. input, weights, and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    p.validate(input.shape())?;
    let s = input.shape();
    let plane = s.h * s.w;
    let k_dim = p.kh * p.kw * p.c_in;
    let mut grad_input = Tensor::zeros(s);
    let mut grad_w = vec![T::zero(); p.weights.len()];
    let mut grad_b = vec![T::zero(); p.c_out];

    let go = grad_out.data();
    for b in 0..s.n {
        for co in 0..p.c_out {
            let start = (b * p.c_out + co) * plane;
            let mut acc = T::zero();
            for &g in &go[start..start + plane] {
                acc += g;
            }
            grad_b[co] += acc;
        }
    }

    let chunk = COL_CHUNK.min(plane);
    let mut col = vec![T::zero(); k_dim * chunk];
    let mut dcol = vec![T::zero(); k_dim * chunk];
    let (py, px) = (p.kh as isize / 2, p.kw as isize / 2);
    for b in 0..s.n {
        let mut j0 = 0;
        while j0 < plane {
            let nc = chunk.min(plane - j0);
            im2col_chunk(input, b, p, j0, nc, &mut col);
            let go_ptr = unsafe { go.as_ptr().add(b * p.c_out * plane + j0) };
            unsafe {
                // dW[k, co] += sum_j col[k, j] * G[co, j]
                T::gemm(
                    k_dim,
                    nc,
                    p.c_out,
                    T::one(),
                    col.as_ptr(),
                    nc as isize,
                    1,
                    go_ptr,
                    1,
                    plane as isize,
                    T::one(),
                    grad_w.as_mut_ptr(),
                    p.c_out as isize,
                    1,
                );
                // dcol[k, j] = sum_co W[k, co] * G[co, j]
                T::gemm(
                    k_dim,
                    p.c_out,
                    nc,
                    T::one(),
                    p.weights.as_ptr(),
                    p.c_out as isize,
                    1,
                    go_ptr,
                    plane as isize,
                    1,
                    T::zero(),
                    dcol.as_mut_ptr(),
                    nc as isize,
                    1,
                );
            }
            // col2im scatter-add
            let gi = grad_input.data_mut();
            let base = b * s.c * plane;
            for dy in 0..p.kh {
                for dx in 0..p.kw {
                    for ci in 0..p.c_in {
                        let k = (dy * p.kw + dx) * p.c_in + ci;
                        let row = &dcol[k * nc..k * nc + nc];
                        for (j, &g) in row.iter().enumerate() {
                            let pos = j0 + j;
                            let y = (pos / s.w) as isize + dy as isize - py;
                            let x = (pos % s.w) as isize + dx as isize - px;
                            if y >= 0 && y < s.h as isize && x >= 0 && x < s.w as isize {
                                gi[base + ci * plane + y as usize * s.w + x as usize] += g;
                            }
                        }
                    }
                }
            }
            j0 += nc;
        }
    }
    Ok((grad_input, grad_w, grad_b))
}
