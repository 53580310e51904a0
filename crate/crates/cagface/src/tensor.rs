use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// (batch, channels, height, width)
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 tensor, row-major (n, c, h, w).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, v: T) -> Self {
        Tensor {
            shape,
            data: vec![v; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx(b, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.idx(b, c, y, x);
        self.data[i] = v;
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.len() == 1
    }

    pub fn scalar_value(&self) -> Result<T> {
        if !self.is_scalar() {
            return Err(Error::Contract(format!(
                "expected scalar tensor, got shape {}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channel slice [c0, c1) of a single tensor, preserving batch/spatial dims.
    pub fn slice_channels(&self, c0: usize, c1: usize) -> Result<Tensor<T>> {
        if c1 > self.shape.c || c0 >= c1 {
            return Err(Error::Shape(format!(
                "channel slice [{c0},{c1}) out of range for {} channels",
                self.shape.c
            )));
        }
        let s = self.shape;
        let out_shape = Shape::new(s.n, c1 - c0, s.h, s.w);
        let plane = s.h * s.w;
        let mut out = Vec::with_capacity(out_shape.len());
        for b in 0..s.n {
            for c in c0..c1 {
                let start = (b * s.c + c) * plane;
                out.extend_from_slice(&self.data[start..start + plane]);
            }
        }
        Tensor::from_vec(out_shape, out)
    }

    pub fn map<F: Fn(T) -> T>(&self, f: F) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn from_f64(src: &Tensor<f64>) -> Tensor<T> {
        Tensor {
            shape: src.shape,
            data: src.data.iter().map(|&v| T::of_f64(v)).collect(),
        }
    }
}

pub fn check_same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "expected matching shapes, got {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn channel_slice_recovers_planes() {
        let s = Shape::new(1, 2, 2, 2);
        let t = Tensor::from_vec(s, (0..8).map(|v| v as f32).collect()).unwrap();
        let lo = t.slice_channels(0, 1).unwrap();
        assert_eq!(lo.data(), &[0.0, 1.0, 2.0, 3.0]);
        let hi = t.slice_channels(1, 2).unwrap();
        assert_eq!(hi.data(), &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn indexing_is_row_major() {
        let s = Shape::new(2, 3, 4, 5);
        let t = Tensor::<f32>::zeros(s);
        assert_eq!(t.idx(0, 0, 0, 1), 1);
        assert_eq!(t.idx(0, 0, 1, 0), 5);
        assert_eq!(t.idx(0, 1, 0, 0), 20);
        assert_eq!(t.idx(1, 0, 0, 0), 60);
    }
}
