use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{check_same_shape, Tensor};

/// Huber threshold; the loss switches from quadratic to linear at |d| = delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberConfig {
    pub delta: f64,
}

impl Default for HuberConfig {
    fn default() -> Self {
        HuberConfig { delta: 1.0 }
    }
}

impl HuberConfig {
    pub fn new(delta: f64) -> Result<Self> {
        if delta <= 0.0 {
            return Err(Error::Config(format!("huber delta must be > 0, got {delta}")));
        }
        Ok(HuberConfig { delta })
    }
}

#[inline]
pub fn huber_value<T: Scalar>(d: T, delta: T) -> T {
    let half = T::of_f64(0.5);
    if d.abs() <= delta {
        half * d * d
    } else {
        delta * d.abs() - half * delta * delta
    }
}

/// Derivative of the Huber penalty w.r.t. d; clamped to +-delta outside the
/// quadratic zone.
#[inline]
pub fn huber_deriv<T: Scalar>(d: T, delta: T) -> T {
    if d.abs() <= delta {
        d
    } else if d > T::zero() {
        delta
    } else {
        -delta
    }
}

/// Mean over all elements of the Huber penalty of d = target - pred.
pub fn huber_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, delta: T) -> Result<T> {
    check_same_shape(pred, target)?;
    let n = T::of_f64(pred.shape().len() as f64);
    let mut acc = T::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        acc += huber_value(t - p, delta);
    }
    Ok(acc / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn scalar_tensor(v: f64) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![v]).unwrap()
    }

    #[test]
    fn zero_difference_is_zero() {
        let x = Tensor::filled(Shape::new(1, 3, 4, 4), 0.37f64);
        assert_eq!(huber_loss(&x, &x, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn single_pixel_values() {
        let pred = scalar_tensor(0.0);
        assert_eq!(huber_loss(&pred, &scalar_tensor(0.5), 1.0).unwrap(), 0.125);
        assert_eq!(huber_loss(&pred, &scalar_tensor(2.0), 1.0).unwrap(), 1.5);
    }

    #[test]
    fn knee_continuity() {
        let delta = 1.0f64;
        // both branches evaluate to delta^2/2 at |d| = delta
        let quad = 0.5 * delta * delta;
        let lin = delta * delta - 0.5 * delta * delta;
        assert!((quad - lin).abs() < 1e-12);
        let eps = 1e-7;
        let below = huber_value(delta - eps, delta);
        let above = huber_value(delta + eps, delta);
        assert!((below - quad).abs() < 2.0 * eps);
        assert!((above - quad).abs() < 2.0 * eps);
    }

    #[test]
    fn matches_half_mse_inside_quadratic_zone() {
        let shape = Shape::new(1, 2, 3, 3);
        let pred = Tensor::from_vec(
            shape,
            (0..18).map(|i| (i as f64) * 0.05 - 0.4).collect(),
        )
        .unwrap();
        let target = Tensor::zeros(shape);
        let h = huber_loss(&pred, &target, 1.0).unwrap();
        let mse: f64 =
            pred.data().iter().map(|d| d * d).sum::<f64>() / pred.shape().len() as f64;
        assert_eq!(h, mse / 2.0);
    }

    #[test]
    fn grows_linearly_far_from_knee() {
        let l1 = huber_loss(&scalar_tensor(0.0), &scalar_tensor(100.0), 1.0).unwrap();
        let l2 = huber_loss(&scalar_tensor(0.0), &scalar_tensor(101.0), 1.0).unwrap();
        assert!((l2 - l1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_under_swap() {
        let a = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.1f64, -2.0, 0.7]).unwrap();
        let b = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![1.4f64, 0.2, -0.3]).unwrap();
        assert_eq!(
            huber_loss(&a, &b, 1.0).unwrap(),
            huber_loss(&b, &a, 1.0).unwrap()
        );
    }

    #[test]
    fn rejects_shape_mismatch() {
        let a = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 2));
        let b = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 3));
        assert!(huber_loss(&a, &b, 1.0).is_err());
    }
}
