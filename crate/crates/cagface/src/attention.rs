//! Facial-component attention maps.
//!
//! Segmentation is ingested, not computed: a [`ComponentMask`] carries one
//! class label per pixel (background / skin / hair / other-parts). Each
//! class indicator is Gaussian-smoothed and multiplied into the gray-level
//! image; the RGB channels and the three maps stack into the network's
//! 6-channel input block.

use crate::error::{Error, Result};
use crate::ops::{concat_channels, mul_elementwise};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

pub const CLASS_BACKGROUND: u8 = 0;
pub const CLASS_SKIN: u8 = 1;
pub const CLASS_HAIR: u8 = 2;
pub const CLASS_OTHER_PARTS: u8 = 3;
pub const NUM_CLASSES: u8 = 4;

/// Per-pixel facial-component class map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMask {
    pub width: usize,
    pub height: usize,
    classes: Vec<u8>,
}

impl ComponentMask {
    pub fn new(width: usize, height: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != width * height {
            return Err(Error::Shape(format!(
                "mask data length {} does not match {width}x{height}",
                classes.len()
            )));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= NUM_CLASSES) {
            return Err(Error::Dataset(format!(
                "mask contains class index {bad}; valid classes are 0..{NUM_CLASSES}"
            )));
        }
        Ok(ComponentMask { width, height, classes })
    }

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn class_at(&self, y: usize, x: usize) -> u8 {
        self.classes[y * self.width + x]
    }

    /// {0,1} indicator plane for one class, as a (1,1,h,w) tensor.
    pub fn indicator<T: Scalar>(&self, class: u8) -> Tensor<T> {
        let data = self
            .classes
            .iter()
            .map(|&c| if c == class { T::one() } else { T::zero() })
            .collect();
        Tensor::from_vec(Shape::new(1, 1, self.height, self.width), data).unwrap()
    }

    /// Nearest-neighbor downsample by an integer factor. Class labels must
    /// not be interpolated, so this picks the top-left source pixel of each
    /// cell.
    pub fn downsample_nearest(&self, factor: usize) -> Result<ComponentMask> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::Shape(format!(
                "mask {}x{} not divisible by downsample factor {factor}",
                self.width, self.height
            )));
        }
        let (ow, oh) = (self.width / factor, self.height / factor);
        let mut out = Vec::with_capacity(ow * oh);
        for y in 0..oh {
            for x in 0..ow {
                out.push(self.class_at(y * factor, x * factor));
            }
        }
        ComponentMask::new(ow, oh, out)
    }
}

/// Gaussian smoothing parameters: sigma in pixels, kernel radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub radius: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { sigma: 3.0, radius: 9 }
    }
}

impl SmoothingConfig {
    pub fn with_sigma(sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Config(format!("sigma must be > 0, got {sigma}")));
        }
        Ok(SmoothingConfig { sigma, radius: (3.0 * sigma).ceil() as usize })
    }

    /// Symmetric 1-D kernel with weights summing to 1.
    pub fn kernel<T: Scalar>(&self) -> Vec<T> {
        let mut k: Vec<f64> = (-(self.radius as isize)..=self.radius as isize)
            .map(|i| (-((i * i) as f64) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let sum: f64 = k.iter().sum();
        for v in &mut k {
            *v /= sum;
        }
        k.into_iter().map(T::of_f64).collect()
    }
}

/// Separable Gaussian blur of a single-channel map with replicate edge
/// handling. Constants are preserved exactly up to kernel normalization.
pub fn gaussian_pool<T: Scalar>(map: &Tensor<T>, cfg: &SmoothingConfig) -> Result<Tensor<T>> {
    if cfg.sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be > 0, got {}", cfg.sigma)));
    }
    let s = map.shape();
    if s.c != 1 {
        return Err(Error::Shape(format!(
            "gaussian_pool expects a single-channel map, got {} channels",
            s.c
        )));
    }
    let kernel: Vec<T> = cfg.kernel();
    let r = cfg.radius as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;

    // horizontal pass
    let mut mid = Tensor::zeros(s);
    for b in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let mut acc = T::zero();
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sx = clamp(x as isize + ki as isize - r, s.w);
                    acc += map.at(b, 0, y, sx) * kv;
                }
                mid.set(b, 0, y, x, acc);
            }
        }
    }
    // vertical pass
    let mut out = Tensor::zeros(s);
    for b in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let mut acc = T::zero();
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sy = clamp(y as isize + ki as isize - r, s.h);
                    acc += mid.at(b, 0, sy, x) * kv;
                }
                out.set(b, 0, y, x, acc);
            }
        }
    }
    Ok(out)
}

/// Gray-level map of a [-1,1]-normalized RGB image, rescaled to [0,1]:
/// gray = ((r + g + b) / 3 + 1) / 2.
pub fn gray_map<T: Scalar>(rgb: &Tensor<T>) -> Result<Tensor<T>> {
    let s = rgb.shape();
    if s.c != 3 {
        return Err(Error::Shape(format!("gray_map expects 3 channels, got {}", s.c)));
    }
    let third = T::of_f64(1.0 / 3.0);
    let half = T::of_f64(0.5);
    let mut out = Tensor::zeros(Shape::new(s.n, 1, s.h, s.w));
    for b in 0..s.n {
        for y in 0..s.h {
            for x in 0..s.w {
                let m = (rgb.at(b, 0, y, x) + rgb.at(b, 1, y, x) + rgb.at(b, 2, y, x)) * third;
                out.set(b, 0, y, x, (m + T::one()) * half);
            }
        }
    }
    Ok(out)
}

/// The network's 6-channel input: normalized RGB in channels 0-2, then the
/// skin / hair / other-parts attention maps in channels 3-5.
pub fn build_attention_block<T: Scalar>(
    lr_image: &Tensor<T>,
    mask: &ComponentMask,
    cfg: &SmoothingConfig,
) -> Result<Tensor<T>> {
    let s = lr_image.shape();
    if s.c != 3 {
        return Err(Error::Shape(format!(
            "attention block expects a 3-channel image, got {} channels",
            s.c
        )));
    }
    if s.h != mask.height || s.w != mask.width {
        return Err(Error::Shape(format!(
            "image {}x{} vs mask {}x{} resolution mismatch",
            s.w, s.h, mask.width, mask.height
        )));
    }
    let gray = gray_map(lr_image)?;
    let mut block = lr_image.clone();
    for class in [CLASS_SKIN, CLASS_HAIR, CLASS_OTHER_PARTS] {
        let heat = gaussian_pool(&mask.indicator(class), cfg)?;
        let map = mul_elementwise(&gray, &heat)?;
        block = concat_channels(&block, &map)?;
    }
    Ok(block)
}
