//! PNG loading/saving and the byte <-> [-1, 1] value mapping.

use crate::attention::{ComponentMask, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use std::path::Path;

/// Byte to model range: x / 127.5 - 1.
pub fn normalize_byte<T: Scalar>(b: u8) -> T {
    T::of_f64(b as f64 / 127.5 - 1.0)
}

/// Model range back to a byte, rounding half away from zero and clamping.
pub fn denormalize_value<T: Scalar>(v: T) -> u8 {
    let x = (v.as_f64() + 1.0) * 127.5;
    let r = if x >= 0.0 { (x + 0.5).floor() } else { (x - 0.5).ceil() };
    r.clamp(0.0, 255.0) as u8
}

/// Load an RGB PNG as a (1, 3, h, w) tensor in [-1, 1].
pub fn load_rgb<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let mut t = Tensor::zeros(Shape::new(1, 3, h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(0, c, y as usize, x as usize, normalize_byte(p.0[c]));
        }
    }
    Ok(t)
}

/// Write a (1, 3, h, w) tensor in [-1, 1] as an RGB PNG.
pub fn save_rgb<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let s = t.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Shape(format!("expected a single RGB image, got {s}")));
    }
    let mut img = image::RgbImage::new(s.w as u32, s.h as u32);
    for y in 0..s.h {
        for x in 0..s.w {
            let px = [
                denormalize_value(t.at(0, 0, y, x)),
                denormalize_value(t.at(0, 1, y, x)),
                denormalize_value(t.at(0, 2, y, x)),
            ];
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img.save(path)?;
    Ok(())
}

/// Load a component mask stored as a grayscale PNG whose pixel values are
/// the class indices themselves (0..NUM_CLASSES).
pub fn load_mask(path: &Path) -> Result<ComponentMask> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let mut labels = vec![0u8; (w * h) as usize];
    for (x, y, p) in img.enumerate_pixels() {
        let v = p.0[0];
        if v >= NUM_CLASSES {
            return Err(Error::Dataset(format!(
                "mask {} has label {v} at ({x},{y}); classes are 0..{}",
                path.display(),
                NUM_CLASSES - 1
            )));
        }
        labels[(y * w + x) as usize] = v;
    }
    ComponentMask::new(w as usize, h as usize, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_endpoints() {
        assert_eq!(normalize_byte::<f64>(0), -1.0);
        assert_eq!(normalize_byte::<f64>(255), 1.0);
        assert!(normalize_byte::<f64>(128).abs() < 0.005);
    }

    #[test]
    fn round_trip_every_byte() {
        for b in 0u8..=255 {
            let v: f64 = normalize_byte(b);
            assert_eq!(denormalize_value(v), b, "byte {b}");
            let v32: f32 = normalize_byte(b);
            assert_eq!(denormalize_value(v32), b, "byte {b} (f32)");
        }
    }

    #[test]
    fn denormalize_clamps() {
        assert_eq!(denormalize_value(2.0f64), 255);
        assert_eq!(denormalize_value(-2.0f64), 0);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut t = Tensor::<f32>::zeros(Shape::new(1, 3, 5, 7));
        for c in 0..3 {
            for y in 0..5 {
                for x in 0..7 {
                    t.set(0, c, y, x, normalize_byte(((c * 89 + y * 17 + x * 31) % 256) as u8));
                }
            }
        }
        save_rgb(&path, &t).unwrap();
        let back = load_rgb::<f32>(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn mask_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let labels: Vec<u8> = (0..24).map(|i| (i % 4) as u8).collect();
        let img = image::GrayImage::from_raw(6, 4, labels.clone()).unwrap();
        img.save(&path).unwrap();
        let mask = load_mask(&path).unwrap();
        assert_eq!(mask.classes(), &labels[..]);
        assert_eq!((mask.width, mask.height), (6, 4));

        let bad = image::GrayImage::from_raw(2, 2, vec![0, 1, 2, 9]).unwrap();
        let bad_path = dir.path().join("bad.png");
        bad.save(&bad_path).unwrap();
        assert!(load_mask(&bad_path).is_err());
    }
}
