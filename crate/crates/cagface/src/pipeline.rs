//! Glue between the data modules and the network: turning an HR image +
//! component mask into a training record, and whole-face / tiled
//! inference entry points.

use crate::attention::{build_attention_block, ComponentMask, SmoothingConfig};
use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::graph::Tape;
use crate::net::CagFaceNet;
use crate::resize::{downscale, upscale};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::tile::{tile_infer, TileLayout};

/// Build the LR 6-channel block and both supervision targets from a
/// ground-truth HR image and its HR-resolution component mask.
pub fn prepare_record<T: Scalar>(
    hr: &Tensor<T>,
    mask_hr: &ComponentMask,
    smoothing: &SmoothingConfig,
) -> Result<ImageRecord<T>> {
    let s = hr.shape();
    if s.h % 4 != 0 || s.w % 4 != 0 {
        return Err(Error::Contract(format!("HR dimensions must be divisible by 4, got {s}")));
    }
    if mask_hr.height != s.h || mask_hr.width != s.w {
        return Err(Error::Shape(format!(
            "mask {}x{} does not match HR image {s}",
            mask_hr.width, mask_hr.height
        )));
    }
    let lr = downscale(hr, 4)?;
    let mid = downscale(hr, 2)?;
    let mask_lr = mask_hr.downsample_nearest(4)?;
    let block = build_attention_block(&lr, &mask_lr, smoothing)?;
    let record = ImageRecord { block, mid, hr: hr.clone() };
    record.validate()?;
    Ok(record)
}

/// One whole-face forward pass: 6-channel block -> (2x intermediate, 4x final).
pub fn infer_whole<T: Scalar>(
    net: &CagFaceNet<T>,
    block: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut tape = Tape::new();
    let x = tape.input(block.clone());
    let (inter, final_hr) = net.forward(&mut tape, x)?;
    Ok((tape.value(inter).clone(), tape.value(final_hr).clone()))
}

/// Patch-by-patch inference with overlap blending.
pub fn infer_tiled<T: Scalar>(
    net: &CagFaceNet<T>,
    block: &Tensor<T>,
    layout: &TileLayout,
) -> Result<Tensor<T>> {
    tile_infer(block, layout, |tile| Ok(infer_whole(net, tile)?.1))
}

/// The bicubic 4x comparison baseline on the RGB channels of a block.
pub fn bicubic_baseline<T: Scalar>(block: &Tensor<T>) -> Result<Tensor<T>> {
    let rgb = block.slice_channels(0, 3)?;
    upscale(&rgb, 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkConfig;
    use crate::tensor::Shape;
    use crate::tile::BlendKind;

    fn toy_hr(side: usize) -> (Tensor<f32>, ComponentMask) {
        let mut hr = Tensor::zeros(Shape::new(1, 3, side, side));
        for c in 0..3 {
            for y in 0..side {
                for x in 0..side {
                    hr.set(0, c, y, x, ((c * 37 + y * 5 + x * 3) % 101) as f32 / 50.0 - 1.0);
                }
            }
        }
        let classes: Vec<u8> = (0..side * side).map(|i| (i % 4) as u8).collect();
        (hr, ComponentMask::new(side, side, classes).unwrap())
    }

    #[test]
    fn record_has_contracted_scales() {
        let (hr, mask) = toy_hr(32);
        let rec = prepare_record(&hr, &mask, &SmoothingConfig::default()).unwrap();
        assert_eq!(rec.block.shape(), Shape::new(1, 6, 8, 8));
        assert_eq!(rec.mid.shape(), Shape::new(1, 3, 16, 16));
        assert_eq!(rec.hr.shape(), Shape::new(1, 3, 32, 32));
    }

    #[test]
    fn rejects_mismatched_mask_or_odd_size() {
        let (hr, _) = toy_hr(32);
        let (_, small_mask) = toy_hr(16);
        assert!(prepare_record(&hr, &small_mask, &SmoothingConfig::default()).is_err());
        let (odd, mask30) = toy_hr(30);
        assert!(prepare_record(&odd, &mask30, &SmoothingConfig::default()).is_err());
    }

    #[test]
    fn whole_and_tiled_agree_on_one_tile() {
        let (hr, mask) = toy_hr(32);
        let rec = prepare_record(&hr, &mask, &SmoothingConfig::default()).unwrap();
        let cfg = NetworkConfig { features: 4, res_blocks: 1, shared_backbone_weights: false };
        let net = CagFaceNet::<f32>::build(cfg, 1).unwrap();
        let (_, whole) = infer_whole(&net, &rec.block).unwrap();
        let layout = TileLayout::new(8, 8, BlendKind::Uniform).unwrap();
        let tiled = infer_tiled(&net, &rec.block, &layout).unwrap();
        assert_eq!(whole.shape(), tiled.shape());
        for (a, b) in whole.data().iter().zip(tiled.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn baseline_upsamples_rgb_only() {
        let (hr, mask) = toy_hr(32);
        let rec = prepare_record(&hr, &mask, &SmoothingConfig::default()).unwrap();
        let base = bicubic_baseline(&rec.block).unwrap();
        assert_eq!(base.shape(), Shape::new(1, 3, 32, 32));
    }
}
