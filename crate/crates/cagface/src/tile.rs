//! Overlap-aware tiled inference: reflection-pad the 6-channel LR block to
//! a whole number of tiles, run the network per tile, and blend the 4x
//! outputs with a weight map. Accumulation runs in f64 so that agreeing
//! tiles blend exactly.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use serde::{Deserialize, Serialize};

pub const SCALE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendKind {
    /// Constant weight: plain averaging of overlapping tiles.
    Uniform,
    /// Raised-cosine taper toward tile borders, for seam suppression.
    RaisedCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    pub patch: usize,
    pub stride: usize,
    pub blend: BlendKind,
}

impl TileLayout {
    pub fn new(patch: usize, stride: usize, blend: BlendKind) -> Result<Self> {
        if patch == 0 || stride == 0 || stride > patch {
            return Err(Error::Contract(format!(
                "tile layout needs 0 < stride <= patch, got patch={patch} stride={stride}"
            )));
        }
        Ok(TileLayout { patch, stride, blend })
    }

    /// Blend weights at output (4x) resolution for one tile.
    pub fn weight_map(&self) -> Vec<f64> {
        let side = self.patch * SCALE;
        match self.blend {
            BlendKind::Uniform => vec![1.0; side * side],
            BlendKind::RaisedCosine => {
                // Hann-like taper, floored away from zero so weight sums
                // stay invertible at corners
                let axis: Vec<f64> = (0..side)
                    .map(|i| {
                        let t = (i as f64 + 0.5) / side as f64;
                        (0.5 - 0.5 * (2.0 * std::f64::consts::PI * t).cos()).max(1e-3)
                    })
                    .collect();
                let mut w = vec![0.0; side * side];
                for y in 0..side {
                    for x in 0..side {
                        w[y * side + x] = axis[y] * axis[x];
                    }
                }
                w
            }
        }
    }
}

/// Reflect-pad the bottom/right edges so both spatial dims reach `(h_pad, w_pad)`.
pub fn reflect_pad<T: Scalar>(t: &Tensor<T>, h_pad: usize, w_pad: usize) -> Result<Tensor<T>> {
    let s = t.shape();
    if h_pad < s.h || w_pad < s.w {
        return Err(Error::Shape(format!("cannot pad {s} down to {h_pad}x{w_pad}")));
    }
    if h_pad >= 2 * s.h || w_pad >= 2 * s.w {
        return Err(Error::Shape(format!(
            "reflection pad of {s} to {h_pad}x{w_pad} exceeds mirror range"
        )));
    }
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, h_pad, w_pad));
    for b in 0..s.n {
        for c in 0..s.c {
            for y in 0..h_pad {
                let sy = if y < s.h { y } else { 2 * s.h - 2 - y };
                for x in 0..w_pad {
                    let sx = if x < s.w { x } else { 2 * s.w - 2 - x };
                    out.set(b, c, y, x, t.at(b, c, sy, sx));
                }
            }
        }
    }
    Ok(out)
}

fn padded_extent(len: usize, patch: usize, stride: usize) -> usize {
    if len <= patch {
        patch
    } else {
        // smallest stride grid covering the image
        let steps = (len - patch).div_ceil(stride);
        patch + steps * stride
    }
}

/// Tile positions along one padded axis.
fn tile_starts(padded: usize, patch: usize, stride: usize) -> Vec<usize> {
    (0..=(padded - patch)).step_by(stride).collect()
}

/// Run `forward` over overlapping tiles of the 6-channel block and blend
/// the 4x RGB outputs. `forward` maps (n,6,p,p) -> (n,3,4p,4p).
pub fn tile_infer<T, F>(block: &Tensor<T>, layout: &TileLayout, mut forward: F) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<Tensor<T>>,
{
    let s = block.shape();
    let (p, st) = (layout.patch, layout.stride);
    let h_pad = padded_extent(s.h, p, st);
    let w_pad = padded_extent(s.w, p, st);
    let padded = reflect_pad(block, h_pad, w_pad)?;
    let weights = layout.weight_map();
    let side = p * SCALE;

    let mut acc = vec![0.0f64; s.n * 3 * h_pad * SCALE * w_pad * SCALE];
    let mut wsum = vec![0.0f64; h_pad * SCALE * w_pad * SCALE];
    let out_w = w_pad * SCALE;

    for &ty in &tile_starts(h_pad, p, st) {
        for &tx in &tile_starts(w_pad, p, st) {
            let tile = crate::dataset::crop(&padded, ty, tx, p, p)?;
            let hr = forward(&tile)?;
            let hs = hr.shape();
            if hs != Shape::new(s.n, 3, side, side) {
                return Err(Error::Contract(format!(
                    "tile forward returned {hs}, expected {}",
                    Shape::new(s.n, 3, side, side)
                )));
            }
            for b in 0..s.n {
                for c in 0..3 {
                    for y in 0..side {
                        let oy = ty * SCALE + y;
                        let row = ((b * 3 + c) * h_pad * SCALE + oy) * out_w + tx * SCALE;
                        for x in 0..side {
                            acc[row + x] += weights[y * side + x] * hr.at(b, c, y, x).as_f64();
                        }
                    }
                }
            }
            for y in 0..side {
                let row = (ty * SCALE + y) * out_w + tx * SCALE;
                for x in 0..side {
                    wsum[row + x] += weights[y * side + x];
                }
            }
        }
    }

    // divide, then crop the padding off
    let mut out = Tensor::zeros(Shape::new(s.n, 3, s.h * SCALE, s.w * SCALE));
    for b in 0..s.n {
        for c in 0..3 {
            for y in 0..s.h * SCALE {
                for x in 0..s.w * SCALE {
                    let i = ((b * 3 + c) * h_pad * SCALE + y) * out_w + x;
                    out.set(b, c, y, x, T::of_f64(acc[i] / wsum[y * out_w + x]));
                }
            }
        }
    }
    Ok(out)
}

/// The per-pixel sum of normalized blend weights over the un-cropped
/// padded canvas; used to verify coverage.
pub fn coverage_field(h: usize, w: usize, layout: &TileLayout) -> Result<Vec<f64>> {
    let (p, st) = (layout.patch, layout.stride);
    let h_pad = padded_extent(h, p, st);
    let w_pad = padded_extent(w, p, st);
    let weights = layout.weight_map();
    let side = p * SCALE;
    let out_w = w_pad * SCALE;
    let mut wsum = vec![0.0f64; h_pad * SCALE * out_w];
    for &ty in &tile_starts(h_pad, p, st) {
        for &tx in &tile_starts(w_pad, p, st) {
            for y in 0..side {
                let row = (ty * SCALE + y) * out_w + tx * SCALE;
                for x in 0..side {
                    wsum[row + x] += weights[y * side + x];
                }
            }
        }
    }
    // normalized per-pixel total: after division every pixel's weights sum
    // to exactly 1 by construction; report the pre-division field
    Ok(wsum)
}

/// Nearest-neighbor 4x upsample of the first three channels; the stub
/// network used to verify blending exactness.
pub fn nearest_stub<T: Scalar>(block: &Tensor<T>) -> Result<Tensor<T>> {
    let s = block.shape();
    if s.c < 3 {
        return Err(Error::Shape(format!("stub needs >= 3 channels, got {s}")));
    }
    let mut out = Tensor::zeros(Shape::new(s.n, 3, s.h * SCALE, s.w * SCALE));
    for b in 0..s.n {
        for c in 0..3 {
            for y in 0..s.h * SCALE {
                for x in 0..s.w * SCALE {
                    out.set(b, c, y, x, block.at(b, c, y / SCALE, x / SCALE));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize) -> Tensor<f32> {
        let mut t = Tensor::zeros(Shape::new(1, 6, h, w));
        for c in 0..6 {
            for y in 0..h {
                for x in 0..w {
                    t.set(0, c, y, x, ((c * 113 + y * 31 + x * 7) % 97) as f32 / 96.0 - 0.5);
                }
            }
        }
        t
    }

    #[test]
    fn reflect_pad_mirrors_edges() {
        let mut t = Tensor::<f64>::zeros(Shape::new(1, 1, 2, 3));
        for y in 0..2 {
            for x in 0..3 {
                t.set(0, 0, y, x, (y * 3 + x) as f64);
            }
        }
        let p = reflect_pad(&t, 3, 4).unwrap();
        assert_eq!(p.at(0, 0, 2, 0), t.at(0, 0, 0, 0)); // row 2 mirrors row 0
        assert_eq!(p.at(0, 0, 0, 3), t.at(0, 0, 0, 1)); // col 3 mirrors col 1
        assert_eq!(p.at(0, 0, 2, 3), t.at(0, 0, 0, 1));
        assert!(reflect_pad(&t, 1, 3).is_err());
        assert!(reflect_pad(&t, 4, 3).is_err(), "mirror range exceeded");
    }

    #[test]
    fn stub_tiling_is_exact_for_all_strides() {
        let block = textured(16, 16);
        let direct = nearest_stub(&block).unwrap();
        for stride in [2usize, 4, 8] {
            let layout = TileLayout::new(8, stride, BlendKind::Uniform).unwrap();
            let tiled = tile_infer(&block, &layout, nearest_stub).unwrap();
            assert_eq!(tiled.shape(), direct.shape());
            for (a, b) in tiled.data().iter().zip(direct.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "stride {stride}");
            }
        }
    }

    #[test]
    fn one_tile_case_is_whole_face() {
        let block = textured(8, 8);
        let layout = TileLayout::new(8, 8, BlendKind::Uniform).unwrap();
        let tiled = tile_infer(&block, &layout, nearest_stub).unwrap();
        let whole = nearest_stub(&block).unwrap();
        assert_eq!(tiled.data(), whole.data());
    }

    #[test]
    fn shape_contract_256_to_1024() {
        let block = textured(256, 256);
        let layout = TileLayout::new(128, 64, BlendKind::Uniform).unwrap();
        let out = tile_infer(&block, &layout, nearest_stub).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 3, 1024, 1024));
    }

    #[test]
    fn non_divisible_image_round_trips_through_padding() {
        let block = textured(11, 13);
        let layout = TileLayout::new(8, 4, BlendKind::Uniform).unwrap();
        let tiled = tile_infer(&block, &layout, nearest_stub).unwrap();
        let direct = nearest_stub(&block).unwrap();
        assert_eq!(tiled.shape(), direct.shape());
        for (a, b) in tiled.data().iter().zip(direct.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn raised_cosine_agreeing_tiles_stay_close() {
        let block = textured(16, 16);
        let layout = TileLayout::new(8, 4, BlendKind::RaisedCosine).unwrap();
        let tiled = tile_infer(&block, &layout, nearest_stub).unwrap();
        let direct = nearest_stub(&block).unwrap();
        for (a, b) in tiled.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn coverage_is_positive_everywhere() {
        for blend in [BlendKind::Uniform, BlendKind::RaisedCosine] {
            let layout = TileLayout::new(8, 4, blend).unwrap();
            let field = coverage_field(20, 20, &layout).unwrap();
            assert!(field.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn layout_rejects_bad_strides() {
        assert!(TileLayout::new(8, 0, BlendKind::Uniform).is_err());
        assert!(TileLayout::new(8, 9, BlendKind::Uniform).is_err());
        assert!(TileLayout::new(0, 1, BlendKind::Uniform).is_err());
    }
}
