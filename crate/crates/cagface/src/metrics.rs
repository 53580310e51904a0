//! Image-quality measures: PSNR, SSIM, MS-SSIM, and the Fréchet distance
//! over a pluggable feature extractor.
//!
//! All pixel metrics operate on 8-bit-range values (0..255); callers
//! denormalize model output first. The shipped feature extractor is a
//! seeded random projection of a 32x32 downsample — cheap and
//! deterministic, but its Fréchet distances are NOT comparable to
//! published scores computed with a pretrained classifier.

use crate::error::{Error, Result};
use crate::resize::resize_bicubic;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 10 * log10(255^2 / MSE); +inf when the images agree exactly.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("psnr shapes differ: {} vs {}", a.shape(), b.shape())));
    }
    let mut se = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x.as_f64() - y.as_f64();
        se += d * d;
    }
    let mse = se / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Luma plane (ITU grayscale would be weighted; plain mean matches the
/// rest of this crate's gray convention).
fn to_gray(t: &Tensor<f64>) -> Vec<f64> {
    let s = t.shape();
    let plane = s.h * s.w;
    if s.c == 1 {
        return t.data().to_vec();
    }
    let mut g = vec![0.0; plane];
    for c in 0..s.c {
        for i in 0..plane {
            g[i] += t.data()[c * plane + i];
        }
    }
    for v in &mut g {
        *v /= s.c as f64;
    }
    g
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

struct SsimTerms {
    /// mean of the full SSIM index over windows
    mean_ssim: f64,
    /// mean of the contrast-structure term only (used by MS-SSIM)
    mean_cs: f64,
}

/// Valid-window SSIM on grayscale planes.
fn ssim_terms(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<SsimTerms> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let win = gaussian_window();
    // separable pass: horizontal then vertical weighted moments
    let hw = w - SSIM_WINDOW + 1;
    let hh = h - SSIM_WINDOW + 1;
    let blur = |img: &[f64]| -> Vec<f64> {
        let mut mid = vec![0.0; h * hw];
        for y in 0..h {
            for x in 0..hw {
                let mut acc = 0.0;
                for k in 0..SSIM_WINDOW {
                    acc += win[k] * img[y * w + x + k];
                }
                mid[y * hw + x] = acc;
            }
        }
        let mut out = vec![0.0; hh * hw];
        for y in 0..hh {
            for x in 0..hw {
                let mut acc = 0.0;
                for k in 0..SSIM_WINDOW {
                    acc += win[k] * mid[(y + k) * hw + x];
                }
                out[y * hw + x] = acc;
            }
        }
        out
    };
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = blur(a);
    let mu_b = blur(b);
    let m_aa = blur(&aa);
    let m_bb = blur(&bb);
    let m_ab = blur(&ab);

    let mut sum_ssim = 0.0;
    let mut sum_cs = 0.0;
    let n = hh * hw;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = m_aa[i] - ma * ma;
        let vb = m_bb[i] - mb * mb;
        let cov = m_ab[i] - ma * mb;
        let cs = (2.0 * cov + C2) / (va + vb + C2);
        let lum = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        sum_cs += cs;
        sum_ssim += lum * cs;
    }
    Ok(SsimTerms { mean_ssim: sum_ssim / n as f64, mean_cs: sum_cs / n as f64 })
}

/// Single-scale SSIM on (possibly multi-channel) images in 0..255 range.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("ssim shapes differ: {} vs {}", a.shape(), b.shape())));
    }
    let s = a.shape();
    let ga = to_gray(&a.to_f64());
    let gb = to_gray(&b.to_f64());
    Ok(ssim_terms(&ga, &gb, s.h, s.w)?.mean_ssim)
}

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn halve(img: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (nh, nw) = (h / 2, w / 2);
    let mut out = vec![0.0; nh * nw];
    for y in 0..nh {
        for x in 0..nw {
            out[y * nw + x] = 0.25
                * (img[2 * y * w + 2 * x]
                    + img[2 * y * w + 2 * x + 1]
                    + img[(2 * y + 1) * w + 2 * x]
                    + img[(2 * y + 1) * w + 2 * x + 1]);
        }
    }
    (out, nh, nw)
}

/// Multi-scale SSIM. Levels drop automatically (down to 1) if the image
/// is too small for all five scales; the weights of the used levels are
/// renormalized.
pub fn ms_ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ms_ssim_levels(a, b, MS_SSIM_WEIGHTS.len())
}

pub fn ms_ssim_levels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, max_levels: usize) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("ms-ssim shapes differ: {} vs {}", a.shape(), b.shape())));
    }
    if max_levels == 0 || max_levels > MS_SSIM_WEIGHTS.len() {
        return Err(Error::Contract(format!("levels must be 1..=5, got {max_levels}")));
    }
    let s = a.shape();
    // how many dyadic halvings still leave room for the window
    let min_dim = s.h.min(s.w);
    let mut feasible = 1;
    while feasible < max_levels && min_dim / (1 << feasible) >= SSIM_WINDOW {
        feasible += 1;
    }
    let levels = feasible;
    let weights = &MS_SSIM_WEIGHTS[..levels];
    let wsum: f64 = weights.iter().sum();

    let (mut ga, mut gb) = (to_gray(&a.to_f64()), to_gray(&b.to_f64()));
    let (mut h, mut w) = (s.h, s.w);
    let mut score = 1.0f64;
    for (li, &wt) in weights.iter().enumerate() {
        let terms = ssim_terms(&ga, &gb, h, w)?;
        let factor = if li + 1 == levels { terms.mean_ssim } else { terms.mean_cs };
        // negative CS values cannot be raised to fractional powers; clamp
        score *= factor.max(0.0).powf(wt / wsum);
        if li + 1 < levels {
            let (na, nh, nw) = halve(&ga, h, w);
            let (nb, _, _) = halve(&gb, h, w);
            ga = na;
            gb = nb;
            h = nh;
            w = nw;
        }
    }
    Ok(score)
}

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n_samples: usize,
}

pub fn feature_stats(features: &[Vec<f64>]) -> Result<FeatureStats> {
    if features.len() < 2 {
        return Err(Error::Contract(format!(
            "need >= 2 samples for covariance, got {}",
            features.len()
        )));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::Shape("feature vectors have mixed dimensions".into()));
    }
    let n = features.len();
    let mut mu = DVector::zeros(d);
    for f in features {
        for i in 0..d {
            mu[i] += f[i];
        }
    }
    mu /= n as f64;
    let mut sigma = DMatrix::zeros(d, d);
    for f in features {
        let dev = DVector::from_iterator(d, f.iter().enumerate().map(|(i, v)| v - mu[i]));
        sigma += &dev * dev.transpose();
    }
    sigma /= (n - 1) as f64;
    Ok(FeatureStats { mu, sigma, n_samples: n })
}

/// Symmetric PSD square root by eigendecomposition; eigenvalues down to
/// -1e-8 are treated as zero.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-8 {
            return Err(Error::Numeric(format!(
                "matrix is indefinite beyond tolerance (eigenvalue {v})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&vals) * q.transpose())
}

/// ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2}), with the matrix
/// square root taken as (S_r^{1/2} S_g S_r^{1/2})^{1/2}, which has the
/// same trace and stays symmetric.
pub fn frechet_distance(r: &FeatureStats, g: &FeatureStats) -> Result<f64> {
    if r.mu.len() != g.mu.len() {
        return Err(Error::Shape(format!(
            "feature dims differ: {} vs {}",
            r.mu.len(),
            g.mu.len()
        )));
    }
    let diff = &r.mu - &g.mu;
    let mean_term = diff.dot(&diff);
    let sr = sqrt_psd(&r.sigma)?;
    let inner = &sr * &g.sigma * &sr;
    let cross = sqrt_psd(&inner)?;
    let trace = r.sigma.trace() + g.sigma.trace() - 2.0 * cross.trace();
    Ok((mean_term + trace).max(0.0))
}

/// The shipped desk-scale extractor: bicubic 32x32 grayscale downsample
/// followed by a fixed-seed random projection to `dim` features.
pub struct RandomProjectionExtractor {
    dim: usize,
    matrix: Vec<f64>, // dim x 1024
}

pub const EXTRACTOR_SIDE: usize = 32;

impl RandomProjectionExtractor {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = EXTRACTOR_SIDE * EXTRACTOR_SIDE;
        let scale = 1.0 / (cols as f64).sqrt();
        let matrix = (0..dim * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        RandomProjectionExtractor { dim, matrix }
    }

    pub fn extract<T: Scalar>(&self, image: &Tensor<T>) -> Result<Vec<f64>> {
        let small = resize_bicubic(image, EXTRACTOR_SIDE, EXTRACTOR_SIDE)?;
        let gray = to_gray(&small.to_f64());
        let cols = EXTRACTOR_SIDE * EXTRACTOR_SIDE;
        Ok((0..self.dim)
            .map(|r| {
                let row = &self.matrix[r * cols..(r + 1) * cols];
                row.iter().zip(&gray).map(|(w, v)| w * v).sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(h: usize, w: usize, salt: usize) -> Tensor<f64> {
        let mut t = Tensor::zeros(Shape::new(1, 1, h, w));
        for y in 0..h {
            for x in 0..w {
                t.set(0, 0, y, x, ((y * 31 + x * 17 + salt * 7) % 251) as f64);
            }
        }
        t
    }

    #[test]
    fn psnr_constant_offset_oracle() {
        let a = textured(16, 16, 0);
        let b = a.map(|v| v + 16.0);
        let p = psnr(&a, &b).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
        assert!((p - expected).abs() < 1e-12, "{p} vs {expected}");
        assert!((expected - 24.0484).abs() < 1e-3);
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = textured(8, 8, 1);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_log_law() {
        // doubling the constant error quadruples MSE: -10 log10 4
        let a = textured(8, 8, 2);
        let b1 = a.map(|v| v + 8.0);
        let b2 = a.map(|v| v + 16.0);
        let d = psnr(&a, &b1).unwrap() - psnr(&a, &b2).unwrap();
        assert!((d - 20.0 * 2.0f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn ssim_self_is_one() {
        let a = textured(32, 32, 3);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_symmetry_and_degradation() {
        let a = textured(32, 32, 4);
        let b = a.map(|v| (v * 0.9 + 20.0).min(255.0));
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 1.0);
    }

    #[test]
    fn ssim_inverted_image_is_negative() {
        let a = textured(32, 32, 5);
        let inv = a.map(|v| 255.0 - v);
        assert!(ssim(&a, &inv).unwrap() < -0.3);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = textured(8, 8, 0);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ms_ssim_self_is_one() {
        let a = textured(192, 192, 6);
        assert!((ms_ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ms_ssim_monotone_under_noise() {
        let a = textured(96, 96, 7);
        let mut prev = 1.1;
        for sigma in [5.0, 15.0, 45.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let data: Vec<f64> = a
                .data()
                .iter()
                .map(|&v| (v + sigma * rng.gen_range(-1.0..1.0)).clamp(0.0, 255.0))
                .collect();
            let noisy = Tensor::from_vec(a.shape(), data).unwrap();
            let score = ms_ssim(&a, &noisy).unwrap();
            assert!(score < prev, "sigma {sigma}: {score} !< {prev}");
            prev = score;
        }
    }

    #[test]
    fn ms_ssim_single_level_is_ssim() {
        let a = textured(48, 48, 8);
        let b = a.map(|v| v * 0.95);
        let one = ms_ssim_levels(&a, &b, 1).unwrap();
        let plain = ssim(&a, &b).unwrap();
        assert!((one - plain.max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn ms_ssim_auto_reduces_levels() {
        // 24x24 can only support one halving before the window no longer fits
        let a = textured(24, 24, 9);
        let b = a.map(|v| v * 0.9);
        assert!(ms_ssim(&a, &b).is_ok());
    }

    #[test]
    fn feature_stats_two_point_oracle() {
        let v = vec![1.0, -2.0, 0.5];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let stats = feature_stats(&[v.clone(), neg]).unwrap();
        assert!(stats.mu.iter().all(|&m| m.abs() < 1e-15));
        // unbiased covariance of {v, -v} is 2 v v^T
        for i in 0..3 {
            for j in 0..3 {
                assert!((stats.sigma[(i, j)] - 2.0 * v[i] * v[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn feature_stats_constant_is_zero_sigma() {
        let f = vec![vec![3.0, 4.0]; 5];
        let stats = feature_stats(&f).unwrap();
        assert!(stats.sigma.iter().all(|&v| v.abs() < 1e-12));
        assert!(feature_stats(&f[..1]).is_err());
    }

    fn diag_stats(d: usize, mu: f64, var: f64) -> FeatureStats {
        FeatureStats {
            mu: DVector::from_element(d, mu),
            sigma: DMatrix::identity(d, d) * var,
            n_samples: d + 2,
        }
    }

    #[test]
    fn frechet_diagonal_oracle() {
        // Sigma_r = I, Sigma_g = 4I: Tr(I + 4I - 2*2I) = d
        for d in [2usize, 5, 16] {
            let r = diag_stats(d, 0.0, 1.0);
            let g = diag_stats(d, 0.0, 4.0);
            let fid = frechet_distance(&r, &g).unwrap();
            assert!((fid - d as f64).abs() < 1e-6, "d={d}: {fid}");
        }
    }

    #[test]
    fn frechet_identical_is_zero_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let feats: Vec<Vec<f64>> =
            (0..40).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let other: Vec<Vec<f64>> =
            (0..40).map(|_| (0..6).map(|_| rng.gen_range(-2.0..1.5)).collect()).collect();
        let r = feature_stats(&feats).unwrap();
        let g = feature_stats(&other).unwrap();
        assert!(frechet_distance(&r, &r).unwrap() < 1e-6);
        let rg = frechet_distance(&r, &g).unwrap();
        let gr = frechet_distance(&g, &r).unwrap();
        assert!((rg - gr).abs() < 1e-8);
        assert!(rg >= 0.0);
    }

    #[test]
    fn frechet_mean_shift_oracle() {
        let r = diag_stats(4, 0.0, 1.0);
        let g = diag_stats(4, 1.5, 1.0);
        // equal covariances: distance is just the squared mean gap
        let fid = frechet_distance(&r, &g).unwrap();
        assert!((fid - 4.0 * 1.5 * 1.5).abs() < 1e-8);
    }

    #[test]
    fn frechet_rejects_dim_mismatch() {
        let r = diag_stats(3, 0.0, 1.0);
        let g = diag_stats(4, 0.0, 1.0);
        assert!(frechet_distance(&r, &g).is_err());
    }

    #[test]
    fn extractor_is_deterministic() {
        let img = textured(64, 64, 10);
        let e1 = RandomProjectionExtractor::new(16, 99);
        let e2 = RandomProjectionExtractor::new(16, 99);
        let f1 = e1.extract(&img).unwrap();
        let f2 = e2.extract(&img).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.len(), 16);
        let e3 = RandomProjectionExtractor::new(16, 100);
        assert_ne!(e3.extract(&img).unwrap(), f1);
    }
}
