//! Self-verification suites: gradient checks, rearrangement round-trips,
//! parameter-count replay, metric oracles, and checkpoint integrity. Each
//! check prints one PASS/FAIL line; any failure exits nonzero.

use anyhow::{bail, Result};
use cagface::conv::ConvParams;
use cagface::graph::{ParamSet, Tape};
use cagface::net::{self, CagFaceNet, NetworkConfig};
use cagface::rearrange::{depth_to_space, space_to_depth};
use cagface::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Suite {
    failures: usize,
}

impl Suite {
    fn check(&mut self, name: &str, outcome: Result<bool>) {
        match outcome {
            Ok(true) => println!("PASS {name}"),
            Ok(false) => {
                println!("FAIL {name}");
                self.failures += 1;
            }
            Err(e) => {
                println!("FAIL {name} ({e:#})");
                self.failures += 1;
            }
        }
    }
}

pub fn run(suite: &str) -> Result<()> {
    let mut s = Suite { failures: 0 };
    let all = suite == "all";
    if all || suite == "grad" {
        grad_suite(&mut s);
    }
    if all || suite == "roundtrip" {
        roundtrip_suite(&mut s);
    }
    if all || suite == "counts" {
        counts_suite(&mut s);
    }
    if all || suite == "metrics" {
        metrics_suite(&mut s);
    }
    if all || suite == "checkpoint" {
        checkpoint_suite(&mut s);
    }
    if s.failures > 0 {
        bail!("{} check(s) failed", s.failures);
    }
    println!("all checks passed");
    Ok(())
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn grad_suite(s: &mut Suite) {
    // a small graph exercising every differentiable op: conv, relu, add,
    // mul, concat, space/depth rearrangement, and the Huber head
    s.check("grad: composite graph max rel err < 1e-4", {
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let f = 4usize;
            let mut params = ParamSet::<f64>::new();
            let mk = |kh: usize, cin: usize, cout: usize, rng: &mut ChaCha8Rng| {
                let mut c = ConvParams::zeros(kh, kh, cin, cout);
                for w in c.weights.iter_mut() {
                    *w = rng.gen_range(-0.3..0.3);
                }
                for b in c.bias.iter_mut() {
                    *b = rng.gen_range(-0.1..0.1);
                }
                c
            };
            let stem = params.add_conv("stem", mk(3, 6, f, &mut rng));
            let mid = params.add_conv("mid", mk(3, f, f, &mut rng));
            let expand = params.add_conv("expand", mk(3, 2 * f, 4 * f, &mut rng));
            let head = params.add_conv("head", mk(3, f, 3, &mut rng));
            let x = random_tensor(&mut rng, Shape::new(1, 6, 6, 6)).map(|v| v + 3.0);
            let target = random_tensor(&mut rng, Shape::new(1, 3, 12, 12));
            let report = cagface::gradcheck::grad_check_params(
                &mut params,
                |p| {
                    let mut tape = Tape::new();
                    let xin = tape.input(x.clone());
                    let a = tape.conv2d(p, stem, xin)?;
                    let r = tape.relu(a);
                    let b = tape.conv2d(p, mid, r)?;
                    let skip = tape.add(b, a)?;
                    let m = tape.mul(skip, skip)?;
                    let cat = tape.concat_channels(m, skip)?;
                    let e = tape.conv2d(p, expand, cat)?;
                    let up = tape.depth_to_space(e, 2)?;
                    let packed = tape.space_to_depth(up, 2)?;
                    let back = tape.depth_to_space(packed, 2)?;
                    let y = tape.conv2d(p, head, back)?;
                    let t = tape.input(target.clone());
                    let loss = tape.huber_mean(y, t, 1.0)?;
                    Ok((tape, loss))
                },
                6,
                1e-6,
                1e-4,
                2,
            )?;
            Ok(report.passed())
        })()
    });
    s.check("grad: full two-stage graph max rel err < 1e-4", {
        (|| {
            let cfg = NetworkConfig { features: 3, res_blocks: 1, shared_backbone_weights: false };
            let net64 = CagFaceNet::<f64>::build(cfg, 3)?;
            let mut params = net64.params.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let x = random_tensor(&mut rng, Shape::new(1, 6, 4, 4));
            let target = random_tensor(&mut rng, Shape::new(1, 3, 16, 16));
            let t2 = random_tensor(&mut rng, Shape::new(1, 3, 8, 8));
            let report = cagface::gradcheck::grad_check_params(
                &mut params,
                |p| {
                    let mut probe = CagFaceNet::<f64>::build(cfg, 3)?;
                    probe.params = p.clone();
                    let mut tape = Tape::new();
                    let xin = tape.input(x.clone());
                    let (inter, final_hr) = probe.forward(&mut tape, xin)?;
                    let tm = tape.input(t2.clone());
                    let th = tape.input(target.clone());
                    let li = tape.huber_mean(inter, tm, 1.0)?;
                    let lf = tape.huber_mean(final_hr, th, 1.0)?;
                    let loss = tape.weighted_sum(vec![(li, 1.0), (lf, 1.0)])?;
                    Ok((tape, loss))
                },
                4,
                1e-6,
                1e-4,
                5,
            )?;
            Ok(report.passed())
        })()
    });
}

fn roundtrip_suite(s: &mut Suite) {
    s.check("roundtrip: depth_to_space(space_to_depth(x,2),2) == x, 200 tensors", {
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            for _ in 0..200 {
                let n = rng.gen_range(1..3);
                let c = rng.gen_range(1..5);
                let h = rng.gen_range(1..7) * 2;
                let w = rng.gen_range(1..7) * 2;
                let x = random_tensor(&mut rng, Shape::new(n, c, h, w));
                let back = depth_to_space(&space_to_depth(&x, 2)?, 2)?;
                if back.shape() != x.shape() {
                    return Ok(false);
                }
                let same = back
                    .data()
                    .iter()
                    .zip(x.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    return Ok(false);
                }
            }
            Ok(true)
        })()
    });
}

fn counts_suite(s: &mut Suite) {
    s.check("counts: printed-row replay totals 21,881,859 / 38,952,791", {
        Ok(net::table1_replay_totals() == (21_881_859, 38_952_791))
    });
    s.check("counts: built F=256/L=16 rows (stem/backbone/mixer)", {
        (|| {
            let net = CagFaceNet::<f32>::build(NetworkConfig::paper(), 0)?;
            let c = net.count_parameters();
            let row = |n: &str| c.row(n).map(|r| (r.kernel, r.bias));
            Ok(row("stage1.stem") == Some((13_824, 256))
                && row("stage1.backbone.conv_a") == Some((9_437_184, 4_096))
                && row("stage1.backbone.conv_b") == Some((9_437_184, 4_096))
                && row("stage2.up.mixer") == Some((81, 3)))
        })()
    });
}

fn metrics_suite(s: &mut Suite) {
    use cagface::metrics;
    s.check("metrics: PSNR of constant-16 offset = 10*log10(255^2/256)", {
        (|| {
            let a = Tensor::<f64>::filled(Shape::new(1, 1, 8, 8), 100.0);
            let b = Tensor::<f64>::filled(Shape::new(1, 1, 8, 8), 116.0);
            let expected = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
            Ok((metrics::psnr(&a, &b)? - expected).abs() < 0.01)
        })()
    });
    s.check("metrics: SSIM(x,x) = 1 +- 1e-9", {
        (|| {
            let mut rng = ChaCha8Rng::seed_from_u64(20);
            let x = random_tensor(&mut rng, Shape::new(1, 1, 32, 32)).map(|v| (v + 1.0) * 127.5);
            Ok((metrics::ssim(&x, &x)? - 1.0).abs() < 1e-9)
        })()
    });
    s.check("metrics: Frechet (I, 4I) diagonal = d; FID(X,X) < 1e-6; symmetry", {
        (|| {
            use nalgebra::{DMatrix, DVector};
            let d = 8;
            let r = metrics::FeatureStats {
                mu: DVector::zeros(d),
                sigma: DMatrix::identity(d, d),
                n_samples: d + 2,
            };
            let g = metrics::FeatureStats {
                mu: DVector::zeros(d),
                sigma: DMatrix::identity(d, d) * 4.0,
                n_samples: d + 2,
            };
            let diag_ok = (metrics::frechet_distance(&r, &g)? - d as f64).abs() < 1e-6;
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let feats: Vec<Vec<f64>> =
                (0..30).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let other: Vec<Vec<f64>> =
                (0..30).map(|_| (0..5).map(|_| rng.gen_range(-1.5..0.5)).collect()).collect();
            let sx = metrics::feature_stats(&feats)?;
            let sy = metrics::feature_stats(&other)?;
            let self_ok = metrics::frechet_distance(&sx, &sx)? < 1e-6;
            let sym_ok = (metrics::frechet_distance(&sx, &sy)?
                - metrics::frechet_distance(&sy, &sx)?)
                .abs()
                < 1e-8;
            Ok(diag_ok && self_ok && sym_ok)
        })()
    });
}

fn checkpoint_suite(s: &mut Suite) {
    use cagface::checkpoint::{self, CheckpointMeta};
    use cagface::net::ModelKind;
    let cfg = NetworkConfig { features: 4, res_blocks: 2, shared_backbone_weights: false };
    s.check("checkpoint: save/load round-trip is bit-exact", {
        (|| {
            let dir = std::env::temp_dir().join(format!("cagface-verify-{}", std::process::id()));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("rt.ckpt");
            let net = CagFaceNet::<f32>::build(cfg, 30)?;
            let meta = CheckpointMeta { kind: ModelKind::TwoStage, config: cfg, step: 1, best_val_psnr: None };
            checkpoint::save(&path, &meta, &net.params)?;
            let mut net2 = CagFaceNet::<f32>::build(cfg, 31)?;
            checkpoint::load_into(&path, &mut net2.params)?;
            let ok = net
                .params
                .iter()
                .zip(net2.params.iter())
                .all(|((_, a), (_, b))| {
                    a.conv.weights.iter().zip(&b.conv.weights).all(|(x, y)| x.to_bits() == y.to_bits())
                });
            std::fs::remove_dir_all(&dir).ok();
            Ok(ok)
        })()
    });
    s.check("checkpoint: corrupted file is rejected", {
        (|| {
            let dir = std::env::temp_dir().join(format!("cagface-verify-bad-{}", std::process::id()));
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("bad.ckpt");
            let net = CagFaceNet::<f32>::build(cfg, 32)?;
            let meta = CheckpointMeta { kind: ModelKind::TwoStage, config: cfg, step: 1, best_val_psnr: None };
            checkpoint::save(&path, &meta, &net.params)?;
            let mut bytes = std::fs::read(&path)?;
            bytes[0] ^= 0xFF;
            std::fs::write(&path, bytes)?;
            let mut net2 = CagFaceNet::<f32>::build(cfg, 33)?;
            let rejected = checkpoint::load_into(&path, &mut net2.params).is_err();
            std::fs::remove_dir_all(&dir).ok();
            Ok(rejected)
        })()
    });
}
