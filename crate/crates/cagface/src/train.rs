//! The training loop: batched Huber objective over the intermediate and
//! final reconstructions, adaptive-moment updates, the two-phase protocol
//! (stage 1 first, then stage 2 from the learned stage-1 weights), and a
//! CSV metric log.

use crate::checkpoint::{self, CheckpointMeta};
use crate::dataset::PatchSample;
use crate::error::{Error, Result};
use crate::graph::Tape;
use crate::net::{CagFaceNet, ModelKind};
use crate::optim::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Train stage 1 alone on the 2x objective.
    Stage1Only,
    /// Freeze stage 1 (loaded from a checkpoint) and train stage 2.
    Stage2AfterInit,
    /// Train both stages together on the weighted two-term objective.
    Joint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub phase: Phase,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub w_intermediate: f64,
    pub w_final: f64,
    pub delta: f64,
    pub seed: u64,
    /// Validate (and consider checkpointing) every this many steps.
    pub val_every: usize,
    /// Required by Stage2AfterInit: the phase-1 output checkpoint.
    pub stage1_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase: Phase::Joint,
            steps: 200,
            batch: 4,
            lr: 1e-4,
            w_intermediate: 1.0,
            w_final: 1.0,
            delta: 1.0,
            seed: 0,
            val_every: 50,
            stage1_checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.steps == 0 {
            return Err(Error::Config("steps and batch must be >= 1".into()));
        }
        if self.w_intermediate < 0.0 || self.w_final < 0.0
            || (self.w_intermediate == 0.0 && self.w_final == 0.0)
        {
            return Err(Error::Config(format!(
                "loss weights must be >= 0 and not both zero, got ({}, {})",
                self.w_intermediate, self.w_final
            )));
        }
        if self.delta <= 0.0 {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.phase == Phase::Stage2AfterInit && self.stage1_checkpoint.is_none() {
            return Err(Error::Config(
                "phase stage2-after-init needs a stage-1 checkpoint".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub val_psnr: Option<f64>,
    pub val_ssim: Option<f64>,
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub log: Vec<LogRow>,
    pub best_val_psnr: Option<f64>,
    pub steps_run: usize,
}

/// Stack (1,c,h,w) samples into one (n,c,h,w) batch.
fn stack<T: Scalar>(tensors: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let s = tensors[0].shape();
    let mut out = Tensor::zeros(Shape::new(tensors.len(), s.c, s.h, s.w));
    let plane = s.c * s.h * s.w;
    for (i, t) in tensors.iter().enumerate() {
        if t.shape() != s {
            return Err(Error::Shape("batch members have mixed shapes".into()));
        }
        out.data_mut()[i * plane..(i + 1) * plane].copy_from_slice(t.data());
    }
    Ok(out)
}

/// Mean PSNR of the network's 4x output against ground truth over a set
/// of samples, measured on the 0..255 scale.
pub fn validate_psnr_ssim<T: Scalar>(
    net: &CagFaceNet<T>,
    samples: &[PatchSample<T>],
) -> Result<(f64, f64)> {
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for s in samples {
        let mut tape = Tape::new();
        let x = tape.input(s.block.clone());
        let (_, final_hr) = net.forward(&mut tape, x)?;
        let pred = to_255(tape.value(final_hr));
        let truth = to_255(&s.hr);
        let p = crate::metrics::psnr(&pred, &truth)?;
        // identical images would make the mean infinite; cap for logging
        psnr_sum += p.min(99.0);
        ssim_sum += crate::metrics::ssim(&pred, &truth)?;
    }
    let n = samples.len() as f64;
    Ok((psnr_sum / n, ssim_sum / n))
}

/// Map [-1,1] model range onto the 0..255 metric scale (continuous, clamped).
pub fn to_255<T: Scalar>(t: &Tensor<T>) -> Tensor<f64> {
    t.to_f64().map(|v| ((v + 1.0) * 127.5).clamp(0.0, 255.0))
}

fn write_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "step,loss,val_psnr,val_ssim,lr")?;
    for r in rows {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(
            f,
            "{},{:.8},{},{},{:.8}",
            r.step,
            r.loss,
            fmt_opt(r.val_psnr),
            fmt_opt(r.val_ssim),
            r.lr
        )?;
    }
    Ok(())
}

/// Run the loop. `train_samples` is the patch pool; `val_samples` drives
/// the periodic PSNR/SSIM check and best-checkpoint selection. When
/// `run_dir` is given, `log.csv`, `last.ckpt`, and `best.ckpt` are
/// written there.
pub fn train<T: Scalar>(
    net: &mut CagFaceNet<T>,
    train_samples: &[PatchSample<T>],
    val_samples: &[PatchSample<T>],
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_samples.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    if let Some(path) = &cfg.stage1_checkpoint {
        checkpoint::load_into(path, &mut net.params)?;
    }
    match cfg.phase {
        Phase::Stage1Only => net.set_trainable(true, false),
        Phase::Stage2AfterInit => net.set_trainable(false, true),
        Phase::Joint => net.set_trainable(true, true),
    }

    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut opt = Adam::new(adam_cfg, &net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.steps);
    let mut best_val_psnr: Option<f64> = None;
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(dir)?;
    }

    for step in 1..=cfg.steps {
        let picks: Vec<&PatchSample<T>> = (0..cfg.batch)
            .map(|_| &train_samples[rng.gen_range(0..train_samples.len())])
            .collect();
        let block = stack(&picks.iter().map(|s| &s.block).collect::<Vec<_>>())?;
        let mid = stack(&picks.iter().map(|s| &s.mid).collect::<Vec<_>>())?;
        let hr = stack(&picks.iter().map(|s| &s.hr).collect::<Vec<_>>())?;

        let mut tape = Tape::new();
        let x = tape.input(block);
        let loss = match cfg.phase {
            Phase::Stage1Only => {
                let (inter, _) = net.forward_stage1(&mut tape, x)?;
                let t_mid = tape.input(mid);
                tape.huber_mean(inter, t_mid, cfg.delta)?
            }
            Phase::Stage2AfterInit => {
                let (_, final_hr) = net.forward(&mut tape, x)?;
                let t_hr = tape.input(hr);
                tape.huber_mean(final_hr, t_hr, cfg.delta)?
            }
            Phase::Joint => {
                let (inter, final_hr) = net.forward(&mut tape, x)?;
                let t_mid = tape.input(mid);
                let t_hr = tape.input(hr);
                let l_i = tape.huber_mean(inter, t_mid, cfg.delta)?;
                let l_f = tape.huber_mean(final_hr, t_hr, cfg.delta)?;
                tape.weighted_sum(vec![(l_i, cfg.w_intermediate), (l_f, cfg.w_final)])?
            }
        };
        let loss_value = tape.value(loss).scalar_value()?.as_f64();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("loss became {loss_value} at step {step}")));
        }
        net.params.zero_grads();
        tape.backward(loss, &mut net.params)?;
        opt.step(&mut net.params)?;

        let mut row = LogRow { step, loss: loss_value, val_psnr: None, val_ssim: None, lr: cfg.lr };
        let due = (cfg.val_every > 0 && step % cfg.val_every == 0) || step == cfg.steps;
        if due && !val_samples.is_empty() {
            let (p, s) = validate_psnr_ssim(net, val_samples)?;
            row.val_psnr = Some(p);
            row.val_ssim = Some(s);
            let improved = best_val_psnr.map(|b| p > b).unwrap_or(true);
            if improved {
                best_val_psnr = Some(p);
                if let Some(dir) = run_dir {
                    save_ckpt(net, dir.join("best.ckpt"), step as u64, best_val_psnr)?;
                }
            }
        }
        log.push(row);
    }

    if let Some(dir) = run_dir {
        save_ckpt(net, dir.join("last.ckpt"), cfg.steps as u64, best_val_psnr)?;
        write_csv(&dir.join("log.csv"), &log)?;
    }
    Ok(TrainOutcome { log, best_val_psnr, steps_run: cfg.steps })
}

/// Training loop for the single-stage 4x ablation: final-term loss only,
/// no phase protocol.
pub fn train_single<T: Scalar>(
    net: &mut crate::net::SingleStageNet<T>,
    train_samples: &[PatchSample<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_samples.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut opt = Adam::new(adam_cfg, &net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let picks: Vec<&PatchSample<T>> = (0..cfg.batch)
            .map(|_| &train_samples[rng.gen_range(0..train_samples.len())])
            .collect();
        let block = stack(&picks.iter().map(|s| &s.block).collect::<Vec<_>>())?;
        let hr = stack(&picks.iter().map(|s| &s.hr).collect::<Vec<_>>())?;
        let mut tape = Tape::new();
        let x = tape.input(block);
        let out = net.forward(&mut tape, x)?;
        let t_hr = tape.input(hr);
        let loss = tape.huber_mean(out, t_hr, cfg.delta)?;
        let loss_value = tape.value(loss).scalar_value()?.as_f64();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("loss became {loss_value} at step {step}")));
        }
        net.params.zero_grads();
        tape.backward(loss, &mut net.params)?;
        opt.step(&mut net.params)?;
        log.push(LogRow { step, loss: loss_value, val_psnr: None, val_ssim: None, lr: cfg.lr });
    }
    Ok(TrainOutcome { log, best_val_psnr: None, steps_run: cfg.steps })
}

/// Mean 4x-output PSNR of the single-stage net over samples (0..255 scale).
pub fn single_psnr<T: Scalar>(
    net: &crate::net::SingleStageNet<T>,
    samples: &[PatchSample<T>],
) -> Result<f64> {
    let mut sum = 0.0;
    for s in samples {
        let mut tape = Tape::new();
        let x = tape.input(s.block.clone());
        let out = net.forward(&mut tape, x)?;
        sum += crate::metrics::psnr(&to_255(tape.value(out)), &to_255(&s.hr))?.min(99.0);
    }
    Ok(sum / samples.len() as f64)
}

fn save_ckpt<T: Scalar>(
    net: &CagFaceNet<T>,
    path: PathBuf,
    step: u64,
    best: Option<f64>,
) -> Result<()> {
    let meta = CheckpointMeta {
        kind: ModelKind::TwoStage,
        config: net.config,
        step,
        best_val_psnr: best,
    };
    checkpoint::save(&path, &meta, &net.params)
}
