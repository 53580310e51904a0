use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use cagface::dataset::{self, Split};
use cagface::imageio;
use cagface::net::{CagFaceNet, SingleStageNet};
use cagface::pipeline;
use cagface::tensor::Tensor;
use cagface::tile::{BlendKind, TileLayout};
use cagface::train::{self, TrainConfig};
use cagface::attention::SmoothingConfig;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

fn mask_path_for(data_dir: &Path, image_rel: &str) -> PathBuf {
    let stem = Path::new(image_rel).file_stem().unwrap_or_default().to_string_lossy();
    data_dir.join("masks").join(format!("{stem}.mask.png"))
}

pub fn prepare(data_dir: &Path, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let images_dir = data_dir.join("images");
    let mut names: Vec<String> = std::fs::read_dir(&images_dir)
        .with_context(|| format!("reading {}", images_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no PNG images under {}", images_dir.display());
    }
    let mut rels = Vec::with_capacity(names.len());
    for n in &names {
        let rel = format!("images/{n}");
        let mask = mask_path_for(data_dir, &rel);
        if !mask.exists() {
            bail!("missing component mask for {rel}: expected {}", mask.display());
        }
        rels.push(rel);
    }
    let entries = dataset::split_dataset(&rels, seed)?;
    let out = out.unwrap_or_else(|| data_dir.join("manifest.tsv"));
    dataset::write_manifest(&out, &entries)?;
    let count = |s: Split| entries.iter().filter(|(_, x)| *x == s).count();
    println!(
        "wrote {} ({} train / {} test / {} val)",
        out.display(),
        count(Split::Train),
        count(Split::Test),
        count(Split::Val)
    );
    Ok(())
}

/// Load the images of one split as prepared records.
pub fn load_split_records(
    manifest: &Path,
    data_dir: &Path,
    split: Split,
) -> Result<Vec<cagface::dataset::ImageRecord<f32>>> {
    let entries = dataset::read_manifest(manifest)?;
    let smoothing = SmoothingConfig::default();
    let mut records = Vec::new();
    for (rel, s) in entries.iter().filter(|(_, s)| *s == split) {
        let hr = imageio::load_rgb::<f32>(&data_dir.join(rel))
            .with_context(|| format!("loading {rel} ({} split)", s.as_str()))?;
        let mask = imageio::load_mask(&mask_path_for(data_dir, rel))
            .with_context(|| format!("loading mask for {rel}"))?;
        records.push(pipeline::prepare_record(&hr, &mask, &smoothing)?);
    }
    Ok(records)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn default_run_dir() -> PathBuf {
    let root = std::env::var("CAGFACE_RUN_ROOT").unwrap_or_else(|_| "runs".into());
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_secs();
    Path::new(&root).join(stamp.to_string())
}

pub struct TrainArgs {
    pub manifest: PathBuf,
    pub data_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub phase: Option<String>,
    pub steps: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub patch: Option<usize>,
    pub per_image: Option<usize>,
    pub features: Option<usize>,
    pub blocks: Option<usize>,
    pub stage1_checkpoint: Option<PathBuf>,
    pub paper_scale: bool,
}

fn effective_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if args.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(p) = &args.phase {
        cfg.train.phase = RunConfig::parse_phase(p)?;
    }
    if let Some(v) = args.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = args.batch {
        cfg.train.batch = v;
    }
    if let Some(v) = args.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = args.patch {
        cfg.data.patch = v;
    }
    if let Some(v) = args.per_image {
        cfg.data.per_image = v;
    }
    if let Some(v) = args.features {
        cfg.network.features = v;
    }
    if let Some(v) = args.blocks {
        cfg.network.res_blocks = v;
    }
    if let Some(p) = &args.stage1_checkpoint {
        cfg.train.stage1_checkpoint = Some(p.clone());
    }
    Ok(cfg)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = effective_config(&args)?;
    let run_dir = args.run_dir.clone().unwrap_or_else(default_run_dir);
    cfg.echo(&run_dir)?;
    let manifest_bytes = std::fs::read(&args.manifest)?;
    std::fs::write(
        run_dir.join("manifest.hash"),
        format!("{:016x}\n", fnv1a(&manifest_bytes)),
    )?;

    let train_recs = load_split_records(&args.manifest, &args.data_dir, Split::Train)?;
    let val_recs = load_split_records(&args.manifest, &args.data_dir, Split::Val)?;
    if train_recs.is_empty() {
        bail!("manifest has no training images");
    }
    let train_samples =
        dataset::sample_patches(&train_recs, cfg.data.patch, cfg.data.per_image, cfg.data.sample_seed)?;
    let val_samples = if val_recs.is_empty() {
        Vec::new()
    } else {
        dataset::sample_patches(&val_recs, cfg.data.patch, 1, cfg.data.sample_seed + 1)?
    };

    let mut net = CagFaceNet::<f32>::build(cfg.network, cfg.train.seed)?;
    println!(
        "training {} params, {} train / {} val samples, {} steps ({:?})",
        net.count_parameters().total(),
        train_samples.len(),
        val_samples.len(),
        cfg.train.steps,
        cfg.train.phase,
    );
    let outcome = train::train(&mut net, &train_samples, &val_samples, &cfg.train, Some(&run_dir))?;
    let last = outcome.log.last().unwrap();
    println!(
        "done: final loss {:.6}, best val PSNR {}",
        last.loss,
        outcome
            .best_val_psnr
            .map(|p| format!("{p:.2} dB"))
            .unwrap_or_else(|| "n/a".into())
    );
    println!("run directory: {}", run_dir.display());
    Ok(())
}

pub struct InferArgs {
    pub checkpoint: PathBuf,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub mode: String,
    pub patch: usize,
    pub stride: usize,
    pub raised_cosine: bool,
    pub out: Option<PathBuf>,
    pub intermediate: Option<PathBuf>,
    pub baseline_bicubic: bool,
}

pub fn infer(args: InferArgs) -> Result<()> {
    let lr = imageio::load_rgb::<f32>(&args.image)?;
    let mask_path = args.mask.clone().unwrap_or_else(|| {
        let stem = args.image.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let name = format!("{stem}.mask.png");
        let sibling = args.image.with_file_name(&name);
        if sibling.exists() {
            sibling
        } else {
            // dataset layout keeps masks in a `masks/` directory next to `images/`
            args.image
                .parent()
                .and_then(Path::parent)
                .map(|root| root.join("masks").join(&name))
                .unwrap_or(sibling)
        }
    });
    let mask = imageio::load_mask(&mask_path)
        .with_context(|| format!("loading mask {}", mask_path.display()))?;
    let block = cagface::attention::build_attention_block(&lr, &mask, &SmoothingConfig::default())?;

    // pad to a multiple of 4 so both pixel-shuffle stages stay aligned
    let s = block.shape();
    let (h4, w4) = (s.h.div_ceil(4) * 4, s.w.div_ceil(4) * 4);
    let padded = if (h4, w4) != (s.h, s.w) {
        eprintln!("warning: input {}x{} not divisible by 4; reflection-padding to {w4}x{h4}", s.w, s.h);
        cagface::tile::reflect_pad(&block, h4, w4)?
    } else {
        block
    };

    let out_path = args.out.clone().unwrap_or_else(|| {
        let stem = args.image.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        args.image.with_file_name(format!("{stem}.sr.png"))
    });

    let final_hr: Tensor<f32>;
    if args.baseline_bicubic {
        final_hr = pipeline::bicubic_baseline(&padded)?;
    } else {
        let meta = cagface::checkpoint::peek_meta(&args.checkpoint)?;
        let mut net = CagFaceNet::<f32>::build(meta.config, 0)?;
        cagface::checkpoint::load_into(&args.checkpoint, &mut net.params)?;
        match args.mode.as_str() {
            "whole" => {
                let (inter, hr) = pipeline::infer_whole(&net, &padded)?;
                if let Some(p) = &args.intermediate {
                    imageio::save_rgb(p, &inter)?;
                }
                final_hr = hr;
            }
            "tiled" => {
                let blend = if args.raised_cosine { BlendKind::RaisedCosine } else { BlendKind::Uniform };
                let layout = TileLayout::new(args.patch, args.stride, blend)?;
                final_hr = pipeline::infer_tiled(&net, &padded, &layout)?;
            }
            other => bail!("unknown mode {other:?}"),
        }
    }
    let cropped = dataset::crop(&final_hr, 0, 0, s.h * 4, s.w * 4)?;
    imageio::save_rgb(&out_path, &cropped)?;
    println!("wrote {} ({}x{})", out_path.display(), s.w * 4, s.h * 4);
    Ok(())
}

pub fn eval(dir_a: &Path, dir_b: &Path, csv: Option<PathBuf>) -> Result<()> {
    let list = |d: &Path| -> Result<Vec<String>> {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .with_context(|| format!("reading {}", d.display()))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".png"))
            .collect();
        v.sort();
        Ok(v)
    };
    let a_names = list(dir_a)?;
    let b_names = list(dir_b)?;
    let mut warnings = 0usize;
    for n in a_names.iter().filter(|n| !b_names.contains(n)) {
        eprintln!("warning: {n} missing from {}", dir_b.display());
        warnings += 1;
    }
    for n in b_names.iter().filter(|n| !a_names.contains(n)) {
        eprintln!("warning: {n} missing from {}", dir_a.display());
        warnings += 1;
    }
    let paired: Vec<&String> = a_names.iter().filter(|n| b_names.contains(n)).collect();
    if paired.is_empty() {
        bail!("no paired files between {} and {}", dir_a.display(), dir_b.display());
    }

    let extractor = cagface::metrics::RandomProjectionExtractor::new(16, 7);
    let mut rows = Vec::new();
    let (mut feats_a, mut feats_b) = (Vec::new(), Vec::new());
    for name in &paired {
        let ia = train::to_255(&imageio::load_rgb::<f32>(&dir_a.join(name))?);
        let ib = train::to_255(&imageio::load_rgb::<f32>(&dir_b.join(name))?);
        let psnr = cagface::metrics::psnr(&ia, &ib)?.min(99.0);
        let ssim = cagface::metrics::ssim(&ia, &ib)?;
        let ms = cagface::metrics::ms_ssim(&ia, &ib)?;
        feats_a.push(extractor.extract(&ia)?);
        feats_b.push(extractor.extract(&ib)?);
        rows.push((name.to_string(), psnr, ssim, ms));
    }
    let fid = if paired.len() >= 2 {
        let sa = cagface::metrics::feature_stats(&feats_a)?;
        let sb = cagface::metrics::feature_stats(&feats_b)?;
        Some(cagface::metrics::frechet_distance(&sa, &sb)?)
    } else {
        eprintln!("warning: FID needs >= 2 pairs; skipped");
        warnings += 1;
        None
    };

    println!("{:<28} {:>8} {:>8} {:>8}", "image", "PSNR", "SSIM", "MS-SSIM");
    for (name, p, s, m) in &rows {
        println!("{name:<28} {p:>8.3} {s:>8.4} {m:>8.4}");
    }
    let n = rows.len() as f64;
    let (mp, ms_, mm) = (
        rows.iter().map(|r| r.1).sum::<f64>() / n,
        rows.iter().map(|r| r.2).sum::<f64>() / n,
        rows.iter().map(|r| r.3).sum::<f64>() / n,
    );
    println!("{:<28} {mp:>8.3} {ms_:>8.4} {mm:>8.4}", "mean");
    if let Some(f) = fid {
        println!("set FID (random-projection features, not comparable to published scores): {f:.4}");
    }
    if warnings > 0 {
        eprintln!("{warnings} warning(s)");
    }
    if let Some(path) = csv {
        let mut text = String::from("image,psnr,ssim,ms_ssim\n");
        for (name, p, s, m) in &rows {
            text.push_str(&format!("{name},{p:.6},{s:.6},{m:.6}\n"));
        }
        text.push_str(&format!("mean,{mp:.6},{ms_:.6},{mm:.6}\n"));
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn ablate(
    manifest: &Path,
    data_dir: &Path,
    features: &str,
    blocks: &str,
    single_stage: bool,
    steps: usize,
    patch: Option<usize>,
    seed: u64,
    run_dir: Option<PathBuf>,
) -> Result<()> {
    let parse_list = |s: &str| -> Result<Vec<usize>> {
        s.split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|e| anyhow::anyhow!("bad list entry {t:?}: {e}")))
            .collect()
    };
    let f_list = parse_list(features)?;
    let l_list = parse_list(blocks)?;
    let run_dir = run_dir.unwrap_or_else(default_run_dir);
    std::fs::create_dir_all(&run_dir)?;

    let train_recs = load_split_records(manifest, data_dir, Split::Train)?;
    let patch = patch.unwrap_or(16);
    let samples = dataset::sample_patches(&train_recs, patch, 8, seed)?;
    let hold_out = dataset::sample_patches(&train_recs, patch, 2, seed + 1)?;

    let mut csv = String::from("arch,features,blocks,final_loss,psnr\n");
    println!("{:<12} {:>4} {:>4} {:>12} {:>8}", "arch", "F", "L", "final loss", "PSNR");
    for &f in &f_list {
        for &l in &l_list {
            let ncfg = cagface::net::NetworkConfig { features: f, res_blocks: l, shared_backbone_weights: false };
            let tcfg = TrainConfig { steps, seed, val_every: steps + 1, ..TrainConfig::default() };
            let mut net = CagFaceNet::<f32>::build(ncfg, seed)?;
            let out = train::train(&mut net, &samples, &[], &tcfg, None)?;
            let loss = out.log.last().unwrap().loss;
            let (psnr, _) = train::validate_psnr_ssim(&net, &hold_out)?;
            println!("{:<12} {f:>4} {l:>4} {loss:>12.6} {psnr:>8.3}", "two-stage");
            csv.push_str(&format!("two-stage,{f},{l},{loss:.6},{psnr:.4}\n"));
            if single_stage {
                let mut snet = SingleStageNet::<f32>::build(ncfg, seed)?;
                let sout = train::train_single(&mut snet, &samples, &tcfg)?;
                let sloss = sout.log.last().unwrap().loss;
                let spsnr = train::single_psnr(&snet, &hold_out)?;
                println!("{:<12} {f:>4} {l:>4} {sloss:>12.6} {spsnr:>8.3}", "single-stage");
                csv.push_str(&format!("single-stage,{f},{l},{sloss:.6},{spsnr:.4}\n"));
            }
        }
    }
    let csv_path = run_dir.join("ablate.csv");
    std::fs::write(&csv_path, csv)?;
    println!("wrote {}", csv_path.display());
    Ok(())
}
