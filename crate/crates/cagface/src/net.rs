//! The two-stage network: stems, residual backbones with global skips,
//! pixel-shuffle upsampling heads, and the space-to-depth bootstrap that
//! feeds stage 2. A single-stage 4x variant is provided for ablations.

use crate::conv::ConvParams;
use crate::error::{Error, Result};
use crate::graph::{NodeId, ParamId, ParamSet, Tape};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// F (features per layer), L (ResBlock count), and the backbone
/// weight-sharing mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub features: usize,
    pub res_blocks: usize,
    #[serde(default)]
    pub shared_backbone_weights: bool,
}

impl NetworkConfig {
    /// F=256, L=16.
    pub fn paper() -> Self {
        NetworkConfig { features: 256, res_blocks: 16, shared_backbone_weights: false }
    }

    /// Laptop-friendly defaults.
    pub fn desk() -> Self {
        NetworkConfig { features: 64, res_blocks: 4, shared_backbone_weights: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 || self.res_blocks == 0 {
            return Err(Error::Config(format!(
                "features and res_blocks must be >= 1, got F={} L={}",
                self.features, self.res_blocks
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    TwoStage,
    SingleStage,
}

fn init_conv<T: Scalar>(
    rng: &mut ChaCha8Rng,
    kh: usize,
    kw: usize,
    c_in: usize,
    c_out: usize,
) -> ConvParams<T> {
    // fan-in-scaled uniform, biases zero
    let bound = (6.0 / (kh * kw * c_in) as f64).sqrt();
    let mut p = ConvParams::zeros(kh, kw, c_in, c_out);
    for w in p.weights.iter_mut() {
        *w = T::of_f64(rng.gen_range(-bound..bound));
    }
    p
}

#[derive(Debug, Clone)]
struct BackboneIds {
    blocks: Vec<(ParamId, ParamId)>,
}

fn build_backbone<T: Scalar>(
    params: &mut ParamSet<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    cfg: &NetworkConfig,
) -> BackboneIds {
    let f = cfg.features;
    let distinct = if cfg.shared_backbone_weights { 1 } else { cfg.res_blocks };
    let mut ids = Vec::with_capacity(distinct);
    for i in 0..distinct {
        let a = params.add_conv(format!("{prefix}.block{i}.conv_a"), init_conv(rng, 3, 3, f, f));
        let b = params.add_conv(format!("{prefix}.block{i}.conv_b"), init_conv(rng, 3, 3, f, f));
        ids.push((a, b));
    }
    let blocks = (0..cfg.res_blocks)
        .map(|i| ids[if cfg.shared_backbone_weights { 0 } else { i }])
        .collect();
    BackboneIds { blocks }
}

fn forward_backbone<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamSet<T>,
    backbone: &BackboneIds,
    stem: NodeId,
) -> Result<NodeId> {
    let mut h = stem;
    for &(a, b) in &backbone.blocks {
        let front = tape.conv2d(params, a, h)?;
        let act = tape.relu(front);
        let back = tape.conv2d(params, b, act)?;
        h = tape.add(back, h)?;
    }
    // global input -> output skip across the whole backbone
    tape.add(h, stem)
}

#[derive(Debug, Clone)]
struct Stage1Ids {
    stem: ParamId,
    backbone: BackboneIds,
    up_pre: ParamId,
    up_expand: ParamId,
    to_rgb: ParamId,
}

#[derive(Debug, Clone)]
struct Stage2Ids {
    entry: ParamId,
    stem: ParamId,
    backbone: BackboneIds,
    up_pre: ParamId,
    up_expand_a: ParamId,
    up_expand_b: ParamId,
    to_rgb: ParamId,
    mixer: ParamId,
}

/// The full two-stage 4x network.
#[derive(Debug, Clone)]
pub struct CagFaceNet<T> {
    pub config: NetworkConfig,
    pub params: ParamSet<T>,
    stage1: Stage1Ids,
    stage2: Stage2Ids,
}

impl<T: Scalar> CagFaceNet<T> {
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let f = config.features;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();

        let stem1 = params.add_conv("stage1.stem", init_conv(&mut rng, 3, 3, 6, f));
        let backbone1 = build_backbone(&mut params, &mut rng, "stage1.backbone", &config);
        let up1_pre = params.add_conv("stage1.up.pre", init_conv(&mut rng, 3, 3, f, f));
        let up1_expand = params.add_conv("stage1.up.expand", init_conv(&mut rng, 3, 3, f, 4 * f));
        let up1_rgb = params.add_conv("stage1.up.to_rgb", init_conv(&mut rng, 3, 3, f, 3));

        let entry = params.add_conv("stage2.entry", init_conv(&mut rng, 3, 3, 12, f));
        let stem2 = params.add_conv("stage2.stem", init_conv(&mut rng, 3, 3, f, f));
        let backbone2 = build_backbone(&mut params, &mut rng, "stage2.backbone", &config);
        let up2_pre = params.add_conv("stage2.up.pre", init_conv(&mut rng, 3, 3, f, f));
        let up2_expand_a =
            params.add_conv("stage2.up.expand_a", init_conv(&mut rng, 3, 3, 2 * f, 8 * f));
        let up2_expand_b =
            params.add_conv("stage2.up.expand_b", init_conv(&mut rng, 3, 3, 2 * f, 8 * f));
        let up2_rgb = params.add_conv("stage2.up.to_rgb", init_conv(&mut rng, 3, 3, 2 * f, 3));
        let mixer = params.add_conv("stage2.up.mixer", init_conv(&mut rng, 3, 3, 3, 3));

        Ok(CagFaceNet {
            config,
            params,
            stage1: Stage1Ids {
                stem: stem1,
                backbone: backbone1,
                up_pre: up1_pre,
                up_expand: up1_expand,
                to_rgb: up1_rgb,
            },
            stage2: Stage2Ids {
                entry,
                stem: stem2,
                backbone: backbone2,
                up_pre: up2_pre,
                up_expand_a: up2_expand_a,
                up_expand_b: up2_expand_b,
                to_rgb: up2_rgb,
                mixer,
            },
        })
    }

    /// 6-channel block -> (2x intermediate HR, post-stem features kept for
    /// the stage-wise skip).
    pub fn forward_stage1(&self, tape: &mut Tape<T>, block: NodeId) -> Result<(NodeId, NodeId)> {
        let stem = tape.conv2d(&self.params, self.stage1.stem, block)?;
        let body = forward_backbone(tape, &self.params, &self.stage1.backbone, stem)?;
        let pre = tape.conv2d(&self.params, self.stage1.up_pre, body)?;
        let expanded = tape.conv2d(&self.params, self.stage1.up_expand, pre)?;
        let up = tape.depth_to_space(expanded, 2)?;
        let rgb = tape.conv2d(&self.params, self.stage1.to_rgb, up)?;
        Ok((rgb, stem))
    }

    /// (2x intermediate, stage-1 stem features) -> 4x final HR.
    pub fn forward_stage2(
        &self,
        tape: &mut Tape<T>,
        intermediate: NodeId,
        stem1_features: NodeId,
    ) -> Result<NodeId> {
        let packed = tape.space_to_depth(intermediate, 2)?;
        let entry = tape.conv2d(&self.params, self.stage2.entry, packed)?;
        let stem = tape.conv2d(&self.params, self.stage2.stem, entry)?;
        let body = forward_backbone(tape, &self.params, &self.stage2.backbone, stem)?;
        let pre = tape.conv2d(&self.params, self.stage2.up_pre, body)?;
        let fused = tape.concat_channels(pre, stem1_features)?;
        let ex_a = tape.conv2d(&self.params, self.stage2.up_expand_a, fused)?;
        let up_a = tape.depth_to_space(ex_a, 2)?;
        let ex_b = tape.conv2d(&self.params, self.stage2.up_expand_b, up_a)?;
        let up_b = tape.depth_to_space(ex_b, 2)?;
        let rgb = tape.conv2d(&self.params, self.stage2.to_rgb, up_b)?;
        tape.conv2d(&self.params, self.stage2.mixer, rgb)
    }

    pub fn forward(&self, tape: &mut Tape<T>, block: NodeId) -> Result<(NodeId, NodeId)> {
        let (intermediate, stem1) = self.forward_stage1(tape, block)?;
        let final_hr = self.forward_stage2(tape, intermediate, stem1)?;
        Ok((intermediate, final_hr))
    }

    /// Restrict training to one stage (or both). Stage-1 parameter names are
    /// prefixed "stage1.".
    pub fn set_trainable(&mut self, stage1: bool, stage2: bool) {
        for (_, e) in self.params.iter_mut() {
            e.trainable = if e.name.starts_with("stage1.") { stage1 } else { stage2 };
        }
    }

    pub fn count_parameters(&self) -> ParameterCount {
        count_params(&self.params, self.config.res_blocks, self.config.shared_backbone_weights)
    }
}

/// Ablation variant: one stem + backbone, then two 2x shuffles.
#[derive(Debug, Clone)]
pub struct SingleStageNet<T> {
    pub config: NetworkConfig,
    pub params: ParamSet<T>,
    stem: ParamId,
    backbone: BackboneIds,
    up_pre: ParamId,
    up_expand_a: ParamId,
    up_expand_b: ParamId,
    to_rgb: ParamId,
}

impl<T: Scalar> SingleStageNet<T> {
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let f = config.features;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let stem = params.add_conv("single.stem", init_conv(&mut rng, 3, 3, 6, f));
        let backbone = build_backbone(&mut params, &mut rng, "single.backbone", &config);
        let up_pre = params.add_conv("single.up.pre", init_conv(&mut rng, 3, 3, f, f));
        let up_expand_a = params.add_conv("single.up.expand_a", init_conv(&mut rng, 3, 3, f, 4 * f));
        let up_expand_b = params.add_conv("single.up.expand_b", init_conv(&mut rng, 3, 3, f, 4 * f));
        let to_rgb = params.add_conv("single.up.to_rgb", init_conv(&mut rng, 3, 3, f, 3));
        Ok(SingleStageNet { config, params, stem, backbone, up_pre, up_expand_a, up_expand_b, to_rgb })
    }

    pub fn forward(&self, tape: &mut Tape<T>, block: NodeId) -> Result<NodeId> {
        let stem = tape.conv2d(&self.params, self.stem, block)?;
        let body = forward_backbone(tape, &self.params, &self.backbone, stem)?;
        let pre = tape.conv2d(&self.params, self.up_pre, body)?;
        let ex_a = tape.conv2d(&self.params, self.up_expand_a, pre)?;
        let up_a = tape.depth_to_space(ex_a, 2)?;
        let ex_b = tape.conv2d(&self.params, self.up_expand_b, up_a)?;
        let up_b = tape.depth_to_space(ex_b, 2)?;
        tape.conv2d(&self.params, self.to_rgb, up_b)
    }

    pub fn count_parameters(&self) -> ParameterCount {
        count_params(&self.params, self.config.res_blocks, self.config.shared_backbone_weights)
    }
}

/// Per-layer parameter accounting. Backbone conv positions are aggregated
/// across the L ResBlocks into one row each, the way Table-style summaries
/// print them.
#[derive(Debug, Clone)]
pub struct ParameterCount {
    pub rows: Vec<CountRow>,
}

#[derive(Debug, Clone)]
pub struct CountRow {
    pub name: String,
    pub kernel: usize,
    pub bias: usize,
}

impl ParameterCount {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.kernel + r.bias).sum()
    }

    pub fn row(&self, name: &str) -> Option<&CountRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn count_params<T: Scalar>(
    params: &ParamSet<T>,
    res_blocks: usize,
    shared: bool,
) -> ParameterCount {
    let mut rows: Vec<CountRow> = Vec::new();
    for (_, e) in params.iter() {
        let (name, mult) = match e.name.find(".block") {
            Some(pos) => {
                let tail = if e.name.ends_with("conv_a") { "conv_a" } else { "conv_b" };
                let agg = format!("{}.{}", &e.name[..pos], tail);
                // with shared weights a single block is stored and counted once
                (agg, if shared { 1 } else { 1 })
            }
            None => (e.name.clone(), 1),
        };
        let kernel = e.conv.kernel_param_count() * mult;
        let bias = e.conv.c_out * mult;
        match rows.iter_mut().find(|r| r.name == name) {
            Some(row) => {
                row.kernel += kernel;
                row.bias += bias;
            }
            None => rows.push(CountRow { name, kernel, bias }),
        }
    }
    let _ = res_blocks;
    ParameterCount { rows }
}

/// The printed per-row kernel/bias numbers of the published configuration
/// table, reproduced verbatim for total verification.
pub const TABLE1_STAGE1_ROWS: [(usize, usize); 7] = [
    (13_824, 256),      // stem 1: 3x3x6x256
    (9_437_184, 4_096), // backbone 1 row a (16 blocks aggregated)
    (9_437_184, 4_096), // backbone 1 row b
    (589_824, 256),     // upsampling 1: 3x3x256x256
    (2_359_296, 1_024), // upsampling 1: 3x3x256x1024
    (6_912, 3),         // upsampling 1: 3x3x256x3
    (27_648, 256),      // upsampling 1: 3x3x12x256 (stage-2 entry conv)
];

pub const TABLE1_STAGE2_ROWS: [(usize, usize); 8] = [
    (587_520, 256),     // stem 2 as printed (see replay note)
    (9_437_184, 4_096), // backbone 2 row a
    (9_437_184, 4_096), // backbone 2 row b
    (589_824, 256),     // upsampling 2: 3x3x256x256
    (9_437_184, 2_048), // upsampling 2: 3x3x512x2048
    (9_437_184, 2_048), // upsampling 2: 3x3x512x2048
    (13_824, 3),        // upsampling 2: 3x3x512x3
    (81, 3),            // upsampling 2: 3x3x3x3
];

/// Sum of the printed rows; (stage 1, stage 2).
pub fn table1_replay_totals() -> (usize, usize) {
    let s1 = TABLE1_STAGE1_ROWS.iter().map(|(k, b)| k + b).sum();
    let s2 = TABLE1_STAGE2_ROWS.iter().map(|(k, b)| k + b).sum();
    (s1, s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    #[test]
    fn table1_replay_matches_printed_totals() {
        assert_eq!(table1_replay_totals(), (21_881_859, 38_952_791));
    }

    #[test]
    fn paper_config_layer_counts() {
        let net = CagFaceNet::<f32>::build(NetworkConfig::paper(), 0).unwrap();
        let counts = net.count_parameters();
        let stem = counts.row("stage1.stem").unwrap();
        assert_eq!((stem.kernel, stem.bias), (13_824, 256));
        let row_a = counts.row("stage1.backbone.conv_a").unwrap();
        assert_eq!((row_a.kernel, row_a.bias), (9_437_184, 4_096));
        let mixer = counts.row("stage2.up.mixer").unwrap();
        assert_eq!((mixer.kernel, mixer.bias), (81, 3));
        let expand = counts.row("stage1.up.expand").unwrap();
        assert_eq!((expand.kernel, expand.bias), (2_359_296, 1_024));
        let entry = counts.row("stage2.entry").unwrap();
        assert_eq!((entry.kernel, entry.bias), (27_648, 256));
        let rgb2 = counts.row("stage2.up.to_rgb").unwrap();
        assert_eq!((rgb2.kernel, rgb2.bias), (13_824, 3));
        // independent-weights backbone: 16 blocks, 2 convs each
        let backbone_total = counts.row("stage1.backbone.conv_a").unwrap().kernel
            + counts.row("stage1.backbone.conv_a").unwrap().bias
            + counts.row("stage1.backbone.conv_b").unwrap().kernel
            + counts.row("stage1.backbone.conv_b").unwrap().bias;
        assert_eq!(backbone_total, 16 * 2 * (589_824 + 256));
    }

    #[test]
    fn toy_counts_match_closed_form() {
        let cfg = NetworkConfig { features: 64, res_blocks: 4, shared_backbone_weights: false };
        let net = CagFaceNet::<f32>::build(cfg, 1).unwrap();
        let counts = net.count_parameters();
        assert_eq!(counts.row("stage1.stem").unwrap().kernel, 9 * 6 * 64);
        assert_eq!(counts.row("stage1.backbone.conv_a").unwrap().kernel, 4 * 9 * 64 * 64);
        assert_eq!(counts.row("stage2.up.expand_a").unwrap().kernel, 9 * 128 * 512);
        let expected_total: usize = counts.rows.iter().map(|r| r.kernel + r.bias).sum();
        assert_eq!(counts.total(), expected_total);
        assert_eq!(counts.total(), net.params.total_scalar_count());
    }

    #[test]
    fn shared_backbone_counts_single_block() {
        let cfg = NetworkConfig { features: 32, res_blocks: 8, shared_backbone_weights: true };
        let net = CagFaceNet::<f32>::build(cfg, 2).unwrap();
        let counts = net.count_parameters();
        assert_eq!(counts.row("stage1.backbone.conv_a").unwrap().kernel, 9 * 32 * 32);
    }

    #[test]
    fn shape_contract_toy() {
        let cfg = NetworkConfig { features: 8, res_blocks: 2, shared_backbone_weights: false };
        let net = CagFaceNet::<f32>::build(cfg, 3).unwrap();
        let mut tape = Tape::new();
        let block = tape.input(Tensor::filled(Shape::new(1, 6, 8, 8), 0.1));
        let (inter, feats) = net.forward_stage1(&mut tape, block).unwrap();
        assert_eq!(tape.value(inter).shape(), Shape::new(1, 3, 16, 16));
        assert_eq!(tape.value(feats).shape(), Shape::new(1, 8, 8, 8));
        let final_hr = net.forward_stage2(&mut tape, inter, feats).unwrap();
        assert_eq!(tape.value(final_hr).shape(), Shape::new(1, 3, 32, 32));
    }

    #[test]
    fn single_stage_shape_and_size() {
        let cfg = NetworkConfig { features: 8, res_blocks: 2, shared_backbone_weights: false };
        let single = SingleStageNet::<f32>::build(cfg, 4).unwrap();
        let mut tape = Tape::new();
        let block = tape.input(Tensor::filled(Shape::new(1, 6, 8, 8), 0.1));
        let out = single.forward(&mut tape, block).unwrap();
        assert_eq!(tape.value(out).shape(), Shape::new(1, 3, 32, 32));
        let two = CagFaceNet::<f32>::build(cfg, 4).unwrap();
        assert!(single.count_parameters().total() < two.count_parameters().total());
    }

    #[test]
    fn zeroed_resblocks_are_identity() {
        let cfg = NetworkConfig { features: 4, res_blocks: 3, shared_backbone_weights: false };
        let mut net = CagFaceNet::<f32>::build(cfg, 5).unwrap();
        for (_, e) in net.params.iter_mut() {
            if e.name.contains(".block") {
                e.conv.weights.fill(0.0);
                e.conv.bias.fill(0.0);
            }
        }
        let mut tape = Tape::new();
        let block = tape.input(Tensor::filled(Shape::new(1, 6, 4, 4), 0.3));
        let stem = tape.conv2d(&net.params, net.stage1.stem, block).unwrap();
        let body = forward_backbone(&mut tape, &net.params, &net.stage1.backbone, stem).unwrap();
        // chain is identity, so the global skip doubles the stem
        let stem_v = tape.value(stem).clone();
        for (o, s) in tape.value(body).data().iter().zip(stem_v.data()) {
            assert!((o - 2.0 * s).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_input_zero_bias_constant_propagation() {
        // with zero input and all-zero biases every conv output stays zero,
        // traced by hand through the whole graph
        let cfg = NetworkConfig { features: 4, res_blocks: 2, shared_backbone_weights: false };
        let net = CagFaceNet::<f32>::build(cfg, 6).unwrap();
        let mut tape = Tape::new();
        let block = tape.input(Tensor::zeros(Shape::new(1, 6, 4, 4)));
        let (inter, final_hr) = net.forward(&mut tape, block).unwrap();
        assert!(tape.value(inter).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(final_hr).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn whole_face_shape_contract() {
        let cfg = NetworkConfig { features: 4, res_blocks: 1, shared_backbone_weights: false };
        let net = CagFaceNet::<f32>::build(cfg, 7).unwrap();
        let mut tape = Tape::new();
        let block = tape.input(Tensor::zeros(Shape::new(1, 6, 64, 64)));
        let (inter, final_hr) = net.forward(&mut tape, block).unwrap();
        assert_eq!(tape.value(inter).shape(), Shape::new(1, 3, 128, 128));
        assert_eq!(tape.value(final_hr).shape(), Shape::new(1, 3, 256, 256));
    }

    #[test]
    fn every_parameter_gets_gradient() {
        use rand::{Rng, SeedableRng};
        let cfg = NetworkConfig { features: 4, res_blocks: 2, shared_backbone_weights: false };
        let mut net = CagFaceNet::<f32>::build(cfg, 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let shape = Shape::new(1, 6, 8, 8);
        let block = Tensor::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let tshape = Shape::new(1, 3, 32, 32);
        let target = Tensor::from_vec(
            tshape,
            (0..tshape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut tape = Tape::new();
        let x = tape.input(block);
        let t = tape.input(target);
        let (_, final_hr) = net.forward(&mut tape, x).unwrap();
        let loss = tape.huber_mean(final_hr, t, 1.0).unwrap();
        net.params.zero_grads();
        tape.backward(loss, &mut net.params).unwrap();
        for (_, e) in net.params.iter() {
            assert!(
                e.grad_w.iter().any(|&g| g != 0.0),
                "dead gradient in {}",
                e.name
            );
        }
    }
}
