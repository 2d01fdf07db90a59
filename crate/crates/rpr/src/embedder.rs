//! Embedding network: a configurable convolutional backbone, global
//! average pooling, a linear head and L2 normalization, mapping
//! Cartesian radar frames to unit vectors.
//!
//! Two backbones are available: `vgg19` (the full 16-conv stack, first
//! layer adapted to one input channel) and `small_cnn` (five stride-2
//! conv blocks; trains on CPU in minutes and is the backbone used by
//! the acceptance suite).

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CartesianFrame;
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, l2_normalize, l2_normalize_backward, maxpool2,
    maxpool2_backward, relu, relu_backward, Conv2d, Dense,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Vgg19,
    SmallCnn,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backbone::Vgg19 => write!(f, "vgg19"),
            Backbone::SmallCnn => write!(f, "small_cnn"),
        }
    }
}

impl std::str::FromStr for Backbone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vgg19" => Ok(Backbone::Vgg19),
            "small_cnn" => Ok(Backbone::SmallCnn),
            other => Err(Error::Config(format!("unknown backbone `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub backbone: Backbone,
    pub embedding_dim: usize,
    /// Must equal the projection grid side.
    pub input_side: usize,
    pub pretrained: bool,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            backbone: Backbone::SmallCnn,
            embedding_dim: 128,
            input_side: 256,
            pretrained: false,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim < 8 {
            return Err(Error::Config(format!(
                "embedding_dim must be >= 8, got {}",
                self.embedding_dim
            )));
        }
        if self.input_side < 32 || !self.input_side.is_multiple_of(32) {
            return Err(Error::Config(format!(
                "input_side must be a positive multiple of 32, got {}",
                self.input_side
            )));
        }
        Ok(())
    }
}

/// One unit-norm embedding with the timestamp of its source frame.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub vector: Vec<f32>,
    pub source_timestamp: i64,
}

/// Backbone layer plan: conv channel/stride pairs, with optional 2x2
/// max-pool after a conv.
fn layer_plan(backbone: Backbone) -> Vec<(usize, usize, bool)> {
    match backbone {
        // (out_ch, stride, pool_after)
        Backbone::SmallCnn => vec![
            (16, 2, false),
            (32, 2, false),
            (64, 2, false),
            (128, 2, false),
            (128, 2, false),
        ],
        Backbone::Vgg19 => vec![
            (64, 1, false),
            (64, 1, true),
            (128, 1, false),
            (128, 1, true),
            (256, 1, false),
            (256, 1, false),
            (256, 1, false),
            (256, 1, true),
            (512, 1, false),
            (512, 1, false),
            (512, 1, false),
            (512, 1, true),
            (512, 1, false),
            (512, 1, false),
            (512, 1, false),
            (512, 1, true),
        ],
    }
}

/// Model state: all trainable parameters plus the config they were
/// built for.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: EmbedderConfig,
    pub seed: u64,
    convs: Vec<Conv2d>,
    pool_after: Vec<bool>,
    head: Dense,
}

/// Activations kept from a training forward pass.
pub struct ForwardCache {
    conv_inputs: Vec<Array4<f32>>,
    relu_outputs: Vec<Array4<f32>>,
    pool_args: Vec<Option<Array4<u8>>>,
    final_hw: (usize, usize),
    gap_output: Array2<f32>,
    norm_y: Array2<f32>,
    norms: Array1<f32>,
}

/// Reproducible initialization for the configured backbone.
pub fn init_model(cfg: &EmbedderConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    if cfg.pretrained {
        return Err(Error::Config(
            "pretrained weights are not bundled; initialise from a checkpoint instead".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut convs = Vec::new();
    let mut pool_after = Vec::new();
    let mut in_ch = 1;
    for (out_ch, stride, pool) in layer_plan(cfg.backbone) {
        convs.push(Conv2d::init(in_ch, out_ch, stride, &mut rng));
        pool_after.push(pool);
        in_ch = out_ch;
    }
    let head = Dense::init(cfg.embedding_dim, in_ch, &mut rng);
    Ok(Model {
        cfg: *cfg,
        seed,
        convs,
        pool_after,
        head,
    })
}

impl Model {
    pub fn parameter_count(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.weight.len() + c.bias.len())
            .sum::<usize>()
            + self.head.weight.len()
            + self.head.bias.len()
    }

    fn check_input(&self, x: &Array4<f32>) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != 1 || h != self.cfg.input_side || w != self.cfg.input_side {
            return Err(Error::Argument(format!(
                "expected [n, 1, {side}, {side}] input, got {:?}",
                x.dim(),
                side = self.cfg.input_side
            )));
        }
        Ok(())
    }

    /// Forward pass keeping activations for `backward`.
    pub fn forward_train(&self, x: Array4<f32>) -> Result<(Array2<f32>, ForwardCache)> {
        self.check_input(&x)?;
        let mut conv_inputs = Vec::with_capacity(self.convs.len());
        let mut relu_outputs = Vec::with_capacity(self.convs.len());
        let mut pool_args = Vec::with_capacity(self.convs.len());
        let mut cur = x;
        for (conv, &pool) in self.convs.iter().zip(&self.pool_after) {
            let y = conv.forward(&cur);
            conv_inputs.push(cur);
            let r = relu(&y);
            if pool {
                let (p, arg) = maxpool2(&r);
                pool_args.push(Some(arg));
                relu_outputs.push(r);
                cur = p;
            } else {
                pool_args.push(None);
                relu_outputs.push(r.clone());
                cur = r;
            }
        }
        let final_hw = (cur.dim().2, cur.dim().3);
        let gap_output = global_avg_pool(&cur);
        let pre = self.head.forward(&gap_output);
        let (norm_y, norms) = l2_normalize(&pre);
        let cache = ForwardCache {
            conv_inputs,
            relu_outputs,
            pool_args,
            final_hw,
            gap_output,
            norm_y: norm_y.clone(),
            norms,
        };
        Ok((norm_y, cache))
    }

    /// Backpropagate `d_embedding` through the cached pass, accumulating
    /// parameter gradients.
    pub fn backward(&mut self, cache: &ForwardCache, d_embedding: &Array2<f32>) {
        let d_pre = l2_normalize_backward(&cache.norm_y, &cache.norms, d_embedding);
        let d_gap = self.head.backward(&cache.gap_output, &d_pre);
        let mut d_cur = global_avg_pool_backward(&d_gap, cache.final_hw);
        for i in (0..self.convs.len()).rev() {
            if let Some(arg) = &cache.pool_args[i] {
                let hw = (cache.relu_outputs[i].dim().2, cache.relu_outputs[i].dim().3);
                d_cur = maxpool2_backward(arg, &d_cur, hw);
            }
            let d_relu = relu_backward(&cache.relu_outputs[i], &d_cur);
            d_cur = self.convs[i].backward(&cache.conv_inputs[i], &d_relu);
        }
    }

    pub fn zero_grads(&mut self) {
        for c in &mut self.convs {
            c.grad_weight.fill(0.0);
            c.grad_bias.fill(0.0);
        }
        self.head.grad_weight.fill(0.0);
        self.head.grad_bias.fill(0.0);
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        for c in &self.convs {
            sizes.push(c.weight.len());
            sizes.push(c.bias.len());
        }
        sizes.push(self.head.weight.len());
        sizes.push(self.head.bias.len());
        sizes
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::new();
        for c in &mut self.convs {
            out.push(c.weight.as_slice_mut().expect("contiguous"));
            out.push(c.bias.as_slice_mut().expect("contiguous"));
        }
        out.push(self.head.weight.as_slice_mut().expect("contiguous"));
        out.push(self.head.bias.as_slice_mut().expect("contiguous"));
        out
    }

    pub fn param_slices(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::new();
        for c in &self.convs {
            out.push(c.weight.as_slice().expect("contiguous"));
            out.push(c.bias.as_slice().expect("contiguous"));
        }
        out.push(self.head.weight.as_slice().expect("contiguous"));
        out.push(self.head.bias.as_slice().expect("contiguous"));
        out
    }

    pub fn grad_slices(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::new();
        for c in &self.convs {
            out.push(c.grad_weight.as_slice().expect("contiguous"));
            out.push(c.grad_bias.as_slice().expect("contiguous"));
        }
        out.push(self.head.grad_weight.as_slice().expect("contiguous"));
        out.push(self.head.grad_bias.as_slice().expect("contiguous"));
        out
    }

    pub fn load_param_slices(&mut self, data: &[Vec<f32>]) -> Result<()> {
        let sizes = self.param_sizes();
        if data.len() != sizes.len() || data.iter().zip(&sizes).any(|(d, &s)| d.len() != s) {
            return Err(Error::Argument("parameter shape mismatch".into()));
        }
        for (dst, src) in self.param_slices_mut().into_iter().zip(data) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}

/// Stack frames into a [n, 1, side, side] batch.
pub fn frames_to_batch(frames: &[CartesianFrame], side: usize) -> Result<Array4<f32>> {
    if frames.is_empty() {
        return Err(Error::Argument("empty frame batch".into()));
    }
    for f in frames {
        if f.side() != side {
            return Err(Error::Argument(format!(
                "frame side {} does not match configured input_side {side}",
                f.side()
            )));
        }
    }
    let mut x = Array4::<f32>::zeros((frames.len(), 1, side, side));
    for (i, f) in frames.iter().enumerate() {
        x.index_axis_mut(ndarray::Axis(0), i)
            .index_axis_mut(ndarray::Axis(0), 0)
            .assign(&f.pixels);
    }
    Ok(x)
}

/// Inference: one unit-norm embedding per frame, deterministic given
/// model state.
pub fn embed(model: &Model, frames: &[CartesianFrame]) -> Result<Vec<Embedding>> {
    let x = frames_to_batch(frames, model.cfg.input_side)?;
    let (y, _) = model.forward_train(x)?;
    Ok(frames
        .iter()
        .zip(y.rows())
        .map(|(f, row)| Embedding {
            vector: row.to_vec(),
            source_timestamp: f.source_timestamp,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Checkpoint format
//
// magic "RPCK" | u32 version | u64 json_len | json meta | u64 n_arrays |
// (u64 len | f32 LE data)* | u64 fnv1a64 of all preceding bytes
//
// The JSON meta is self-describing: embedder config, seed, step count,
// and whatever extra state the trainer wants to carry (rng position,
// optimizer moments are stored as additional arrays named in the meta).
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 4] = b"RPCK";
const CKPT_VERSION: u32 = 1;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub embedder: EmbedderConfig,
    pub seed: u64,
    pub step: u64,
    /// Extra trainer state (rng position, epoch, configs); opaque here.
    #[serde(default)]
    pub extra: serde_json::Value,
    /// Names of the stored arrays, in order.
    pub arrays: Vec<String>,
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, arrays: &[&[f32]]) -> Result<()> {
    assert_eq!(meta.arrays.len(), arrays.len());
    let json = serde_json::to_vec(meta).expect("meta serializes");
    let mut buf = Vec::with_capacity(64 + json.len() + arrays.iter().map(|a| a.len() * 4).sum::<usize>());
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
    for a in arrays {
        buf.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = fnv1a64(&buf);
    buf.extend_from_slice(&digest.to_le_bytes());
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, Vec<Vec<f32>>)> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |detail: &str| Error::CheckpointIntegrity {
        path: path.to_path_buf(),
        detail: detail.into(),
    };
    if buf.len() < 24 || &buf[0..4] != CKPT_MAGIC {
        return Err(fail("bad magic"));
    }
    let stored = u64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap());
    let body = &buf[..buf.len() - 8];
    if fnv1a64(body) != stored {
        return Err(fail("checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let json_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    let mut off = 16;
    if body.len() < off + json_len + 8 {
        return Err(fail("truncated meta"));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&body[off..off + json_len])
        .map_err(|e| fail(&format!("bad meta json: {e}")))?;
    off += json_len;
    let n_arrays = u64::from_le_bytes(body[off..off + 8].try_into().unwrap()) as usize;
    off += 8;
    if n_arrays != meta.arrays.len() {
        return Err(fail("array count disagrees with meta"));
    }
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        if body.len() < off + 8 {
            return Err(fail("truncated array header"));
        }
        let len = u64::from_le_bytes(body[off..off + 8].try_into().unwrap()) as usize;
        off += 8;
        if body.len() < off + len * 4 {
            return Err(fail("truncated array data"));
        }
        let mut a = Vec::with_capacity(len);
        for k in 0..len {
            a.push(f32::from_le_bytes(body[off + 4 * k..off + 4 * k + 4].try_into().unwrap()));
        }
        off += len * 4;
        arrays.push(a);
    }
    if off != body.len() {
        return Err(fail("trailing bytes"));
    }
    Ok((meta, arrays))
}

/// Save just the model weights (no optimizer state).
pub fn save_model(path: &Path, model: &Model, step: u64, extra: serde_json::Value) -> Result<()> {
    let params = model.param_slices();
    let meta = CheckpointMeta {
        embedder: model.cfg,
        seed: model.seed,
        step,
        extra,
        arrays: (0..params.len()).map(|i| format!("param{i}")).collect(),
    };
    save_checkpoint(path, &meta, &params)
}

/// Load a model saved by `save_model` (or the leading parameter section
/// of a trainer checkpoint).
pub fn load_model(path: &Path) -> Result<(Model, CheckpointMeta)> {
    let (meta, arrays) = load_checkpoint(path)?;
    let mut model = init_model(&meta.embedder, meta.seed)?;
    let n_params = model.param_sizes().len();
    if arrays.len() < n_params {
        return Err(Error::CheckpointIntegrity {
            path: path.to_path_buf(),
            detail: "fewer arrays than model parameters".into(),
        });
    }
    model.load_param_slices(&arrays[..n_params])?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn small_cfg() -> EmbedderConfig {
        EmbedderConfig {
            backbone: Backbone::SmallCnn,
            embedding_dim: 16,
            input_side: 32,
            pretrained: false,
        }
    }

    fn random_frames(n: usize, side: usize, seed: u64) -> Vec<CartesianFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| CartesianFrame {
                pixels: Array2::from_shape_fn((side, side), |_| rng.random_range(0.0..1.0)),
                source_timestamp: i as i64,
            })
            .collect()
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = small_cfg();
        let m1 = init_model(&cfg, 9).unwrap();
        let m2 = init_model(&cfg, 9).unwrap();
        for (a, b) in m1.param_slices().iter().zip(m2.param_slices().iter()) {
            assert_eq!(a, b);
        }
        let m3 = init_model(&cfg, 10).unwrap();
        assert!(m1
            .param_slices()
            .iter()
            .zip(m3.param_slices().iter())
            .any(|(a, b)| a != b));
    }

    #[test]
    fn small_cnn_parameter_budget() {
        let model = init_model(&EmbedderConfig::default(), 0).unwrap();
        let n = model.parameter_count();
        // Documented layer list: 5 conv blocks 16/32/64/128/128 plus the
        // 128-d head.
        let expected = (16 * 9 + 16)
            + (32 * 16 * 9 + 32)
            + (64 * 32 * 9 + 64)
            + (128 * 64 * 9 + 128)
            + (128 * 128 * 9 + 128)
            + (128 * 128 + 128);
        assert_eq!(n, expected);
        assert!(n < 2_000_000, "parameter count {n}");
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small_cfg();
        cfg.embedding_dim = 7;
        assert!(matches!(init_model(&cfg, 0), Err(Error::Config(_))));
        let mut cfg = small_cfg();
        cfg.pretrained = true;
        assert!(matches!(init_model(&cfg, 0), Err(Error::Config(_))));
        let mut cfg = small_cfg();
        cfg.input_side = 48;
        assert!(matches!(init_model(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn embeddings_are_unit_norm_and_bitwise_repeatable() {
        let model = init_model(&small_cfg(), 3).unwrap();
        let frames = random_frames(3, 32, 1);
        let e1 = embed(&model, &frames).unwrap();
        let e2 = embed(&model, &frames).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert_eq!(a.vector, b.vector);
            let norm: f32 = a.vector.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5, "norm {norm}");
        }
        // All-zero frame stays finite and unit (zero guard).
        let zero = vec![CartesianFrame {
            pixels: Array2::zeros((32, 32)),
            source_timestamp: 0,
        }];
        let e = embed(&model, &zero).unwrap();
        assert!(e[0].vector.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn embed_rejects_shape_mismatch() {
        let model = init_model(&small_cfg(), 3).unwrap();
        let frames = random_frames(1, 64, 1);
        assert!(matches!(embed(&model, &frames), Err(Error::Argument(_))));
    }

    #[test]
    fn gradient_reaches_every_parameter() {
        // Every parameter must receive a nonzero gradient for at least
        // one random batch among 5 seeds.
        let cfg = small_cfg();
        let sizes_len = init_model(&cfg, 0).unwrap().param_sizes().len();
        let mut touched = vec![false; sizes_len];
        for seed in 0..5u64 {
            let mut model = init_model(&cfg, seed).unwrap();
            let frames = random_frames(4, 32, seed + 100);
            let x = frames_to_batch(&frames, 32).unwrap();
            let (y, cache) = model.forward_train(x).unwrap();
            // Arbitrary scalar objective: sum of all embedding coords.
            let dy = Array2::from_elem(y.dim(), 1.0f32);
            model.backward(&cache, &dy);
            for (i, g) in model.grad_slices().iter().enumerate() {
                if g.iter().any(|&v| v != 0.0) {
                    touched[i] = true;
                }
            }
        }
        assert!(
            touched.iter().all(|&t| t),
            "untouched parameter groups: {:?}",
            touched
                .iter()
                .enumerate()
                .filter(|(_, &t)| !t)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn vgg19_initializes_with_single_channel_input() {
        let cfg = EmbedderConfig {
            backbone: Backbone::Vgg19,
            embedding_dim: 32,
            input_side: 64,
            pretrained: false,
        };
        let model = init_model(&cfg, 0).unwrap();
        let frames = random_frames(1, 64, 0);
        let e = embed(&model, &frames).unwrap();
        let norm: f32 = e[0].vector.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn checkpoint_roundtrip_and_integrity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = init_model(&small_cfg(), 7).unwrap();
        save_model(&path, &model, 42, serde_json::json!({"note": "t"})).unwrap();
        let (loaded, meta) = load_model(&path).unwrap();
        assert_eq!(meta.step, 42);
        assert_eq!(meta.seed, 7);
        for (a, b) in model.param_slices().iter().zip(loaded.param_slices().iter()) {
            assert_eq!(a, b);
        }
        // Corrupt one byte in the middle: integrity error.
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::CheckpointIntegrity { .. })
        ));
    }
}
