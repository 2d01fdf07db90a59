//! Optimization loop: sample a batch, embed both sides, apply the
//! instance loss and one Adam step. Runs are bitwise reproducible from
//! the seed and resumable from any checkpoint, which carries the model
//! parameters, the optimizer moments and the sampler rng position.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::embedder::{
    frames_to_batch, init_model, load_checkpoint, save_checkpoint, CheckpointMeta, Model,
};
use crate::error::{Error, Result};
use crate::ingest::RadarSequence;
use crate::loss::instance_loss_and_grad;
use crate::nn::Adam;
use crate::sampling::build_batch;

/// What a finished (or checkpointed) run reports back.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: u64,
    pub final_loss: f64,
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
}

/// Steps per epoch: explicit if configured, otherwise one pass worth of
/// anchors over the pool.
pub fn steps_per_epoch(cfg: &RunConfig, pool: &[RadarSequence]) -> usize {
    if cfg.train.steps_per_epoch > 0 {
        return cfg.train.steps_per_epoch;
    }
    let frames: usize = pool.iter().map(|s| s.len()).sum();
    (frames / cfg.variant.pairs_per_batch).max(1)
}

struct TrainState {
    model: Model,
    adam: Adam,
    rng: ChaCha8Rng,
    step: u64,
}

fn one_step(state: &mut TrainState, cfg: &RunConfig, pool: &[RadarSequence]) -> Result<f64> {
    let batch = build_batch(pool, &cfg.variant, &cfg.grid, &mut state.rng)?;
    let instances: Vec<_> = batch.iter().map(|p| p.instance.clone()).collect();
    let augmentations: Vec<_> = batch.iter().map(|p| p.augmentation.clone()).collect();
    let side = cfg.embedder.input_side;
    let (fi, cache_i) = state.model.forward_train(frames_to_batch(&instances, side)?)?;
    let (fa, cache_a) = state.model.forward_train(frames_to_batch(&augmentations, side)?)?;

    let fi64 = fi.mapv(f64::from);
    let fa64 = fa.mapv(f64::from);
    let (loss, gi, ga) = instance_loss_and_grad(fi64.view(), fa64.view(), &cfg.loss)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { step: state.step });
    }

    state.model.zero_grads();
    let gi32: Array2<f32> = gi.mapv(|v| v as f32);
    let ga32: Array2<f32> = ga.mapv(|v| v as f32);
    state.model.backward(&cache_i, &gi32);
    state.model.backward(&cache_a, &ga32);

    let grads: Vec<Vec<f32>> = state.model.grad_slices().iter().map(|g| g.to_vec()).collect();
    let grad_refs: Vec<&[f32]> = grads.iter().map(|g| g.as_slice()).collect();
    let mut params = state.model.param_slices_mut();
    state.adam.apply(&mut params, &grad_refs);
    state.step += 1;
    Ok(loss)
}

fn save_trainer_checkpoint(path: &Path, state: &TrainState, cfg: &RunConfig) -> Result<()> {
    let params = state.model.param_slices();
    let n = params.len();
    let mut names: Vec<String> = (0..n).map(|i| format!("param{i}")).collect();
    let mut arrays: Vec<&[f32]> = params;
    for (i, (m, _)) in state.adam.moments.iter().enumerate() {
        names.push(format!("adam_m{i}"));
        arrays.push(m.as_slice());
    }
    for (i, (_, v)) in state.adam.moments.iter().enumerate() {
        names.push(format!("adam_v{i}"));
        arrays.push(v.as_slice());
    }
    let pos = state.rng.get_word_pos();
    let meta = CheckpointMeta {
        embedder: state.model.cfg,
        seed: state.model.seed,
        step: state.step,
        extra: serde_json::json!({
            "kind": "trainer",
            "adam_step": state.adam.step,
            "rng_word_pos_hi": (pos >> 64) as u64,
            "rng_word_pos_lo": pos as u64,
            "config": cfg.to_text(),
        }),
        arrays: names,
    };
    save_checkpoint(path, &meta, &arrays)
}

fn load_trainer_checkpoint(path: &Path, cfg: &RunConfig) -> Result<TrainState> {
    let (meta, arrays) = load_checkpoint(path)?;
    let fail = |detail: &str| Error::CheckpointIntegrity {
        path: path.to_path_buf(),
        detail: detail.into(),
    };
    let stored_cfg = meta.extra["config"]
        .as_str()
        .ok_or_else(|| fail("missing config snapshot"))?;
    let want = cfg.to_text();
    if stored_cfg != want {
        let diff: Vec<String> = stored_cfg
            .lines()
            .zip(want.lines())
            .filter(|(a, b)| a != b)
            .map(|(a, b)| format!("checkpoint `{a}` vs requested `{b}`"))
            .collect();
        return Err(Error::ConfigMismatch {
            diff: diff.join("; "),
        });
    }
    let mut model = init_model(&meta.embedder, meta.seed)?;
    let n = model.param_sizes().len();
    if arrays.len() != 3 * n {
        return Err(fail("expected parameters plus two moment sets"));
    }
    model.load_param_slices(&arrays[..n])?;
    let mut adam = Adam::new(cfg.train.learning_rate as f32, &model.param_sizes());
    adam.step = meta.extra["adam_step"]
        .as_u64()
        .ok_or_else(|| fail("missing adam_step"))?;
    for i in 0..n {
        adam.moments[i].0.copy_from_slice(&arrays[n + i]);
        adam.moments[i].1.copy_from_slice(&arrays[2 * n + i]);
    }
    let hi = meta.extra["rng_word_pos_hi"].as_u64().ok_or_else(|| fail("missing rng position"))?;
    let lo = meta.extra["rng_word_pos_lo"].as_u64().ok_or_else(|| fail("missing rng position"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    rng.set_word_pos(((hi as u128) << 64) | lo as u128);
    Ok(TrainState {
        model,
        adam,
        rng,
        step: meta.step,
    })
}

fn run_loop(
    mut state: TrainState,
    cfg: &RunConfig,
    pool: &[RadarSequence],
    out_dir: &Path,
    append_log: bool,
) -> Result<TrainReport> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let per_epoch = steps_per_epoch(cfg, pool) as u64;
    let total_steps = per_epoch * cfg.train.epochs as u64;
    let log_path = out_dir.join("loss_log.csv");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(append_log)
        .truncate(!append_log)
        .write(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    if !append_log {
        writeln!(log, "step,epoch,loss").map_err(|e| Error::io(&log_path, e))?;
    }

    let ckpt_path = out_dir.join("model.ckpt");
    let mut last_loss = f64::NAN;
    while state.step < total_steps {
        last_loss = one_step(&mut state, cfg, pool)?;
        let epoch = (state.step - 1) / per_epoch + 1;
        writeln!(log, "{},{},{}", state.step, epoch, last_loss)
            .map_err(|e| Error::io(&log_path, e))?;
        if cfg.train.checkpoint_every > 0
            && state.step.is_multiple_of(cfg.train.checkpoint_every as u64)
            && state.step < total_steps
        {
            let p = out_dir.join(format!("checkpoint_{:06}.ckpt", state.step));
            save_trainer_checkpoint(&p, &state, cfg)?;
        }
    }
    save_trainer_checkpoint(&ckpt_path, &state, cfg)?;
    cfg.write_snapshot(&out_dir.join("config.txt"))?;
    Ok(TrainReport {
        steps: state.step,
        final_loss: last_loss,
        checkpoint: ckpt_path,
        loss_log: log_path,
    })
}

/// Train from scratch. Writes `loss_log.csv`, `model.ckpt` and the
/// effective config snapshot under `out_dir`.
pub fn train(cfg: &RunConfig, pool: &[RadarSequence], out_dir: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    let model = init_model(&cfg.embedder, cfg.train.seed)?;
    let adam = Adam::new(cfg.train.learning_rate as f32, &model.param_sizes());
    let rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let state = TrainState {
        model,
        adam,
        rng,
        step: 0,
    };
    run_loop(state, cfg, pool, out_dir, false)
}

/// Resume from a trainer checkpoint; the requested config must match
/// the one stored in the checkpoint exactly.
pub fn resume(
    cfg: &RunConfig,
    checkpoint: &Path,
    pool: &[RadarSequence],
    out_dir: &Path,
) -> Result<TrainReport> {
    cfg.validate()?;
    let state = load_trainer_checkpoint(checkpoint, cfg)?;
    let append = out_dir.join("loss_log.csv").exists();
    run_loop(state, cfg, pool, out_dir, append)
}
