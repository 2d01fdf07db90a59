//! Flat `key = value` run configuration with dotted keys, e.g.
//!
//! ```text
//! variant.name = vTR2
//! train.learning_rate = 3e-4
//! ```
//!
//! Unknown keys are errors. Every command writes the full effective
//! configuration back out next to its outputs, and re-running from that
//! snapshot reproduces the run.

use std::fs;
use std::path::Path;

use crate::embedder::EmbedderConfig;
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::geometry::GridSpec;
use crate::loss::LossConfig;
use crate::sampling::VariantConfig;
use crate::simworld::SimConfig;

/// Optimization-loop parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// 0 = one pass worth of anchors (dataset frames / pairs_per_batch).
    pub steps_per_epoch: usize,
    /// Checkpoint cadence in steps; 0 = only at completion.
    pub checkpoint_every: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 3e-4,
            epochs: 10,
            seed: 0,
            steps_per_epoch: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 {
            return Err(Error::Config("train.learning_rate must be >= 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Dataset-generation parameters for the `simgen` command.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub sim: SimConfig,
    pub n_scatterers: usize,
    pub extent_m: f64,
    pub trajectory: Trajectory,
    pub loop_radius_m: f64,
    pub line_length_m: f64,
    pub speed_mps: f64,
    pub reverse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trajectory {
    Loop,
    Line,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            sim: SimConfig::default(),
            n_scatterers: 4000,
            extent_m: 300.0,
            trajectory: Trajectory::Loop,
            loop_radius_m: 200.0,
            line_length_m: 400.0,
            speed_mps: 5.0,
            reverse: false,
        }
    }
}

/// Everything a run needs, with defaults for every field.
#[derive(Debug, Clone, PartialEq)]
#[derive(Default)]
pub struct RunConfig {
    pub variant: VariantConfig,
    pub train: TrainParams,
    pub embedder: EmbedderConfig,
    pub loss: LossConfig,
    pub grid: GridSpec,
    pub eval: EvalConfig,
    pub sim: SimParams,
}


fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value for `{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value for `{key}`: expected true/false"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|v| parse_num(key, v.trim()))
        .collect()
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "variant.name" => self.variant.variant = v.parse()?,
            "variant.positive_offset_s" => self.variant.positive_offset = parse_num(key, v)?,
            "variant.negative_offset_s" => self.variant.negative_offset = parse_num(key, v)?,
            "variant.negative_aug_offset_s" => {
                self.variant.negative_aug_offset = parse_num(key, v)?
            }
            "variant.time_tolerance_s" => self.variant.time_tolerance = parse_num(key, v)?,
            "variant.pairs_per_batch" => self.variant.pairs_per_batch = parse_num(key, v)?,

            "train.learning_rate" => self.train.learning_rate = parse_num(key, v)?,
            "train.epochs" => self.train.epochs = parse_num(key, v)?,
            "train.seed" => self.train.seed = parse_num(key, v)?,
            "train.steps_per_epoch" => self.train.steps_per_epoch = parse_num(key, v)?,
            "train.checkpoint_every" => self.train.checkpoint_every = parse_num(key, v)?,

            "embedder.backbone" => self.embedder.backbone = v.parse()?,
            "embedder.embedding_dim" => self.embedder.embedding_dim = parse_num(key, v)?,
            "embedder.input_side" => self.embedder.input_side = parse_num(key, v)?,
            "embedder.pretrained" => self.embedder.pretrained = parse_bool(key, v)?,

            "loss.temperature" => self.loss.temperature = parse_num(key, v)?,

            "grid.side_pixels" => self.grid.side_pixels = parse_num(key, v)?,
            "grid.metres_per_pixel" => self.grid.metres_per_pixel = parse_num(key, v)?,

            "eval.boundary_m" => self.eval.boundary = parse_num(key, v)?,
            "eval.n_candidates" => self.eval.n_candidates = parse_list(key, v)?,
            "eval.precision_targets" => self.eval.precision_targets = parse_list(key, v)?,

            "sim.azimuths" => self.sim.sim.azimuths = parse_num(key, v)?,
            "sim.range_bins" => self.sim.sim.range_bins = parse_num(key, v)?,
            "sim.range_resolution_m" => self.sim.sim.range_resolution = parse_num(key, v)?,
            "sim.scan_rate_hz" => self.sim.sim.scan_rate = parse_num(key, v)?,
            "sim.speckle_sigma" => self.sim.sim.speckle_sigma = parse_num(key, v)?,
            "sim.beam_width_rad" => self.sim.sim.beam_width = parse_num(key, v)?,
            "sim.seed" => self.sim.sim.seed = parse_num(key, v)?,
            "sim.n_scatterers" => self.sim.n_scatterers = parse_num(key, v)?,
            "sim.extent_m" => self.sim.extent_m = parse_num(key, v)?,
            "sim.trajectory" => {
                self.sim.trajectory = match v {
                    "loop" => Trajectory::Loop,
                    "line" => Trajectory::Line,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad value for `{key}`: expected loop or line"
                        )))
                    }
                }
            }
            "sim.loop_radius_m" => self.sim.loop_radius_m = parse_num(key, v)?,
            "sim.line_length_m" => self.sim.line_length_m = parse_num(key, v)?,
            "sim.speed_mps" => self.sim.speed_mps = parse_num(key, v)?,
            "sim.reverse" => self.sim.reverse = parse_bool(key, v)?,

            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse_text(text: &str, origin: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected `key = value`", lineno + 1))
            })?;
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        self.train.validate()?;
        self.embedder.validate()?;
        self.loss.validate()?;
        self.grid.validate()?;
        self.eval.validate()?;
        self.sim.sim.validate()?;
        if self.embedder.input_side != self.grid.side_pixels {
            return Err(Error::Config(format!(
                "embedder.input_side ({}) must equal grid.side_pixels ({})",
                self.embedder.input_side, self.grid.side_pixels
            )));
        }
        Ok(())
    }

    /// Full key set in the same format `parse_text` reads.
    pub fn to_text(&self) -> String {
        let list = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let flist = |xs: &[f64]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "variant.name = {}\n\
             variant.positive_offset_s = {}\n\
             variant.negative_offset_s = {}\n\
             variant.negative_aug_offset_s = {}\n\
             variant.time_tolerance_s = {}\n\
             variant.pairs_per_batch = {}\n\
             train.learning_rate = {}\n\
             train.epochs = {}\n\
             train.seed = {}\n\
             train.steps_per_epoch = {}\n\
             train.checkpoint_every = {}\n\
             embedder.backbone = {}\n\
             embedder.embedding_dim = {}\n\
             embedder.input_side = {}\n\
             embedder.pretrained = {}\n\
             loss.temperature = {}\n\
             grid.side_pixels = {}\n\
             grid.metres_per_pixel = {}\n\
             eval.boundary_m = {}\n\
             eval.n_candidates = {}\n\
             eval.precision_targets = {}\n\
             sim.azimuths = {}\n\
             sim.range_bins = {}\n\
             sim.range_resolution_m = {}\n\
             sim.scan_rate_hz = {}\n\
             sim.speckle_sigma = {}\n\
             sim.beam_width_rad = {}\n\
             sim.seed = {}\n\
             sim.n_scatterers = {}\n\
             sim.extent_m = {}\n\
             sim.trajectory = {}\n\
             sim.loop_radius_m = {}\n\
             sim.line_length_m = {}\n\
             sim.speed_mps = {}\n\
             sim.reverse = {}\n",
            self.variant.variant,
            self.variant.positive_offset,
            self.variant.negative_offset,
            self.variant.negative_aug_offset,
            self.variant.time_tolerance,
            self.variant.pairs_per_batch,
            self.train.learning_rate,
            self.train.epochs,
            self.train.seed,
            self.train.steps_per_epoch,
            self.train.checkpoint_every,
            self.embedder.backbone,
            self.embedder.embedding_dim,
            self.embedder.input_side,
            self.embedder.pretrained,
            self.loss.temperature,
            self.grid.side_pixels,
            self.grid.metres_per_pixel,
            self.eval.boundary,
            list(&self.eval.n_candidates),
            flist(&self.eval.precision_targets),
            self.sim.sim.azimuths,
            self.sim.sim.range_bins,
            self.sim.sim.range_resolution,
            self.sim.sim.scan_rate,
            self.sim.sim.speckle_sigma,
            self.sim.sim.beam_width,
            self.sim.sim.seed,
            self.sim.n_scatterers,
            self.sim.extent_m,
            match self.sim.trajectory {
                Trajectory::Loop => "loop",
                Trajectory::Line => "line",
            },
            self.sim.loop_radius_m,
            self.sim.line_length_m,
            self.sim.speed_mps,
            self.sim.reverse,
        )
    }

    /// Write the effective-config snapshot next to a run's outputs.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Variant;

    #[test]
    fn defaults_match_documented_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.learning_rate, 3e-4);
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.variant.pairs_per_batch, 12);
        assert_eq!(cfg.variant.positive_offset, 2.0);
        assert_eq!(cfg.variant.negative_offset, 6.0);
        assert_eq!(cfg.grid.side_pixels, 256);
        assert_eq!(cfg.grid.metres_per_pixel, 0.5);
        assert_eq!(cfg.eval.boundary, 25.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_an_error_naming_the_key() {
        let err = RunConfig::default()
            .apply("train.momentum", "0.9")
            .unwrap_err();
        assert!(err.to_string().contains("train.momentum"), "{err}");
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply("variant.name", "vTR").unwrap();
        cfg.apply("train.learning_rate", "1e-3").unwrap();
        cfg.apply("grid.side_pixels", "128").unwrap();
        cfg.apply("embedder.input_side", "128").unwrap();
        cfg.apply("eval.n_candidates", "1, 2, 5").unwrap();
        let text = cfg.to_text();
        let back = RunConfig::parse_text(&text, "snapshot").unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn mismatched_grid_and_input_side_rejected() {
        let mut cfg = RunConfig::default();
        cfg.apply("grid.side_pixels", "128").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = RunConfig::parse_text("# comment\n\nvariant.name = vT\n", "test").unwrap();
        assert_eq!(cfg.variant.variant, Variant::VT);
    }
}
