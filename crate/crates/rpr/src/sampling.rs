//! Training-batch construction for the four variants:
//!
//! * `vR`   — positive is a spun copy of the anchor.
//! * `vT`   — positive is the real frame ~2 s later, no spin.
//! * `vTR`  — frame ~2 s later, with a random spin applied to exactly
//!   one of the pair (chosen uniformly).
//! * `vTR2` — as `vTR`, plus an informed negative pair: the frame ~6 s
//!   later together with a spun copy of the frame ~4 s later.
//!
//! Offsets are realized on timestamps with a tolerance, not frame
//! strides, so dropped frames and rate drift do not bias the sampling.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{polar_to_cartesian, random_spin, spin_polar, CartesianFrame, GridSpec};
use crate::ingest::RadarSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    VR,
    VT,
    VTR,
    VTR2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::VR => write!(f, "vR"),
            Variant::VT => write!(f, "vT"),
            Variant::VTR => write!(f, "vTR"),
            Variant::VTR2 => write!(f, "vTR2"),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vR" => Ok(Variant::VR),
            "vT" => Ok(Variant::VT),
            "vTR" => Ok(Variant::VTR),
            "vTR2" => Ok(Variant::VTR2),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected vR, vT, vTR or vTR2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VariantConfig {
    pub variant: Variant,
    /// Seconds to the positive frame.
    pub positive_offset: f64,
    /// Seconds to the informed negative frame.
    pub negative_offset: f64,
    /// Seconds to the negative's augmentation source frame.
    pub negative_aug_offset: f64,
    /// Timestamp matching tolerance, seconds.
    pub time_tolerance: f64,
    /// Instance-pairs per optimization step.
    pub pairs_per_batch: usize,
}

impl Default for VariantConfig {
    fn default() -> Self {
        VariantConfig {
            variant: Variant::VTR2,
            positive_offset: 2.0,
            negative_offset: 6.0,
            negative_aug_offset: 4.0,
            time_tolerance: 0.3,
            pairs_per_batch: 12,
        }
    }
}

impl VariantConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.positive_offset > 0.0
            && self.positive_offset < self.negative_aug_offset
            && self.negative_aug_offset < self.negative_offset)
        {
            return Err(Error::Config(
                "offsets must satisfy 0 < positive < negative_aug < negative".into(),
            ));
        }
        if self.time_tolerance <= 0.0 {
            return Err(Error::Config("time_tolerance must be > 0".into()));
        }
        if self.pairs_per_batch < 2 {
            return Err(Error::Config("pairs_per_batch must be >= 2".into()));
        }
        if self.variant == Variant::VTR2 && !self.pairs_per_batch.is_multiple_of(2) {
            return Err(Error::Config(
                "vTR2 needs an even pairs_per_batch (two pairs per quadruple)".into(),
            ));
        }
        Ok(())
    }
}

/// Anchor/positive (and, for vTR2, negative/negative-augmentation)
/// frames for one sampled instance.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub anchor: CartesianFrame,
    pub positive: CartesianFrame,
    pub negative: Option<CartesianFrame>,
    pub negative_aug: Option<CartesianFrame>,
    pub anchor_timestamp: i64,
}

/// One (instance, augmentation) pair as fed to the loss.
#[derive(Debug, Clone)]
pub struct InstancePair {
    pub instance: CartesianFrame,
    pub augmentation: CartesianFrame,
}

/// Index of the scan whose timestamp is closest to `t`; error if the
/// nearest gap exceeds `tol` seconds.
pub fn nearest_frame(seq: &RadarSequence, t: i64, tol: f64) -> Result<usize> {
    if seq.is_empty() {
        return Err(Error::Argument("empty sequence".into()));
    }
    let idx = seq
        .scans
        .binary_search_by_key(&t, |s| s.timestamp)
        .unwrap_or_else(|i| i);
    let mut best = None;
    for cand in [idx.wrapping_sub(1), idx] {
        if let Some(scan) = seq.scans.get(cand) {
            let gap = (scan.timestamp - t).abs();
            if best.is_none_or(|(_, g)| gap < g) {
                best = Some((cand, gap));
            }
        }
    }
    let (best_idx, gap_us) = best.expect("non-empty sequence");
    let gap_s = gap_us as f64 / 1e6;
    if gap_s > tol {
        return Err(Error::FrameGap {
            t_us: t,
            tol_s: tol,
            gap_s,
        });
    }
    Ok(best_idx)
}

fn offset_frame(seq: &RadarSequence, anchor_ts: i64, offset_s: f64, tol: f64) -> Result<usize> {
    nearest_frame(seq, anchor_ts + (offset_s * 1e6).round() as i64, tol)
}

/// Build one training sample around `anchor_idx` per the configured
/// variant.
pub fn build_sample(
    seq: &RadarSequence,
    anchor_idx: usize,
    cfg: &VariantConfig,
    grid: &GridSpec,
    rng: &mut impl Rng,
) -> Result<TrainingSample> {
    cfg.validate()?;
    let anchor_scan = seq
        .scans
        .get(anchor_idx)
        .ok_or_else(|| Error::Argument(format!("anchor index {anchor_idx} out of range")))?;
    let anchor_ts = anchor_scan.timestamp;
    let a_count = anchor_scan.azimuths;

    let project = |scan: &crate::ingest::PolarScan| polar_to_cartesian(scan, grid);

    let (anchor, positive) = match cfg.variant {
        Variant::VR => {
            let shift = random_spin(rng, a_count);
            let spun = spin_polar(anchor_scan, shift)?;
            (project(anchor_scan)?, project(&spun)?)
        }
        Variant::VT => {
            let pos_idx = offset_frame(seq, anchor_ts, cfg.positive_offset, cfg.time_tolerance)?;
            (project(anchor_scan)?, project(&seq.scans[pos_idx])?)
        }
        Variant::VTR | Variant::VTR2 => {
            let pos_idx = offset_frame(seq, anchor_ts, cfg.positive_offset, cfg.time_tolerance)?;
            let spin_anchor: bool = rng.random();
            let shift = random_spin(rng, a_count);
            if spin_anchor {
                let spun = spin_polar(anchor_scan, shift)?;
                (project(&spun)?, project(&seq.scans[pos_idx])?)
            } else {
                let spun = spin_polar(&seq.scans[pos_idx], shift)?;
                (project(anchor_scan)?, project(&spun)?)
            }
        }
    };

    let (negative, negative_aug) = if cfg.variant == Variant::VTR2 {
        let neg_idx = offset_frame(seq, anchor_ts, cfg.negative_offset, cfg.time_tolerance)?;
        let neg_aug_idx =
            offset_frame(seq, anchor_ts, cfg.negative_aug_offset, cfg.time_tolerance)?;
        let shift = random_spin(rng, a_count);
        let spun = spin_polar(&seq.scans[neg_aug_idx], shift)?;
        (Some(project(&seq.scans[neg_idx])?), Some(project(&spun)?))
    } else {
        (None, None)
    };

    Ok(TrainingSample {
        anchor,
        positive,
        negative,
        negative_aug,
        anchor_timestamp: anchor_ts,
    })
}

/// Retry budget for anchors that fail with a frame gap.
const ANCHOR_RETRY_BUDGET: usize = 100;

/// Draw anchors uniformly over all frames of all sequences until the
/// batch holds `pairs_per_batch` instance-pairs.
pub fn build_batch(
    pool: &[RadarSequence],
    cfg: &VariantConfig,
    grid: &GridSpec,
    rng: &mut impl Rng,
) -> Result<Vec<InstancePair>> {
    cfg.validate()?;
    let total: usize = pool.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::Argument("empty sequence pool".into()));
    }
    let mut pairs = Vec::with_capacity(cfg.pairs_per_batch);
    let mut failures = 0usize;
    while pairs.len() < cfg.pairs_per_batch {
        let mut flat = rng.random_range(0..total);
        let (seq, idx) = pool
            .iter()
            .find_map(|s| {
                if flat < s.len() {
                    Some((s, flat))
                } else {
                    flat -= s.len();
                    None
                }
            })
            .expect("flat index within total");
        match build_sample(seq, idx, cfg, grid, rng) {
            Ok(sample) => {
                pairs.push(InstancePair {
                    instance: sample.anchor,
                    augmentation: sample.positive,
                });
                if let (Some(n), Some(na)) = (sample.negative, sample.negative_aug) {
                    pairs.push(InstancePair {
                        instance: n,
                        augmentation: na,
                    });
                }
            }
            Err(Error::FrameGap { .. }) => {
                failures += 1;
                if failures >= ANCHOR_RETRY_BUDGET {
                    return Err(Error::BatchConstruction { attempts: failures });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(pairs)
}
