//! Dataset loading: polar radar scans plus a pose track, from a flat
//! on-disk layout (`meta.txt`, `scans/<timestamp>.bin`, `timestamps.txt`,
//! `poses.csv`).
//!
//! On disk a scan is A×R row-major (azimuth-major) unsigned bytes; in
//! memory power is `f32` in [0,1] (byte / 255).

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One full radar sweep: A azimuths by R range bins of power in [0,1].
///
/// Azimuth index `a` looks along bearing `2*PI*a/A` radians clockwise from
/// vehicle-forward.
#[derive(Debug, Clone)]
pub struct PolarScan {
    pub azimuths: usize,
    pub range_bins: usize,
    pub power: Array2<f32>,
    /// Microseconds since epoch.
    pub timestamp: i64,
    /// Metres per range bin.
    pub range_resolution: f64,
}

impl PolarScan {
    pub fn new(power: Array2<f32>, timestamp: i64, range_resolution: f64) -> Result<Self> {
        let (azimuths, range_bins) = power.dim();
        if azimuths < 4 || range_bins < 1 {
            return Err(Error::Argument(format!(
                "scan must be at least 4x1, got {azimuths}x{range_bins}"
            )));
        }
        if power.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Argument("scan power outside [0,1]".into()));
        }
        Ok(PolarScan {
            azimuths,
            range_bins,
            power,
            timestamp,
            range_resolution,
        })
    }

    /// Maximum measurable range in metres.
    pub fn max_range(&self) -> f64 {
        self.range_bins as f64 * self.range_resolution
    }
}

/// GPS/INS-style ground-truth pose sample in a fixed world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRecord {
    pub timestamp: i64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// A loaded foray: scans sorted by timestamp, each bracketed by poses.
#[derive(Debug, Clone)]
pub struct RadarSequence {
    pub scans: Vec<PolarScan>,
    pub poses: Vec<PoseRecord>,
    pub name: String,
    /// Scans discarded at load time because they fell outside pose coverage.
    pub dropped_scans: usize,
}

impl RadarSequence {
    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.scans.iter().map(|s| s.timestamp)
    }
}

/// Scan grid metadata stored beside the scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceMeta {
    pub azimuths: usize,
    pub range_bins: usize,
    pub range_resolution: f64,
}

fn read_meta(path: &Path) -> Result<SequenceMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut azimuths = None;
    let mut range_bins = None;
    let mut range_resolution = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key=value", lineno + 1)))?;
        let value = value.trim();
        match key.trim() {
            "azimuths" => azimuths = Some(value.parse::<usize>()),
            "range_bins" => range_bins = Some(value.parse::<usize>()),
            "range_resolution_m" => {
                range_resolution = Some(value.parse::<f64>().map(Some).unwrap_or(None));
                if range_resolution == Some(None) {
                    return Err(Error::format(path, "bad range_resolution_m"));
                }
            }
            other => return Err(Error::format(path, format!("unknown meta key `{other}`"))),
        }
    }
    let azimuths = azimuths
        .ok_or_else(|| Error::format(path, "missing azimuths="))?
        .map_err(|e| Error::format(path, format!("bad azimuths: {e}")))?;
    let range_bins = range_bins
        .ok_or_else(|| Error::format(path, "missing range_bins="))?
        .map_err(|e| Error::format(path, format!("bad range_bins: {e}")))?;
    let range_resolution = range_resolution
        .flatten()
        .ok_or_else(|| Error::format(path, "missing range_resolution_m="))?;
    if azimuths < 4 || range_bins < 1 || range_resolution <= 0.0 {
        return Err(Error::format(path, "meta values out of range"));
    }
    Ok(SequenceMeta {
        azimuths,
        range_bins,
        range_resolution,
    })
}

fn read_poses(path: &Path) -> Result<Vec<PoseRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "timestamp,x,y,yaw" => {}
        _ => return Err(Error::format(path, "expected header `timestamp,x,y,yaw`")),
    }
    let mut poses = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::format(path, format!("row {}: expected 4 fields", i + 1)));
        }
        let parse_err = |e| Error::format(path, format!("row {}: {}", i + 1, e));
        let pose = PoseRecord {
            timestamp: fields[0].parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?,
            x: fields[1].parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?,
            y: fields[2].parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?,
            yaw: fields[3].parse().map_err(|e: std::num::ParseFloatError| parse_err(e.to_string()))?,
        };
        if let Some(prev) = poses.last() {
            let prev: &PoseRecord = prev;
            if pose.timestamp <= prev.timestamp {
                return Err(Error::format(
                    path,
                    format!("row {}: pose timestamps not strictly increasing", i + 1),
                ));
            }
        }
        poses.push(pose);
    }
    if poses.is_empty() {
        return Err(Error::format(path, "no pose rows"));
    }
    Ok(poses)
}

/// Load a sequence from `root_path` laid out as `meta.txt`, `scans/`,
/// `timestamps.txt` and `poses.csv`.
///
/// Scans whose timestamp is not bracketed by the pose track are dropped
/// with a warning; more than 10% dropped is an error.
pub fn load_sequence(root_path: &Path) -> Result<RadarSequence> {
    if !root_path.is_dir() {
        return Err(Error::Missing(root_path.to_path_buf()));
    }
    let meta_path = root_path.join("meta.txt");
    let ts_path = root_path.join("timestamps.txt");
    let poses_path = root_path.join("poses.csv");
    let scans_dir = root_path.join("scans");
    for p in [&meta_path, &ts_path, &poses_path, &scans_dir] {
        if !p.exists() {
            return Err(Error::Missing(p.clone()));
        }
    }

    let meta = read_meta(&meta_path)?;
    let poses = read_poses(&poses_path)?;

    let ts_text = fs::read_to_string(&ts_path).map_err(|e| Error::io(&ts_path, e))?;
    let mut timestamps = Vec::new();
    for (i, line) in ts_text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let t: i64 = line
            .parse()
            .map_err(|e| Error::format(&ts_path, format!("line {}: {}", i + 1, e)))?;
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(Error::format(
                    &ts_path,
                    format!("line {}: timestamps not strictly increasing", i + 1),
                ));
            }
        }
        timestamps.push(t);
    }
    if timestamps.is_empty() {
        return Err(Error::format(&ts_path, "sequence contains no scans"));
    }

    let pose_lo = poses.first().unwrap().timestamp;
    let pose_hi = poses.last().unwrap().timestamp;
    let expected_len = meta.azimuths * meta.range_bins;

    let mut scans = Vec::with_capacity(timestamps.len());
    let mut dropped = 0usize;
    for &t in &timestamps {
        if t < pose_lo || t > pose_hi {
            dropped += 1;
            continue;
        }
        let scan_path = scans_dir.join(format!("{t}.bin"));
        let bytes = fs::read(&scan_path).map_err(|e| Error::io(&scan_path, e))?;
        if bytes.len() != expected_len {
            return Err(Error::format(
                &scan_path,
                format!("expected {} bytes, found {}", expected_len, bytes.len()),
            ));
        }
        let power = Array2::from_shape_vec(
            (meta.azimuths, meta.range_bins),
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
        .expect("shape checked above");
        scans.push(PolarScan {
            azimuths: meta.azimuths,
            range_bins: meta.range_bins,
            power,
            timestamp: t,
            range_resolution: meta.range_resolution,
        });
    }

    if dropped > 0 {
        eprintln!(
            "warning: dropped {dropped}/{} scans outside pose coverage in {}",
            timestamps.len(),
            root_path.display()
        );
        if dropped * 10 > timestamps.len() {
            return Err(Error::format(
                root_path,
                format!("{dropped}/{} scans outside pose coverage", timestamps.len()),
            ));
        }
    }
    if scans.is_empty() {
        return Err(Error::format(root_path, "sequence contains no usable scans"));
    }

    let name = root_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());

    Ok(RadarSequence {
        scans,
        poses,
        name,
        dropped_scans: dropped,
    })
}

/// Write a sequence in the same layout `load_sequence` reads.
///
/// Power is quantized to bytes by round(p * 255).
pub fn write_sequence(
    root_path: &Path,
    scans: &[PolarScan],
    poses: &[PoseRecord],
) -> Result<()> {
    let scans_dir = root_path.join("scans");
    fs::create_dir_all(&scans_dir).map_err(|e| Error::io(&scans_dir, e))?;

    let first = scans
        .first()
        .ok_or_else(|| Error::Argument("cannot write an empty sequence".into()))?;
    let meta_path = root_path.join("meta.txt");
    fs::write(
        &meta_path,
        format!(
            "azimuths={}\nrange_bins={}\nrange_resolution_m={}\n",
            first.azimuths, first.range_bins, first.range_resolution
        ),
    )
    .map_err(|e| Error::io(&meta_path, e))?;

    let mut ts_file = Vec::new();
    for scan in scans {
        if scan.azimuths != first.azimuths || scan.range_bins != first.range_bins {
            return Err(Error::Argument("scan shapes differ within sequence".into()));
        }
        let bytes: Vec<u8> = scan
            .power
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let scan_path = scans_dir.join(format!("{}.bin", scan.timestamp));
        fs::write(&scan_path, &bytes).map_err(|e| Error::io(&scan_path, e))?;
        writeln!(ts_file, "{}", scan.timestamp).expect("vec write");
    }
    let ts_path = root_path.join("timestamps.txt");
    fs::write(&ts_path, ts_file).map_err(|e| Error::io(&ts_path, e))?;

    let mut pose_file = String::from("timestamp,x,y,yaw\n");
    for p in poses {
        pose_file.push_str(&format!("{},{},{},{}\n", p.timestamp, p.x, p.y, p.yaw));
    }
    let poses_path = root_path.join("poses.csv");
    fs::write(&poses_path, pose_file).map_err(|e| Error::io(&poses_path, e))?;
    Ok(())
}

/// Wrap an angle to (-PI, PI].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Interpolated pose at time `t` (microseconds): linear in x/y,
/// shortest-arc in yaw. Exact at sample points.
pub fn pose_at(seq: &RadarSequence, t: i64) -> Result<PoseRecord> {
    let poses = &seq.poses;
    let lo = poses.first().expect("sequence invariant").timestamp;
    let hi = poses.last().expect("sequence invariant").timestamp;
    if t < lo || t > hi {
        return Err(Error::OutOfRange {
            t_us: t,
            lo_us: lo,
            hi_us: hi,
        });
    }
    let idx = match poses.binary_search_by_key(&t, |p| p.timestamp) {
        Ok(i) => return Ok(poses[i]),
        Err(i) => i,
    };
    let a = &poses[idx - 1];
    let b = &poses[idx];
    let w = (t - a.timestamp) as f64 / (b.timestamp - a.timestamp) as f64;
    let dyaw = wrap_angle(b.yaw - a.yaw);
    Ok(PoseRecord {
        timestamp: t,
        x: a.x + w * (b.x - a.x),
        y: a.y + w * (b.y - a.y),
        yaw: wrap_angle(a.yaw + w * dyaw),
    })
}
