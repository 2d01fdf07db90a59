//! Retrieval evaluation: embedding databases, distance and ground-truth
//! matrices, PR curves, Recall@P, Recall@N, F-scores and matrix images.
//!
//! The PR formulation is single-nearest-neighbour: each query predicts
//! its nearest database entry, and a threshold sweep over NN distances
//! turns predictions on and off. Queries with no geometrically true
//! database entry at all are excluded from recall denominators (no
//! method could localise them); they still count against precision when
//! they predict.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedder::{embed, Model};
use crate::error::{Error, Result};
use crate::geometry::{polar_to_cartesian, GridSpec};
use crate::ingest::{pose_at, RadarSequence};

/// Unit-norm embeddings aligned with timestamps and planar positions.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub embeddings: Array2<f32>,
    pub timestamps: Vec<i64>,
    pub positions: Vec<(f64, f64)>,
}

impl EmbeddingSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.embeddings.nrows();
        if n == 0 {
            return Err(Error::Argument("embedding set is empty".into()));
        }
        if self.timestamps.len() != n || self.positions.len() != n {
            return Err(Error::Argument("embedding set arrays are misaligned".into()));
        }
        for (i, row) in self.embeddings.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-5 {
                return Err(Error::Argument(format!(
                    "embedding {i} has norm {norm}, expected unit"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// True-positive boundary in metres.
    pub boundary: f64,
    pub n_candidates: Vec<usize>,
    /// Percent precision targets for Recall@P.
    pub precision_targets: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            boundary: 25.0,
            n_candidates: vec![1, 2, 3],
            precision_targets: vec![95.0, 98.0, 99.0],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.boundary <= 0.0 {
            return Err(Error::Config("eval.boundary_m must be > 0".into()));
        }
        if self.n_candidates.contains(&0) {
            return Err(Error::Config("eval.n_candidates must be >= 1".into()));
        }
        if self
            .precision_targets
            .iter()
            .any(|&p| !(0.0 < p && p <= 100.0))
        {
            return Err(Error::Config(
                "eval.precision_targets must lie in (0, 100]".into(),
            ));
        }
        Ok(())
    }
}

/// One PR curve sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Embed every scan of a sequence; positions come from pose
/// interpolation at scan timestamps.
pub fn build_embedding_set(
    model: &Model,
    seq: &RadarSequence,
    grid: &GridSpec,
) -> Result<EmbeddingSet> {
    let dim = {
        // Probe output dimension from config.
        model.cfg.embedding_dim
    };
    let mut embeddings = Array2::<f32>::zeros((seq.len(), dim));
    let mut timestamps = Vec::with_capacity(seq.len());
    let mut positions = Vec::with_capacity(seq.len());
    const CHUNK: usize = 16;
    let mut row = 0usize;
    for chunk in seq.scans.chunks(CHUNK) {
        let frames: Vec<_> = chunk
            .iter()
            .map(|s| polar_to_cartesian(s, grid))
            .collect::<Result<_>>()?;
        for e in embed(model, &frames)? {
            embeddings
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&e.vector[..]));
            row += 1;
        }
    }
    for scan in &seq.scans {
        let pose = pose_at(seq, scan.timestamp)?;
        timestamps.push(scan.timestamp);
        positions.push((pose.x, pose.y));
    }
    let set = EmbeddingSet {
        embeddings,
        timestamps,
        positions,
    };
    set.validate()?;
    Ok(set)
}

/// Q x D Euclidean distances between unit embeddings, computed as
/// sqrt(2 - 2 cos) from dot products.
pub fn distance_matrix(queries: &EmbeddingSet, database: &EmbeddingSet) -> Result<Array2<f32>> {
    let d_q = queries.embeddings.ncols();
    let d_d = database.embeddings.ncols();
    if d_q != d_d {
        return Err(Error::Argument(format!(
            "embedding dimension mismatch: {d_q} vs {d_d}"
        )));
    }
    let (nq, nd) = (queries.len(), database.len());
    let mut out = Array2::<f32>::zeros((nq, nd));
    for q in 0..nq {
        let qr = queries.embeddings.row(q);
        for d in 0..nd {
            let dr = database.embeddings.row(d);
            let dot: f64 = qr
                .iter()
                .zip(dr.iter())
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            out[[q, d]] = (2.0 - 2.0 * dot).max(0.0).sqrt() as f32;
        }
    }
    Ok(out)
}

/// Q x D boolean matrix: true iff planar position distance <= boundary.
pub fn ground_truth_matrix(
    queries: &EmbeddingSet,
    database: &EmbeddingSet,
    boundary: f64,
) -> Array2<bool> {
    let (nq, nd) = (queries.len(), database.len());
    Array2::from_shape_fn((nq, nd), |(q, d)| {
        let (qx, qy) = queries.positions[q];
        let (dx, dy) = database.positions[d];
        ((qx - dx).powi(2) + (qy - dy).powi(2)).sqrt() <= boundary
    })
}

/// Indices of the `n` smallest entries of a row, ties broken by lower
/// index.
fn top_n_indices(row: ndarray::ArrayView1<f32>, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| {
        row[a]
            .partial_cmp(&row[b])
            .expect("finite distances")
            .then(a.cmp(&b))
    });
    idx.truncate(n);
    idx
}

/// Fraction of queries whose top-N candidates include a true entry.
/// Queries with no true entry anywhere are excluded from the
/// denominator.
pub fn recall_at_n(dist: &Array2<f32>, gt: &Array2<bool>, n: usize) -> Result<f64> {
    if dist.dim() != gt.dim() {
        return Err(Error::Argument("distance/gt shape mismatch".into()));
    }
    if n == 0 || n > dist.ncols() {
        return Err(Error::Argument(format!(
            "N={n} out of range for {} database entries",
            dist.ncols()
        )));
    }
    let mut eligible = 0usize;
    let mut hits = 0usize;
    for q in 0..dist.nrows() {
        if !(0..gt.ncols()).any(|d| gt[[q, d]]) {
            continue;
        }
        eligible += 1;
        if top_n_indices(dist.row(q), n).iter().any(|&d| gt[[q, d]]) {
            hits += 1;
        }
    }
    if eligible == 0 {
        return Err(Error::Argument(
            "no query has any true database entry; recall undefined".into(),
        ));
    }
    Ok(hits as f64 / eligible as f64)
}

/// Single-nearest-neighbour PR curve swept over all distinct NN
/// distances, thresholds increasing.
pub fn pr_curve(dist: &Array2<f32>, gt: &Array2<bool>) -> Result<Vec<PrPoint>> {
    if dist.dim() != gt.dim() {
        return Err(Error::Argument("distance/gt shape mismatch".into()));
    }
    let nq = dist.nrows();
    if nq == 0 || dist.ncols() == 0 {
        return Err(Error::Argument("empty matrices".into()));
    }
    // Per query: NN distance, whether the NN is correct, and whether the
    // query is localisable at all.
    let mut entries = Vec::with_capacity(nq);
    let mut eligible = 0usize;
    for q in 0..nq {
        let nn = top_n_indices(dist.row(q), 1)[0];
        let has_true = (0..gt.ncols()).any(|d| gt[[q, d]]);
        if has_true {
            eligible += 1;
        }
        entries.push((dist[[q, nn]] as f64, gt[[q, nn]]));
    }
    if eligible == 0 {
        return Err(Error::Argument(
            "no query has any true database entry; recall undefined".into(),
        ));
    }
    let mut thresholds: Vec<f64> = entries.iter().map(|e| e.0).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    thresholds.dedup();

    let mut curve = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let mut predicted = 0usize;
        let mut correct = 0usize;
        for &(nn_dist, nn_true) in &entries {
            if nn_dist <= t {
                predicted += 1;
                if nn_true {
                    correct += 1;
                }
            }
        }
        let precision = if predicted > 0 {
            correct as f64 / predicted as f64
        } else {
            1.0
        };
        curve.push(PrPoint {
            threshold: t,
            precision,
            recall: correct as f64 / eligible as f64,
        });
    }
    Ok(curve)
}

/// Maximum recall among curve points with precision >= target percent.
pub fn recall_at_precision(curve: &[PrPoint], target_percent: f64) -> f64 {
    curve
        .iter()
        .filter(|p| p.precision * 100.0 >= target_percent)
        .map(|p| p.recall)
        .fold(0.0, f64::max)
}

/// (F1, F2, F0.5): maxima over curve points of the F-beta score.
pub fn f_scores(curve: &[PrPoint]) -> (f64, f64, f64) {
    let f_beta = |beta: f64| -> f64 {
        curve
            .iter()
            .map(|p| {
                let denom = beta * beta * p.precision + p.recall;
                if denom == 0.0 {
                    0.0
                } else {
                    (1.0 + beta * beta) * p.precision * p.recall / denom
                }
            })
            .fold(0.0, f64::max)
    };
    (f_beta(1.0), f_beta(2.0), f_beta(0.5))
}

// ---------------------------------------------------------------------------
// Matrix files: `RPEM` f32 and `RPEB` boolean, u32 rows, u32 cols,
// row-major little-endian payload.
// ---------------------------------------------------------------------------

pub fn write_matrix_f32(path: &Path, m: &Array2<f32>) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + m.len() * 4);
    buf.extend_from_slice(b"RPEM");
    buf.write_u32::<LittleEndian>(m.nrows() as u32).unwrap();
    buf.write_u32::<LittleEndian>(m.ncols() as u32).unwrap();
    for &v in m.iter() {
        buf.write_f32::<LittleEndian>(v).unwrap();
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_f32(path: &Path) -> Result<Array2<f32>> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = &buf[..];
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &magic != b"RPEM" {
        return Err(Error::format(path, "bad magic, expected RPEM"));
    }
    let rows = r.read_u32::<LittleEndian>().map_err(|_| Error::format(path, "truncated"))? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(|_| Error::format(path, "truncated"))? as usize;
    if r.len() != rows * cols * 4 {
        return Err(Error::format(path, "payload size mismatch"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(r.read_f32::<LittleEndian>().unwrap());
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_matrix_bool(path: &Path, m: &Array2<bool>) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + m.len());
    buf.extend_from_slice(b"RPEB");
    buf.write_u32::<LittleEndian>(m.nrows() as u32).unwrap();
    buf.write_u32::<LittleEndian>(m.ncols() as u32).unwrap();
    buf.extend(m.iter().map(|&b| b as u8));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_bool(path: &Path) -> Result<Array2<bool>> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 12 || &buf[0..4] != b"RPEB" {
        return Err(Error::format(path, "bad magic, expected RPEB"));
    }
    let rows = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    if buf.len() != 12 + rows * cols {
        return Err(Error::format(path, "payload size mismatch"));
    }
    let data: Vec<bool> = buf[12..].iter().map(|&b| b != 0).collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::format(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Embedding-set files: embeddings.bin (RPEM) + meta.csv (timestamp,x,y).
// ---------------------------------------------------------------------------

pub fn save_embedding_set(dir: &Path, set: &EmbeddingSet) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix_f32(&dir.join("embeddings.bin"), &set.embeddings)?;
    let mut meta = String::from("timestamp,x,y\n");
    for i in 0..set.len() {
        meta.push_str(&format!(
            "{},{},{}\n",
            set.timestamps[i], set.positions[i].0, set.positions[i].1
        ));
    }
    let meta_path = dir.join("meta.csv");
    fs::write(&meta_path, meta).map_err(|e| Error::io(meta_path, e))
}

pub fn load_embedding_set(dir: &Path) -> Result<EmbeddingSet> {
    let embeddings = read_matrix_f32(&dir.join("embeddings.bin"))?;
    let meta_path = dir.join("meta.csv");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "timestamp,x,y" => {}
        _ => return Err(Error::format(&meta_path, "expected header `timestamp,x,y`")),
    }
    let mut timestamps = Vec::new();
    let mut positions = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 3 {
            return Err(Error::format(&meta_path, format!("row {}: expected 3 fields", i + 1)));
        }
        let bad = |e: String| Error::format(&meta_path, format!("row {}: {e}", i + 1));
        timestamps.push(fields[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?);
        positions.push((
            fields[1].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            fields[2].parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
        ));
    }
    let set = EmbeddingSet {
        embeddings,
        timestamps,
        positions,
    };
    set.validate()?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Report + rendering
// ---------------------------------------------------------------------------

/// All scalar metrics plus references to the matrix files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub boundary_m: f64,
    pub num_queries: usize,
    pub num_database: usize,
    pub pr_curve: Vec<PrPoint>,
    /// (precision target percent, recall)
    pub recall_at_p: Vec<(f64, f64)>,
    pub recall_at_n: Vec<(usize, f64)>,
    pub f1: f64,
    pub f2: f64,
    pub f0_5: f64,
    /// Relative paths of the matrix files written beside the report.
    pub files: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Compute every metric and write the report plus matrix files into
/// `out_dir`.
pub fn run_evaluation(
    queries: &EmbeddingSet,
    database: &EmbeddingSet,
    cfg: &EvalConfig,
    out_dir: &Path,
) -> Result<EvalReport> {
    cfg.validate()?;
    queries.validate()?;
    database.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let dist = distance_matrix(queries, database)?;
    let gt = ground_truth_matrix(queries, database, cfg.boundary);
    let curve = pr_curve(&dist, &gt)?;
    let recall_at_p: Vec<(f64, f64)> = cfg
        .precision_targets
        .iter()
        .map(|&p| (p, recall_at_precision(&curve, p)))
        .collect();
    let mut ran = Vec::new();
    for &n in &cfg.n_candidates {
        ran.push((n, recall_at_n(&dist, &gt, n)?));
    }
    let (f1, f2, f0_5) = f_scores(&curve);

    let mut files = BTreeMap::new();
    write_matrix_f32(&out_dir.join("distance.bin"), &dist)?;
    files.insert("distance_matrix".into(), "distance.bin".into());
    write_matrix_bool(&out_dir.join("gt.bin"), &gt)?;
    files.insert("gt_matrix".into(), "gt.bin".into());

    // Match matrices at the chosen operating points: nearest-neighbour
    // predictions under the first precision target's threshold, and the
    // top-N candidates for the largest N.
    let p_target = cfg.precision_targets.first().copied().unwrap_or(95.0);
    let p_threshold = operating_threshold(&curve, p_target);
    let match_p = nn_match_matrix(&dist, p_threshold);
    write_matrix_bool(&out_dir.join("match_p.bin"), &match_p)?;
    files.insert("match_matrix_recall_at_p".into(), "match_p.bin".into());
    let n_big = cfg.n_candidates.iter().copied().max().unwrap_or(1);
    let match_n = top_n_match_matrix(&dist, n_big);
    write_matrix_bool(&out_dir.join("match_n.bin"), &match_n)?;
    files.insert("match_matrix_recall_at_n".into(), "match_n.bin".into());

    let report = EvalReport {
        boundary_m: cfg.boundary,
        num_queries: queries.len(),
        num_database: database.len(),
        pr_curve: curve,
        recall_at_p,
        recall_at_n: ran,
        f1,
        f2,
        f0_5,
        files,
    };
    report.save(&out_dir.join("report.json"))?;
    Ok(report)
}

/// Threshold of the best-recall curve point meeting the precision
/// target; NEG_INFINITY (predict nothing) if no point qualifies.
fn operating_threshold(curve: &[PrPoint], target_percent: f64) -> f64 {
    curve
        .iter()
        .filter(|p| p.precision * 100.0 >= target_percent)
        .max_by(|a, b| a.recall.partial_cmp(&b.recall).expect("finite"))
        .map(|p| p.threshold)
        .unwrap_or(f64::NEG_INFINITY)
}

/// Boolean Q x D matrix marking each query's NN cell when its distance
/// passes the threshold.
fn nn_match_matrix(dist: &Array2<f32>, threshold: f64) -> Array2<bool> {
    let mut m = Array2::from_elem(dist.dim(), false);
    for q in 0..dist.nrows() {
        let nn = top_n_indices(dist.row(q), 1)[0];
        if (dist[[q, nn]] as f64) <= threshold {
            m[[q, nn]] = true;
        }
    }
    m
}

/// Boolean Q x D matrix marking each query's top-N candidate cells.
fn top_n_match_matrix(dist: &Array2<f32>, n: usize) -> Array2<bool> {
    let mut m = Array2::from_elem(dist.dim(), false);
    let n = n.min(dist.ncols());
    for q in 0..dist.nrows() {
        for d in top_n_indices(dist.row(q), n) {
            m[[q, d]] = true;
        }
    }
    m
}

/// Render PNGs from the report's matrix files: grayscale distance
/// (min -> black, max -> white), grayscale ground truth (false -> black,
/// true -> white), and match matrices with true positives green, false
/// positives red.
pub fn render_matrices(report: &EvalReport, report_dir: &Path, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let file = |key: &str| -> Result<PathBuf> {
        report
            .files
            .get(key)
            .map(|f| report_dir.join(f))
            .ok_or_else(|| Error::Argument(format!("report has no `{key}` file")))
    };

    let dist = read_matrix_f32(&file("distance_matrix")?)?;
    let gt = read_matrix_bool(&file("gt_matrix")?)?;
    save_gray_png(&out_dir.join("distance.png"), &dist)?;
    let gt_f = gt.mapv(|b| if b { 1.0f32 } else { 0.0 });
    save_gray_png(&out_dir.join("gt.png"), &gt_f)?;

    for (key, name) in [
        ("match_matrix_recall_at_p", "match_p.png"),
        ("match_matrix_recall_at_n", "match_n.png"),
    ] {
        let m = read_matrix_bool(&file(key)?)?;
        save_match_png(&out_dir.join(name), &m, &gt)?;
    }
    Ok(())
}

/// Plot the report's PR curve as a PNG: white background, gray frame,
/// recall on x, precision on y, both spanning [0, 1].
pub fn render_pr_curve(report: &EvalReport, path: &Path) -> Result<()> {
    const SIDE: u32 = 512;
    const MARGIN: u32 = 32;
    let mut img = image::RgbImage::from_pixel(SIDE, SIDE, image::Rgb([255, 255, 255]));
    let lo = MARGIN;
    let hi = SIDE - MARGIN;
    for t in lo..=hi {
        img.put_pixel(t, hi, image::Rgb([128, 128, 128]));
        img.put_pixel(lo, t, image::Rgb([128, 128, 128]));
    }
    let to_px = |recall: f64, precision: f64| -> (u32, u32) {
        let span = (hi - lo) as f64;
        let x = lo as f64 + recall.clamp(0.0, 1.0) * span;
        let y = hi as f64 - precision.clamp(0.0, 1.0) * span;
        (x.round() as u32, y.round() as u32)
    };
    let mut points: Vec<(u32, u32)> = report
        .pr_curve
        .iter()
        .map(|p| to_px(p.recall, p.precision))
        .collect();
    points.sort();
    for pair in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        let steps = (x1.abs_diff(x0)).max(y1.abs_diff(y0)).max(1);
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            let x = x0 as f64 + f * (x1 as f64 - x0 as f64);
            let y = y0 as f64 + f * (y1 as f64 - y0 as f64);
            img.put_pixel(x.round() as u32, y.round() as u32, image::Rgb([0, 0, 200]));
        }
    }
    for &(x, y) in &points {
        img.put_pixel(x, y, image::Rgb([200, 0, 0]));
    }
    img.save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

fn save_gray_png(path: &Path, m: &Array2<f32>) -> Result<()> {
    let (lo, hi) = m.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| {
        (l.min(v), h.max(v))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = image::GrayImage::from_fn(m.ncols() as u32, m.nrows() as u32, |x, y| {
        let v = (m[[y as usize, x as usize]] - lo) / span;
        image::Luma([(v * 255.0).round() as u8])
    });
    img.save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Predicted cells: green where geometrically true, red where false.
fn save_match_png(path: &Path, matches: &Array2<bool>, gt: &Array2<bool>) -> Result<()> {
    let img = image::RgbImage::from_fn(matches.ncols() as u32, matches.nrows() as u32, |x, y| {
        let idx = [y as usize, x as usize];
        if matches[idx] {
            if gt[idx] {
                image::Rgb([0, 255, 0])
            } else {
                image::Rgb([255, 0, 0])
            }
        } else {
            image::Rgb([0, 0, 0])
        }
    });
    img.save(path)
        .map_err(|e| Error::format(path, e.to_string()))
}
