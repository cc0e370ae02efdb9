//! Recordings, segment timelines, annotations, on-disk formats, and a
//! synthetic recording generator for desk-scale experiments.
//!
//! On-disk formats:
//! - RTTM: `SPEAKER <rec-id> 1 <onset%.3f> <dur%.3f> <NA> <NA> <label> <NA> <NA>`
//! - CSV embeddings: one row per line, comma-separated decimal floats
//! - Raw embeddings: 16-byte header (`EMB1`, u32 rows, u32 cols, 4 reserved
//!   bytes, all little-endian) followed by row-major little-endian f32 values

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Default segment window length in seconds.
pub const DEFAULT_WINDOW_LEN: f64 = 1.5;
/// Default hop between consecutive windows in seconds.
pub const DEFAULT_WINDOW_HOP: f64 = 0.75;

const GRID_TOL: f64 = 1e-9;

/// One fixed-length analysis window on the recording timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentWindow {
    pub onset: f64,
    pub duration: f64,
}

impl SegmentWindow {
    pub fn offset(&self) -> f64 {
        self.onset + self.duration
    }

    pub fn midpoint(&self) -> f64 {
        self.onset + self.duration / 2.0
    }
}

/// Build the uniform window grid used throughout: `n` windows of `len`
/// seconds every `hop` seconds starting at 0.
pub fn window_grid(n: usize, len: f64, hop: f64) -> Vec<SegmentWindow> {
    (0..n)
        .map(|i| SegmentWindow {
            onset: i as f64 * hop,
            duration: len,
        })
        .collect()
}

/// A recording: an ordered segment grid plus one embedding row per window.
#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub windows: Vec<SegmentWindow>,
    pub embeddings: Array2<f64>,
}

impl Recording {
    /// Validates the invariants: row count matches the window count,
    /// `N_r >= 2`, `D >= 2`, no all-zero embedding row, windows sorted on a
    /// uniform stride with positive durations.
    pub fn new(
        id: impl Into<String>,
        windows: Vec<SegmentWindow>,
        embeddings: Array2<f64>,
    ) -> Result<Recording> {
        let n = windows.len();
        if embeddings.nrows() != n {
            return Err(Error::Input(format!(
                "{} embedding rows for {} windows",
                embeddings.nrows(),
                n
            )));
        }
        if n < 2 {
            return Err(Error::Input("a recording needs at least 2 windows".into()));
        }
        if embeddings.ncols() < 2 {
            return Err(Error::Input("embedding dimension must be at least 2".into()));
        }
        for (i, w) in windows.iter().enumerate() {
            if w.duration <= 0.0 || w.onset < 0.0 {
                return Err(Error::Input(format!("window {i} has invalid onset/duration")));
            }
        }
        let hop = windows[1].onset - windows[0].onset;
        if hop <= 0.0 {
            return Err(Error::Input("windows must be sorted by onset".into()));
        }
        for i in 1..n {
            let d = windows[i].onset - windows[i - 1].onset;
            if (d - hop).abs() > GRID_TOL {
                return Err(Error::Input(format!(
                    "window {i} breaks the uniform stride ({d} vs {hop})"
                )));
            }
        }
        for (i, row) in embeddings.rows().into_iter().enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::Input(format!("embedding row {i} is all zero")));
            }
        }
        Ok(Recording {
            id: id.into(),
            windows,
            embeddings,
        })
    }

    pub fn num_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }
}

/// One speaker turn on the timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub speaker: String,
    pub onset: f64,
    pub duration: f64,
}

impl Turn {
    pub fn offset(&self) -> f64 {
        self.onset + self.duration
    }
}

/// A reference or hypothesis speaker annotation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Annotation {
    pub turns: Vec<Turn>,
}

impl Annotation {
    /// Validates positive durations and that turns of one speaker do not
    /// overlap each other.
    pub fn new(turns: Vec<Turn>) -> Result<Annotation> {
        for (i, t) in turns.iter().enumerate() {
            if t.duration <= 0.0 {
                return Err(Error::Input(format!("turn {i} has non-positive duration")));
            }
        }
        let mut by_speaker: std::collections::BTreeMap<&str, Vec<(f64, f64)>> = Default::default();
        for t in &turns {
            by_speaker
                .entry(t.speaker.as_str())
                .or_default()
                .push((t.onset, t.offset()));
        }
        for (spk, mut ivs) in by_speaker {
            ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in ivs.windows(2) {
                if w[1].0 < w[0].1 - GRID_TOL {
                    return Err(Error::Input(format!("speaker {spk} overlaps itself")));
                }
            }
        }
        Ok(Annotation { turns })
    }

    pub fn speakers(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.turns.iter().map(|t| t.speaker.as_str()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn total_speech(&self) -> f64 {
        self.turns.iter().map(|t| t.duration).sum()
    }
}

/// Embedding exchange format selector for [`load_embeddings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Csv,
    RawBinary,
}

const EMB_MAGIC: &[u8; 4] = b"EMB1";

/// Load an embedding matrix from disk. Row order follows the file.
pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<Array2<f64>> {
    match format {
        EmbeddingFormat::Csv => load_embeddings_csv(path),
        EmbeddingFormat::RawBinary => load_embeddings_raw(path),
    }
}

/// Sniff the format from the leading magic bytes and load.
pub fn load_embeddings_auto(path: &Path) -> Result<Array2<f64>> {
    let head = fs::read(path)?;
    if head.len() >= 4 && &head[..4] == EMB_MAGIC {
        parse_embeddings_raw(path, &head)
    } else {
        load_embeddings_csv(path)
    }
}

fn parse_err(path: &Path, location: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location,
        message: message.into(),
    }
}

fn load_embeddings_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad float {:?}", field.trim())))?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("row {} has width {}, expected {}", i + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "empty embeddings file"));
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / d;
    Array2::from_shape_vec((n, d), flat).map_err(|e| Error::Input(e.to_string()))
}

fn load_embeddings_raw(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    parse_embeddings_raw(path, &bytes)
}

fn parse_embeddings_raw(path: &Path, bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 16 {
        return Err(parse_err(path, 0, "raw embedding file shorter than its header"));
    }
    if &bytes[..4] != EMB_MAGIC {
        return Err(parse_err(path, 0, "missing EMB1 magic"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 16 + 4 * n * d;
    if bytes.len() != expected {
        return Err(parse_err(
            path,
            0,
            format!("expected {expected} bytes for {n}x{d}, found {}", bytes.len()),
        ));
    }
    if n == 0 || d == 0 {
        return Err(parse_err(path, 0, "empty embeddings file"));
    }
    let mut flat = Vec::with_capacity(n * d);
    for chunk in bytes[16..].chunks_exact(4) {
        flat.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Array2::from_shape_vec((n, d), flat).map_err(|e| Error::Input(e.to_string()))
}

/// Write embeddings as CSV with shortest round-trip float formatting.
pub fn write_embeddings_csv(x: &Array2<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in x.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write embeddings in the raw `EMB1` binary layout (values narrowed to f32).
pub fn write_embeddings_raw(x: &Array2<f64>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(EMB_MAGIC)?;
    f.write_all(&(x.nrows() as u32).to_le_bytes())?;
    f.write_all(&(x.ncols() as u32).to_le_bytes())?;
    f.write_all(&[0u8; 4])?;
    for v in x.iter() {
        f.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Load an annotation from RTTM. Non-SPEAKER lines are skipped with a
/// warning; malformed numeric fields abort with the line number.
pub fn load_rttm(path: &Path) -> Result<Annotation> {
    let text = fs::read_to_string(path)?;
    let mut turns = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "SPEAKER" {
            log::warn!("{}:{}: skipping non-SPEAKER line", path.display(), i + 1);
            continue;
        }
        if fields.len() < 9 {
            return Err(parse_err(path, i + 1, "SPEAKER line has fewer than 9 fields"));
        }
        let onset: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad onset {:?}", fields[3])))?;
        let duration: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad duration {:?}", fields[4])))?;
        turns.push(Turn {
            speaker: fields[7].to_string(),
            onset,
            duration,
        });
    }
    Annotation::new(turns)
}

/// Render an annotation as RTTM text (bit-exact line format).
pub fn rttm_string(annotation: &Annotation, rec_id: &str) -> String {
    let mut out = String::new();
    for t in &annotation.turns {
        out.push_str(&format!(
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>\n",
            rec_id, t.onset, t.duration, t.speaker
        ));
    }
    out
}

pub fn write_rttm(annotation: &Annotation, rec_id: &str, path: &Path) -> Result<()> {
    fs::write(path, rttm_string(annotation, rec_id))?;
    Ok(())
}

/// Segment grid file: one `onset,duration` CSV row per window.
pub fn load_segments(path: &Path) -> Result<Vec<SegmentWindow>> {
    let text = fs::read_to_string(path)?;
    let mut windows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 2 {
            return Err(parse_err(path, i + 1, "expected onset,duration"));
        }
        let onset: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad onset {:?}", parts[0])))?;
        let duration: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad duration {:?}", parts[1])))?;
        windows.push(SegmentWindow { onset, duration });
    }
    if windows.is_empty() {
        return Err(parse_err(path, 0, "empty segments file"));
    }
    Ok(windows)
}

pub fn write_segments(windows: &[SegmentWindow], path: &Path) -> Result<()> {
    let mut out = String::new();
    for w in windows {
        out.push_str(&format!("{},{}\n", w.onset, w.duration));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Configuration for the synthetic recording generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_speakers: usize,
    pub dim: usize,
    /// Distance between speaker Gaussian means (also the sampling sphere
    /// radius before pairwise rescaling).
    pub mean_separation: f64,
    /// Per-dimension standard deviation of each speaker Gaussian.
    pub within_std: f64,
    /// Expected turn length in windows (geometric turn process).
    pub expected_turn_windows: f64,
    pub total_windows: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_speakers: 3,
            dim: 16,
            mean_separation: 10.0,
            within_std: 1.0,
            expected_turn_windows: 8.0,
            total_windows: 300,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_speakers < 1 {
            return Err(Error::Config("num-speakers must be >= 1".into()));
        }
        if self.total_windows < self.num_speakers {
            return Err(Error::Config("total-windows must be >= num-speakers".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("dim must be >= 2".into()));
        }
        if self.mean_separation <= 0.0 || self.within_std <= 0.0 || self.expected_turn_windows <= 0.0
        {
            return Err(Error::Config(
                "separation, std and turn length must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Generate a synthetic recording and its ground-truth annotation.
///
/// Speaker means are drawn uniformly on the radius-`mean_separation` sphere
/// and rescaled so the minimum inter-mean distance equals `mean_separation`;
/// window labels follow a geometric turn process with uniform next-speaker
/// choice among the other speakers; embeddings are drawn from the window's
/// speaker Gaussian. Deterministic given the seed.
pub fn synth_recording(cfg: &SynthConfig) -> Result<(Recording, Annotation)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.num_speakers;
    let d = cfg.dim;

    let mut means: Vec<Array1<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        loop {
            let v = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let norm = v.dot(&v).sqrt();
            if norm > 0.0 {
                means.push(v * (cfg.mean_separation / norm));
                break;
            }
        }
    }
    if k >= 2 {
        let mut min_dist = f64::INFINITY;
        for i in 0..k {
            for j in (i + 1)..k {
                let diff = &means[i] - &means[j];
                min_dist = min_dist.min(diff.dot(&diff).sqrt());
            }
        }
        let scale = cfg.mean_separation / min_dist;
        for m in &mut means {
            *m *= scale;
        }
    }

    let p = (1.0 / cfg.expected_turn_windows).min(1.0);
    let mut labels = Vec::with_capacity(cfg.total_windows);
    let mut current = rng.gen_range(0..k);
    while labels.len() < cfg.total_windows {
        let run = if p >= 1.0 {
            1
        } else {
            // inverse-CDF geometric draw, support >= 1
            let u: f64 = rng.gen();
            1 + ((1.0 - u).ln() / (1.0 - p).ln()).floor() as usize
        };
        for _ in 0..run {
            if labels.len() == cfg.total_windows {
                break;
            }
            labels.push(current);
        }
        if k > 1 {
            current = (current + 1 + rng.gen_range(0..k - 1)) % k;
        }
    }

    let n = cfg.total_windows;
    let mut embeddings = Array2::zeros((n, d));
    for (i, &lab) in labels.iter().enumerate() {
        for j in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            embeddings[[i, j]] = means[lab][j] + cfg.within_std * noise;
        }
    }

    let windows = window_grid(n, DEFAULT_WINDOW_LEN, DEFAULT_WINDOW_HOP);
    let annotation = labels_to_annotation(&windows, &labels);
    let recording = Recording::new(format!("synth-{}", cfg.seed), windows, embeddings)?;
    Ok((recording, annotation))
}

/// Merge consecutive same-label windows into turns, placing boundaries at
/// the midpoint of the overlap between adjacent windows.
pub fn labels_to_annotation(windows: &[SegmentWindow], labels: &[usize]) -> Annotation {
    assert_eq!(windows.len(), labels.len());
    let n = windows.len();
    let mut turns = Vec::new();
    let mut start_idx = 0;
    for i in 1..=n {
        if i == n || labels[i] != labels[start_idx] {
            let onset = if start_idx == 0 {
                windows[0].onset
            } else {
                boundary_between(&windows[start_idx - 1], &windows[start_idx])
            };
            let offset = if i == n {
                windows[n - 1].offset()
            } else {
                boundary_between(&windows[i - 1], &windows[i])
            };
            turns.push(Turn {
                speaker: format!("spk{}", labels[start_idx]),
                onset,
                duration: offset - onset,
            });
            start_idx = i;
        }
    }
    Annotation { turns }
}

/// Midpoint of the overlap (or gap) between two adjacent windows.
pub fn boundary_between(prev: &SegmentWindow, next: &SegmentWindow) -> f64 {
    (next.onset + prev.offset()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn csv_loads_three_rows_of_width_two() {
        let dir = tmp();
        let p = dir.path().join("e.csv");
        fs::write(&p, "1.0,2.0\n3.5,-4.0\n0.25,1e3\n").unwrap();
        let x = load_embeddings(&p, EmbeddingFormat::Csv).unwrap();
        assert_eq!(x.shape(), &[3, 2]);
        assert_eq!(x[[1, 1]], -4.0);
        assert_eq!(x[[2, 1]], 1000.0);
    }

    #[test]
    fn csv_ragged_rows_name_the_row() {
        let dir = tmp();
        let p = dir.path().join("e.csv");
        fs::write(&p, "1.0,2.0\n3.5,4.0,5.0\n").unwrap();
        let err = load_embeddings(&p, EmbeddingFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn csv_empty_file_errors() {
        let dir = tmp();
        let p = dir.path().join("e.csv");
        fs::write(&p, "").unwrap();
        assert!(load_embeddings(&p, EmbeddingFormat::Csv).is_err());
    }

    #[test]
    fn raw_binary_roundtrip_with_declared_shape() {
        let dir = tmp();
        let p = dir.path().join("e.emb");
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64 / 7.0);
        write_embeddings_raw(&x, &p).unwrap();
        assert_eq!(fs::read(&p).unwrap().len(), 16 + 4 * 5 * 4);
        let y = load_embeddings(&p, EmbeddingFormat::RawBinary).unwrap();
        assert_eq!(y.shape(), &[5, 4]);
        for (a, b) in x.iter().zip(y.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
        // auto-detection sees the magic
        let z = load_embeddings_auto(&p).unwrap();
        assert_eq!(z, y);
    }

    #[test]
    fn raw_binary_size_mismatch_errors() {
        let dir = tmp();
        let p = dir.path().join("e.emb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"EMB1");
        bytes.extend_from_slice(&5u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        bytes.extend_from_slice(&[0u8; 12]); // truncated payload
        fs::write(&p, &bytes).unwrap();
        assert!(load_embeddings(&p, EmbeddingFormat::RawBinary).is_err());
    }

    #[test]
    fn rttm_single_turn_line_format_is_exact() {
        let ann = Annotation::new(vec![Turn {
            speaker: "spk1".into(),
            onset: 0.0,
            duration: 2.5,
        }])
        .unwrap();
        assert_eq!(
            rttm_string(&ann, "rec"),
            "SPEAKER rec 1 0.000 2.500 <NA> <NA> spk1 <NA> <NA>\n"
        );
    }

    #[test]
    fn rttm_empty_annotation_is_empty_file() {
        let dir = tmp();
        let p = dir.path().join("a.rttm");
        write_rttm(&Annotation::default(), "rec", &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "");
        assert!(load_rttm(&p).unwrap().turns.is_empty());
    }

    #[test]
    fn rttm_roundtrip_preserves_turns() {
        let dir = tmp();
        let p = dir.path().join("a.rttm");
        let ann = Annotation::new(vec![
            Turn {
                speaker: "alice".into(),
                onset: 0.125,
                duration: 3.75,
            },
            Turn {
                speaker: "bob".into(),
                onset: 3.875,
                duration: 1.0,
            },
        ])
        .unwrap();
        write_rttm(&ann, "rec", &p).unwrap();
        let back = load_rttm(&p).unwrap();
        assert_eq!(back.turns.len(), 2);
        for (a, b) in ann.turns.iter().zip(back.turns.iter()) {
            assert_eq!(a.speaker, b.speaker);
            assert_abs_diff_eq!(a.onset, b.onset, epsilon = 1e-3);
            assert_abs_diff_eq!(a.duration, b.duration, epsilon = 1e-3);
        }
    }

    #[test]
    fn rttm_skips_foreign_lines_and_flags_bad_numbers() {
        let dir = tmp();
        let p = dir.path().join("a.rttm");
        fs::write(
            &p,
            "SPKR-INFO rec 1 <NA> <NA> <NA> unknown spk1 <NA>\nSPEAKER rec 1 0.000 2.000 <NA> <NA> spk1 <NA> <NA>\n",
        )
        .unwrap();
        assert_eq!(load_rttm(&p).unwrap().turns.len(), 1);
        fs::write(&p, "SPEAKER rec 1 zero 2.000 <NA> <NA> spk1 <NA> <NA>\n").unwrap();
        let err = load_rttm(&p).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn synth_single_speaker_is_one_turn() {
        let cfg = SynthConfig {
            num_speakers: 1,
            total_windows: 20,
            ..Default::default()
        };
        let (rec, ann) = synth_recording(&cfg).unwrap();
        assert_eq!(ann.turns.len(), 1);
        assert_abs_diff_eq!(ann.turns[0].onset, 0.0);
        assert_abs_diff_eq!(ann.turns[0].offset(), rec.windows.last().unwrap().offset());
    }

    #[test]
    fn synth_is_deterministic() {
        let cfg = SynthConfig::default();
        let (a, ann_a) = synth_recording(&cfg).unwrap();
        let (b, ann_b) = synth_recording(&cfg).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(ann_a, ann_b);
    }

    #[test]
    fn synth_nearest_mean_recovers_labels_when_separable() {
        // oracle: nearest-mean classification on the generated data
        let cfg = SynthConfig {
            num_speakers: 3,
            within_std: 0.01,
            mean_separation: 10.0,
            total_windows: 120,
            seed: 7,
            ..Default::default()
        };
        let (rec, ann) = synth_recording(&cfg).unwrap();
        let labels = window_labels_from_annotation(&rec, &ann);
        let mut means = vec![Array1::<f64>::zeros(rec.dim()); cfg.num_speakers];
        let mut counts = vec![0usize; cfg.num_speakers];
        for (i, &l) in labels.iter().enumerate() {
            means[l] = &means[l] + &rec.embeddings.row(i);
            counts[l] += 1;
        }
        for (m, c) in means.iter_mut().zip(&counts) {
            *m /= *c as f64;
        }
        let mut errors = 0;
        for (i, &l) in labels.iter().enumerate() {
            let row = rec.embeddings.row(i);
            let nearest = (0..cfg.num_speakers)
                .min_by(|&a, &b| {
                    let da: f64 = (&row - &means[a]).mapv(|v| v * v).sum();
                    let db: f64 = (&row - &means[b]).mapv(|v| v * v).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            if nearest != l {
                errors += 1;
            }
        }
        assert_eq!(errors, 0);
    }

    fn window_labels_from_annotation(rec: &Recording, ann: &Annotation) -> Vec<usize> {
        rec.windows
            .iter()
            .map(|w| {
                let t = ann
                    .turns
                    .iter()
                    .find(|t| w.midpoint() >= t.onset && w.midpoint() < t.offset())
                    .expect("window midpoint uncovered");
                t.speaker.trim_start_matches("spk").parse().unwrap()
            })
            .collect()
    }

    #[test]
    fn window_grid_has_uniform_hop() {
        let ws = window_grid(10, DEFAULT_WINDOW_LEN, DEFAULT_WINDOW_HOP);
        for w in ws.windows(2) {
            assert_abs_diff_eq!(w[1].onset - w[0].onset, DEFAULT_WINDOW_HOP, epsilon = 1e-9);
        }
    }

    #[test]
    fn recording_rejects_mismatched_rows_and_zero_rows() {
        let ws = window_grid(3, 1.5, 0.75);
        assert!(Recording::new("r", ws.clone(), Array2::zeros((2, 4))).is_err());
        let mut x = Array2::from_elem((3, 4), 1.0);
        x.row_mut(1).fill(0.0);
        assert!(Recording::new("r", ws, x).is_err());
    }

    #[test]
    fn segments_roundtrip() {
        let dir = tmp();
        let p = dir.path().join("segs.csv");
        let ws = window_grid(4, 1.5, 0.75);
        write_segments(&ws, &p).unwrap();
        let back = load_segments(&p).unwrap();
        assert_eq!(ws, back);
    }
}
