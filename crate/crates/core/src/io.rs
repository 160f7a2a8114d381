//! Feature files, dataset manifests and evaluation reports.
//!
//! # TAGF layout
//!
//! All multi-byte fields are little-endian.
//!
//! | offset | size | field                      |
//! |-------:|-----:|----------------------------|
//! | 0      | 4    | magic `b"TAGF"`            |
//! | 4      | 2    | version (`u16`, always 1)  |
//! | 6      | 4    | frame count N (`u32`)      |
//! | 10     | 4    | dimension D (`u32`)        |
//! | 14     | 4    | frame rate (`f32`, fps)    |
//! | 18     | 4·N·D| row-major `f32` payload    |
//!
//! A query embedding is stored as a TAGF file with N = 1.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalSummary;

pub const TAGF_MAGIC: [u8; 4] = *b"TAGF";
pub const TAGF_VERSION: u16 = 1;
pub const TAGF_HEADER_LEN: usize = 18;

/// Per-frame embeddings of one video, row-major N×D.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f32>,
    n_frames: usize,
    dim: usize,
    frame_rate: f32,
}

impl FeatureSequence {
    pub fn new(data: Vec<f32>, n_frames: usize, dim: usize, frame_rate: f32) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::Empty("feature sequence (N = 0)"));
        }
        if dim == 0 {
            return Err(Error::Empty("feature dimension (D = 0)"));
        }
        if data.len() != n_frames * dim {
            return Err(Error::DimensionMismatch {
                expected: n_frames * dim,
                found: data.len(),
            });
        }
        check_frame_rate(frame_rate)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature sequence"));
        }
        Ok(Self {
            data,
            n_frames,
            dim,
            frame_rate,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], frame_rate: f32) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(rows.concat(), rows.len(), dim, frame_rate)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Video length in seconds.
    pub fn duration(&self) -> f64 {
        self.n_frames as f64 / self.frame_rate as f64
    }

    /// Start time in seconds of frame boundary `index` (frame i spans
    /// `[i / fps, (i + 1) / fps)`).
    pub fn frame_to_seconds(&self, index: usize) -> f64 {
        index as f64 / self.frame_rate as f64
    }
}

/// Text-query embedding paired with a [`FeatureSequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding(Vec<f32>);

impl QueryEmbedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("query embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query embedding"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagfHeader {
    pub n_frames: usize,
    pub dim: usize,
    pub frame_rate: f32,
}

fn check_frame_rate(frame_rate: f32) -> Result<()> {
    if frame_rate.is_finite() && frame_rate > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidFrameRate(frame_rate))
    }
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<TagfHeader> {
    if bytes.len() < TAGF_HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if bytes[0..4] != TAGF_MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TAGF_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let fps = f32::from_le_bytes(bytes[14..18].try_into().unwrap());
    if n == 0 || d == 0 {
        return Err(Error::format(path, format!("empty matrix (N = {n}, D = {d})")));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::format(path, format!("invalid frame rate {fps}")));
    }
    Ok(TagfHeader {
        n_frames: n,
        dim: d,
        frame_rate: fps,
    })
}

pub fn decode_tagf(path: &Path, bytes: &[u8]) -> Result<FeatureSequence> {
    let header = parse_header(path, bytes)?;
    let payload = &bytes[TAGF_HEADER_LEN..];
    let expected = header
        .n_frames
        .checked_mul(header.dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    if payload.len() < expected {
        return Err(Error::format(
            path,
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "non-finite value in payload"));
    }
    FeatureSequence::new(data, header.n_frames, header.dim, header.frame_rate)
}

pub fn encode_tagf(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(TAGF_HEADER_LEN + seq.data.len() * 4);
    out.extend_from_slice(&TAGF_MAGIC);
    out.extend_from_slice(&TAGF_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim as u32).to_le_bytes());
    out.extend_from_slice(&seq.frame_rate.to_le_bytes());
    for v in &seq.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tagf(path, &bytes)
}

/// Reads only the 18-byte header.
pub fn read_feature_header(path: impl AsRef<Path>) -> Result<TagfHeader> {
    let path = path.as_ref();
    let mut buf = [0u8; TAGF_HEADER_LEN];
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    parse_header(path, &buf[..filled])
}

pub fn write_feature_file(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_frame_rate(seq.frame_rate)?;
    std::fs::write(path, encode_tagf(seq)).map_err(|e| Error::io(path, e))
}

pub fn read_query_file(path: impl AsRef<Path>) -> Result<QueryEmbedding> {
    let path = path.as_ref();
    let seq = read_feature_file(path)?;
    if seq.n_frames != 1 {
        return Err(Error::format(
            path,
            format!("query file must hold one row, found {}", seq.n_frames),
        ));
    }
    QueryEmbedding::new(seq.data)
}

pub fn write_query_file(query: &QueryEmbedding, path: impl AsRef<Path>) -> Result<()> {
    let seq = FeatureSequence::new(query.0.clone(), 1, query.dim(), 1.0)?;
    write_feature_file(&seq, path)
}

/// One (video, query) pair with its ground-truth interval in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub video_id: String,
    pub feature_path: String,
    pub query_id: String,
    pub query_embedding_path: String,
    pub gt_start: f64,
    pub gt_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Relative paths in records resolve against this directory.
    pub base_dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

// Annotation end times are commonly rounded; allow that much slack against
// the feature file's duration.
const DURATION_SLACK: f64 = 1e-6;

/// Loads a JSON-Lines manifest. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut manifest = DatasetManifest {
        base_dir,
        records: Vec::new(),
    };

    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Manifest {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if !(rec.gt_start.is_finite() && rec.gt_end.is_finite()) {
            return Err(bad("non-finite ground-truth time".into()));
        }
        if rec.gt_start < 0.0 {
            return Err(bad(format!("gt_start {} is negative", rec.gt_start)));
        }
        if rec.gt_end <= rec.gt_start {
            return Err(bad(format!(
                "gt_end {} must exceed gt_start {}",
                rec.gt_end, rec.gt_start
            )));
        }
        let feature_path = manifest.resolve(&rec.feature_path);
        let header = read_feature_header(&feature_path)
            .map_err(|e| bad(format!("feature file {}: {e}", feature_path.display())))?;
        let duration = header.n_frames as f64 / header.frame_rate as f64;
        if rec.gt_end > duration + DURATION_SLACK {
            return Err(bad(format!(
                "gt_end {} exceeds video duration {duration}",
                rec.gt_end
            )));
        }
        manifest.records.push(rec);
    }
    Ok(manifest)
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    write_json_lines(path.as_ref(), records.iter())
}

/// Per-record outcome of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub video_id: String,
    pub query_id: String,
    pub pred_start: f64,
    pub pred_end: f64,
    pub gt_start: f64,
    pub gt_end: f64,
    pub iou: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters_per_gt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<ReportRecord>,
    pub summary: EvalSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_clusters_per_gt: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine<'a> {
    Record(std::borrow::Cow<'a, ReportRecord>),
    Summary {
        recall: std::borrow::Cow<'a, [crate::metrics::RecallAt]>,
        miou: f64,
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean_clusters_per_gt: Option<f64>,
    },
}

/// Writes one `{"kind":"record",...}` line per record followed by a single
/// `{"kind":"summary",...}` line.
pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    let lines = report
        .records
        .iter()
        .map(|r| ReportLine::Record(std::borrow::Cow::Borrowed(r)))
        .chain(std::iter::once(ReportLine::Summary {
            recall: std::borrow::Cow::Borrowed(&report.summary.recall),
            miou: report.summary.miou,
            count: report.summary.count,
            mean_clusters_per_gt: report.mean_clusters_per_gt,
        }));
    write_json_lines(path.as_ref(), lines)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut summary = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Manifest {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        };
        match serde_json::from_str::<ReportLine>(&line).map_err(|e| bad(e.to_string()))? {
            ReportLine::Record(r) => records.push(r.into_owned()),
            ReportLine::Summary {
                recall,
                miou,
                count,
                mean_clusters_per_gt,
            } => {
                if summary.is_some() {
                    return Err(bad("duplicate summary line".into()));
                }
                summary = Some((recall.into_owned(), miou, count, mean_clusters_per_gt));
            }
        }
    }
    let (recall, miou, count, mean_clusters_per_gt) =
        summary.ok_or_else(|| Error::format(path, "report has no summary line"))?;
    let ious = records.iter().map(|r| r.iou).collect();
    Ok(Report {
        records,
        summary: EvalSummary {
            recall,
            miou,
            count,
            ious,
        },
        mean_clusters_per_gt,
    })
}

fn write_json_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn decodes_small_file() {
        let dir = tmp();
        let path = dir.path().join("a.tagf");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"TAGF");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        let seq = read_feature_file(&path).unwrap();
        assert_eq!((seq.n_frames(), seq.dim()), (3, 2));
        assert_eq!(seq.row(1), &[3.0, 4.0]);
        assert_eq!(seq.frame_rate(), 1.0);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_tagf(&FeatureSequence::new(vec![0.0], 1, 1, 1.0).unwrap());
        bytes[..4].copy_from_slice(b"XXXX");
        let err = decode_tagf(Path::new("x"), &bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn truncated_and_trailing_payload() {
        let seq = FeatureSequence::new(vec![1.0, 2.0, 3.0, 4.0], 2, 2, 2.0).unwrap();
        let bytes = encode_tagf(&seq);
        let err = decode_tagf(Path::new("x"), &bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");
        let err = decode_tagf(Path::new("x"), &bytes[..10]).unwrap_err();
        assert!(err.to_string().contains("truncated header"), "{err}");
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_tagf(Path::new("x"), &long).is_err());
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        let mut bytes = encode_tagf(&FeatureSequence::new(vec![1.0, 2.0], 1, 2, 1.0).unwrap());
        bytes[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode_tagf(Path::new("x"), &bytes[..TAGF_HEADER_LEN])
            .unwrap_err()
            .to_string()
            .contains("empty matrix"));

        let mut bytes = encode_tagf(&FeatureSequence::new(vec![1.0, 2.0], 1, 2, 1.0).unwrap());
        bytes[18..22].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_tagf(Path::new("x"), &bytes)
            .unwrap_err()
            .to_string()
            .contains("non-finite"));
    }

    #[test]
    fn minimal_file_layout() {
        let dir = tmp();
        let path = dir.path().join("one.tagf");
        let seq = FeatureSequence::new(vec![0.0], 1, 1, 1.0).unwrap();
        write_feature_file(&seq, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), TAGF_HEADER_LEN + 4);
        assert_eq!(
            bytes,
            [
                b'T', b'A', b'G', b'F', 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f, 0, 0,
                0, 0
            ]
        );
    }

    #[test]
    fn invalid_frame_rate() {
        let err = FeatureSequence::new(vec![0.0], 1, 1, 0.0).unwrap_err();
        assert_eq!(err.to_string(), "invalid frame rate 0");
        assert!(FeatureSequence::new(vec![0.0], 1, 1, -2.0).is_err());
    }

    #[test]
    fn query_file_round_trip_and_shape_check() {
        let dir = tmp();
        let q = QueryEmbedding::new(vec![0.5, -1.0, 2.0]).unwrap();
        let path = dir.path().join("q.tagf");
        write_query_file(&q, &path).unwrap();
        assert_eq!(read_query_file(&path).unwrap(), q);

        let two = FeatureSequence::new(vec![1.0, 2.0], 2, 1, 1.0).unwrap();
        write_feature_file(&two, &path).unwrap();
        assert!(read_query_file(&path).is_err());
    }

    fn write_fixture(dir: &Path, name: &str, n: usize, fps: f32) {
        let seq = FeatureSequence::new(vec![0.25; n * 2], n, 2, fps).unwrap();
        write_feature_file(&seq, dir.join(name)).unwrap();
    }

    #[test]
    fn manifest_single_line() {
        let dir = tmp();
        write_fixture(dir.path(), "v.tagf", 10, 2.0);
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            r#"{"video_id":"v","feature_path":"v.tagf","query_id":"q0","query_embedding_path":"q.tagf","gt_start":1.0,"gt_end":4.5}"#,
        )
        .unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].gt_end, 4.5);
        assert_eq!(m.resolve("v.tagf"), dir.path().join("v.tagf"));
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let dir = tmp();
        write_fixture(dir.path(), "v.tagf", 10, 1.0);
        let good = r#"{"video_id":"v","feature_path":"v.tagf","query_id":"a","query_embedding_path":"q","gt_start":0.0,"gt_end":2.0}"#;
        let inverted = r#"{"video_id":"v","feature_path":"v.tagf","query_id":"b","query_embedding_path":"q","gt_start":3.0,"gt_end":3.0}"#;
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, format!("{good}\n\n{inverted}\n")).unwrap();
        match load_manifest(&path).unwrap_err() {
            Error::Manifest { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("must exceed"));
            }
            other => panic!("unexpected {other}"),
        }

        let too_long = good.replace("2.0}", "11.0}");
        std::fs::write(&path, too_long).unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::Manifest { line: 1, .. })
        ));

        let dangling = good.replace("v.tagf", "missing.tagf");
        std::fs::write(&path, format!("{good}\n{dangling}")).unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::Manifest { line: 2, .. })
        ));

        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn manifest_preserves_order() {
        let dir = tmp();
        write_fixture(dir.path(), "v.tagf", 100, 1.0);
        let records: Vec<ManifestRecord> = (0..20)
            .map(|i| ManifestRecord {
                video_id: format!("v{i}"),
                feature_path: "v.tagf".into(),
                query_id: format!("q{i}"),
                query_embedding_path: "q.tagf".into(),
                gt_start: i as f64,
                gt_end: i as f64 + 1.5,
            })
            .collect();
        let path = dir.path().join("m.jsonl");
        write_manifest(&records, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap().records, records);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tagf_round_trip_is_bit_exact(
            n in 1usize..40,
            d in 1usize..20,
            fps in 0.01f32..120.0,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..n * d)
                .map(|_| loop {
                    let v = f32::from_bits(rng.gen());
                    if v.is_finite() { break v; }
                })
                .collect();
            let seq = FeatureSequence::new(data, n, d, fps).unwrap();
            let back = decode_tagf(Path::new("mem"), &encode_tagf(&seq)).unwrap();
            prop_assert_eq!(back.n_frames(), n);
            prop_assert_eq!(back.frame_rate().to_bits(), fps.to_bits());
            let same = back.as_slice().iter().zip(seq.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
