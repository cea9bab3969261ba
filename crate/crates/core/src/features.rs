//! Precomputed per-segment visual features and the pooled summary vector.
//!
//! Feature files (`<video_id>.vfea`) are little-endian:
//!
//! ```text
//! "VFEA" | version: u32 = 1 | n: u32 | m_x: u32 | n·m_x × f32 (segment-major)
//! ```
//!
//! A feature directory may carry a `features.json` manifest mapping
//! `video_id → relative path`; without one, `<video_id>.vfea` is assumed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"VFEA";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 16;
pub const DEFAULT_POOL_WINDOW: usize = 5;
pub const FEATURE_MANIFEST: &str = "features.json";

/// Raw feature matrix for one video: `n` temporally ordered segments of `m_x` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    segments: Matrix,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, segments: Matrix) -> Result<Self> {
        if segments.rows() == 0 || segments.cols() == 0 {
            return Err(Error::arg(format!(
                "feature sequence needs n >= 1 and m_x >= 1, got {}x{}",
                segments.rows(),
                segments.cols()
            )));
        }
        Ok(FeatureSequence {
            video_id: video_id.into(),
            segments,
        })
    }

    pub fn from_segments(video_id: impl Into<String>, segments: &[Vec<f64>]) -> Result<Self> {
        FeatureSequence::new(video_id, Matrix::from_rows(segments)?)
    }

    pub fn segment_count(&self) -> usize {
        self.segments.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.segments.cols()
    }

    pub fn segment(&self, i: usize) -> &[f64] {
        self.segments.row(i)
    }

    pub fn segments(&self) -> &Matrix {
        &self.segments
    }
}

/// Window-pooled segments plus their mean, `f_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeature {
    pub video_id: String,
    pub pooled_segments: Matrix,
    pub summary: Vec<f64>,
}

impl PooledFeature {
    pub fn pooled_dim(&self) -> usize {
        self.summary.len()
    }
}

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * seq.segments.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.segment_count() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.feature_dim() as u32).to_le_bytes());
    for &v in seq.segments.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format {
            offset: bytes.len(),
            message: format!("header truncated, expected u32 at byte {offset}"),
        })
}

pub fn decode_features(video_id: &str, bytes: &[u8]) -> Result<FeatureSequence> {
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected \"VFEA\"".into(),
        });
    }
    let version = read_u32(bytes, 4)?;
    if version != FEATURE_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let n = read_u32(bytes, 8)? as usize;
    let m = read_u32(bytes, 12)? as usize;
    if n == 0 || m == 0 {
        return Err(Error::Format {
            offset: if n == 0 { 8 } else { 12 },
            message: format!("empty feature matrix {n}x{m}"),
        });
    }
    let expected = FEATURE_HEADER_LEN + 4 * n * m;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected),
            message: format!(
                "payload for {n}x{m} needs {expected} bytes, file has {}",
                bytes.len()
            ),
        });
    }
    let mut values = Vec::with_capacity(n * m);
    for (i, chunk) in bytes[FEATURE_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Format {
                offset: FEATURE_HEADER_LEN + 4 * i,
                message: format!("non-finite value {v}"),
            });
        }
        values.push(v as f64);
    }
    FeatureSequence::new(video_id, Matrix::new(n, m, values)?)
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    fs::write(path, encode_features(seq)).map_err(|e| Error::io(path, e))
}

/// Loads a `.vfea` file; the video id is taken from the file stem.
pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_features(&id, &bytes)
}

/// Non-overlapping average pooling along the feature axis of every segment.
/// A trailing partial window is averaged over its actual length.
pub fn average_pool(seq: &FeatureSequence, window: usize) -> Result<PooledFeature> {
    if window == 0 {
        return Err(Error::arg("pooling window must be >= 1"));
    }
    let n = seq.segment_count();
    let m = seq.feature_dim();
    let pooled_dim = m.div_ceil(window);
    let mut pooled = Matrix::zeros(n, pooled_dim);
    for s in 0..n {
        for (j, chunk) in seq.segment(s).chunks(window).enumerate() {
            pooled.set(s, j, chunk.iter().sum::<f64>() / chunk.len() as f64);
        }
    }
    let mut summary = vec![0.0; pooled_dim];
    for s in 0..n {
        for (acc, v) in summary.iter_mut().zip(pooled.row(s)) {
            *acc += v;
        }
    }
    summary.iter_mut().for_each(|v| *v /= n as f64);
    Ok(PooledFeature {
        video_id: seq.video_id.clone(),
        pooled_segments: pooled,
        summary,
    })
}

/// `projection · f_a + bias`, the visual conditioning vector of the decoder.
pub fn project_summary(f_a: &[f64], projection: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    if bias.len() != projection.rows() {
        return Err(Error::Dimension {
            op: "project_summary (bias)",
            left: projection.shape(),
            right: (bias.len(), 1),
        });
    }
    let mut out = projection.matvec(f_a)?;
    for (o, b) in out.iter_mut().zip(bias) {
        *o += b;
    }
    Ok(out)
}

/// Resolves the feature file of `video_id` inside `dir`.
pub fn feature_path(dir: &Path, video_id: &str) -> Result<PathBuf> {
    let manifest = dir.join(FEATURE_MANIFEST);
    if manifest.is_file() {
        let map = read_feature_manifest(&manifest)?;
        if let Some(rel) = map.get(video_id) {
            return Ok(dir.join(rel));
        }
    }
    Ok(dir.join(format!("{video_id}.vfea")))
}

pub fn read_feature_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}

pub fn write_feature_manifest(path: &Path, map: &BTreeMap<String, String>) -> Result<()> {
    let text = serde_json::to_string_pretty(map).expect("string map serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
