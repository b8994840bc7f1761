//! Annotation manifests, label filtering and face-crop preprocessing.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::INPUT_SIZE;
use crate::tensor::Tensor;
use crate::training::{Example, Target};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("cannot decode image{}: {message}", path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default())]
    Decode { path: Option<PathBuf>, message: String },
    #[error("bounding box {bbox:?} lies entirely outside the {width}x{height} image")]
    BoxOutside { bbox: BBox, width: u32, height: u32 },
    #[error("unknown emotion {0:?}")]
    UnknownEmotion(String),
}

pub type DataResult<T> = std::result::Result<T, DataError>;

/// The eight expression classes in their fixed label order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Neutral,
    Happy,
    Sad,
    Surprised,
    Afraid,
    Disgusted,
    Angry,
    Contemptuous,
}

impl Emotion {
    pub const ALL: [Emotion; 8] = [
        Emotion::Neutral,
        Emotion::Happy,
        Emotion::Sad,
        Emotion::Surprised,
        Emotion::Afraid,
        Emotion::Disgusted,
        Emotion::Angry,
        Emotion::Contemptuous,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Happy => "happy",
            Emotion::Sad => "sad",
            Emotion::Surprised => "surprised",
            Emotion::Afraid => "afraid",
            Emotion::Disgusted => "disgusted",
            Emotion::Angry => "angry",
            Emotion::Contemptuous => "contemptuous",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = DataError;

    fn from_str(s: &str) -> DataResult<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| DataError::UnknownEmotion(s.to_string()))
    }
}

/// Face box in pixels; the origin may be negative for boxes hanging off the frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

/// Marks a missing valence or arousal annotation.
pub const MISSING_AFFECT: f64 = -2.0;
/// Labels 8–10 (none, uncertain, no face) are outside the classification task.
pub const MAX_RAW_EMOTION: u8 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub path: PathBuf,
    pub bbox: Option<BBox>,
    pub emotion: u8,
    pub valence: f64,
    pub arousal: f64,
}

impl Sample {
    pub fn has_affect(&self) -> bool {
        self.valence != MISSING_AFFECT && self.arousal != MISSING_AFFECT
    }

    pub fn target(&self, task: Task) -> Option<Target> {
        match task {
            Task::Classification => {
                Emotion::from_id(self.emotion as usize).map(|e| Target::Emotion(e.id()))
            }
            Task::Regression => self.has_affect().then_some(Target::Affect { valence: self.valence, arousal: self.arousal }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    /// Directory that relative image paths resolve against.
    pub root: PathBuf,
    pub samples: Vec<Sample>,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct Row {
    path: String,
    bbox_x: Option<i64>,
    bbox_y: Option<i64>,
    bbox_w: Option<u32>,
    bbox_h: Option<u32>,
    emotion: u8,
    valence: f64,
    arousal: f64,
}

fn valid_affect(v: f64) -> bool {
    v == MISSING_AFFECT || (-1.0..=1.0).contains(&v)
}

/// Reads a manifest CSV and keeps only rows usable for `task`.
pub fn load_manifest(path: &Path, task: Task) -> DataResult<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(file, task, root)
}

pub fn parse_manifest(input: impl Read, task: Task, root: PathBuf) -> DataResult<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut manifest = DatasetManifest { task, root, samples: Vec::new(), dropped: 0, warnings: Vec::new() };
    let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line());
    for record in reader.deserialize::<Row>() {
        let row = record.map_err(|e| DataError::Malformed { line: line_of(&e), message: e.to_string() })?;
        let line = manifest.samples.len() as u64 + manifest.dropped as u64 + 2;
        let bbox = match (row.bbox_x, row.bbox_y, row.bbox_w, row.bbox_h) {
            (Some(x), Some(y), Some(w), Some(h)) if w > 0 && h > 0 => Some(BBox { x, y, w, h }),
            (None, None, None, None) => None,
            _ => return Err(DataError::Malformed { line, message: "bounding box needs four values with positive size".into() }),
        };
        if row.emotion > MAX_RAW_EMOTION {
            return Err(DataError::Malformed { line, message: format!("emotion {} is outside 0..=10", row.emotion) });
        }
        for (name, v) in [("valence", row.valence), ("arousal", row.arousal)] {
            if !valid_affect(v) {
                return Err(DataError::Malformed { line, message: format!("{name} {v} is neither in [-1, 1] nor -2") });
            }
        }
        let sample = Sample { path: row.path.into(), bbox, emotion: row.emotion, valence: row.valence, arousal: row.arousal };
        if sample.target(task).is_some() {
            manifest.samples.push(sample);
        } else {
            manifest.dropped += 1;
        }
    }
    if manifest.dropped > 0 {
        manifest.warnings.push(format!("dropped {} rows without a valid {task:?} label", manifest.dropped));
    }
    if manifest.samples.is_empty() {
        manifest.warnings.push("manifest contains no usable samples".into());
    }
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Samples per emotion label 0–7.
    pub counts: [usize; 8],
    /// Means over samples that carry both affect annotations.
    pub valence_mean: Option<f64>,
    pub arousal_mean: Option<f64>,
}

pub fn dataset_stats(manifest: &DatasetManifest) -> DatasetStats {
    let mut counts = [0; 8];
    let (mut v, mut a, mut n) = (0.0, 0.0, 0usize);
    for s in &manifest.samples {
        if let Some(c) = counts.get_mut(s.emotion as usize) {
            *c += 1;
        }
        if s.has_affect() {
            v += s.valence;
            a += s.arousal;
            n += 1;
        }
    }
    let mean = |sum: f64| (n > 0).then(|| sum / n as f64);
    DatasetStats { counts, valence_mean: mean(v), arousal_mean: mean(a) }
}

pub fn decode_image(bytes: &[u8]) -> DataResult<RgbImage> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| DataError::Decode { path: None, message: e.to_string() })
}

pub fn open_image(path: &Path) -> DataResult<RgbImage> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    decode_image(&bytes).map_err(|e| match e {
        DataError::Decode { message, .. } => DataError::Decode { path: Some(path.to_path_buf()), message },
        other => other,
    })
}

/// Crop rectangle `(x0, y0, x1, y1)`, exclusive at the far edge.
fn crop_rect(width: u32, height: u32, bbox: Option<BBox>) -> DataResult<(u32, u32, u32, u32)> {
    match bbox {
        Some(b) => {
            let x0 = b.x.max(0);
            let y0 = b.y.max(0);
            let x1 = (b.x + b.w as i64).min(width as i64);
            let y1 = (b.y + b.h as i64).min(height as i64);
            if x0 >= x1 || y0 >= y1 {
                return Err(DataError::BoxOutside { bbox: b, width, height });
            }
            Ok((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
        }
        None => {
            let side = width.min(height);
            let (x0, y0) = ((width - side) / 2, (height - side) / 2);
            Ok((x0, y0, x0 + side, y0 + side))
        }
    }
}

/// Crops to `bbox` (clamped to the frame) or to a centred square, resizes
/// bilinearly to the network input size and scales to [0, 1]. The output is
/// `H×W×3`.
pub fn preprocess(image: &RgbImage, bbox: Option<BBox>) -> DataResult<Tensor<f32>> {
    preprocess_to(image, bbox, INPUT_SIZE)
}

pub fn preprocess_to(image: &RgbImage, bbox: Option<BBox>, size: usize) -> DataResult<Tensor<f32>> {
    let (width, height) = image.dimensions();
    if width == 0 || height == 0 {
        return Err(DataError::Decode { path: None, message: "image has no pixels".into() });
    }
    let (x0, y0, x1, y1) = crop_rect(width, height, bbox)?;
    let (cw, ch) = ((x1 - x0) as f64, (y1 - y0) as f64);
    // Pixel-centre mapping: output centre o maps to x0 + (o + 0.5)·scale − 0.5.
    let axis = |o: usize, start: u32, extent: f64| {
        let s = (start as f64 + (o as f64 + 0.5) * extent / size as f64 - 0.5).clamp(start as f64, start as f64 + extent - 1.0);
        let lo = s.floor();
        let hi = (lo + 1.0).min(start as f64 + extent - 1.0);
        (lo as u32, hi as u32, s - lo)
    };
    let columns: Vec<_> = (0..size).map(|o| axis(o, x0, cw)).collect();
    let mut out = Vec::with_capacity(size * size * 3);
    for oy in 0..size {
        let (ya, yb, fy) = axis(oy, y0, ch);
        for &(xa, xb, fx) in &columns {
            let (p00, p01) = (image.get_pixel(xa, ya).0, image.get_pixel(xb, ya).0);
            let (p10, p11) = (image.get_pixel(xa, yb).0, image.get_pixel(xb, yb).0);
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = (top * (1.0 - fy) + bottom * fy) / 255.0;
                out.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(Tensor::from_data(&[size, size, 3], out).expect("shape matches buffer"))
}

impl DatasetManifest {
    pub fn resolve(&self, sample: &Sample) -> PathBuf {
        if sample.path.is_absolute() { sample.path.clone() } else { self.root.join(&sample.path) }
    }

    /// Per-class sample counts, for loss weighting.
    pub fn class_counts(&self) -> [usize; 8] {
        dataset_stats(self).counts
    }

    /// Decodes and preprocesses every sample in parallel, preserving order.
    pub fn load_examples(&self) -> DataResult<Vec<Example>> {
        self.load_examples_sized(INPUT_SIZE)
    }

    pub fn load_examples_sized(&self, size: usize) -> DataResult<Vec<Example>> {
        self.samples
            .par_iter()
            .map(|s| {
                let img = open_image(&self.resolve(s))?;
                let target = s.target(self.task).expect("filtered at load time");
                Ok(Example { image: preprocess_to(&img, s.bbox, size)?, target })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "path,bbox_x,bbox_y,bbox_w,bbox_h,emotion,valence,arousal\n";

    fn parse(body: &str, task: Task) -> DataResult<DatasetManifest> {
        parse_manifest(format!("{HEADER}{body}").as_bytes(), task, PathBuf::new())
    }

    #[test]
    fn emotion_ids_round_trip() {
        for (i, e) in Emotion::ALL.iter().enumerate() {
            assert_eq!(e.id(), i);
            assert_eq!(Emotion::from_id(i), Some(*e));
            assert_eq!(e.name().parse::<Emotion>().unwrap(), *e);
        }
        assert_eq!(Emotion::from_id(8), None);
    }

    #[test]
    fn classification_drops_invalid_emotions() {
        let m = parse("a.png,,,,,9,0.1,0.2\nb.png,0,0,10,10,3,-2,-2\nc.png,,,,,10,0,0\n", Task::Classification).unwrap();
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.samples[0].emotion, 3);
        assert_eq!(m.samples[0].bbox, Some(BBox { x: 0, y: 0, w: 10, h: 10 }));
        assert_eq!(m.dropped, 2);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn regression_drops_missing_affect() {
        let m = parse("a.png,,,,,9,0.1,0.2\nb.png,,,,,3,-2,0.5\nc.png,,,,,1,0.4,-2\n", Task::Regression).unwrap();
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.samples[0].path, PathBuf::from("a.png"));
        assert_eq!((m.samples[0].valence, m.samples[0].arousal), (0.1, 0.2));
    }

    #[test]
    fn empty_file_gives_empty_manifest() {
        let m = parse_manifest("".as_bytes(), Task::Classification, PathBuf::new()).unwrap();
        assert!(m.samples.is_empty());
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn malformed_rows_report_line() {
        match parse("a.png,,,,,1,0,0\nb.png,,,,,x,0,0\n", Task::Classification) {
            Err(DataError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse("a.png,,,,,1,0,0\nb.png,,,,,2,1.5,0\n", Task::Classification) {
            Err(DataError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("a.png,1,,,,1,0,0\n", Task::Classification), Err(DataError::Malformed { line: 2, .. })));
    }

    #[test]
    fn stats_count_and_average() {
        let m = parse("a,,,,,0,0.5,0.25\nb,,,,,0,-2,-2\nc,,,,,7,-0.5,0.75\n", Task::Classification).unwrap();
        let s = dataset_stats(&m);
        assert_eq!(s.counts, [2, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(s.valence_mean, Some(0.0));
        assert_eq!(s.arousal_mean, Some(0.5));
        let single = parse("a,,,,,0,0.5,0.1\n", Task::Regression).unwrap();
        assert_eq!(dataset_stats(&single).valence_mean, Some(0.5));
    }

    #[test]
    fn full_frame_preserves_pixels() {
        let img = RgbImage::from_fn(128, 128, |x, y| image::Rgb([x as u8, y as u8, (x ^ y) as u8]));
        let t = preprocess(&img, Some(BBox { x: 0, y: 0, w: 128, h: 128 })).unwrap();
        assert_eq!(t.shape(), &[128, 128, 3]);
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                assert_eq!(t.data()[i * 3 + c], (px.0[c] as f64 / 255.0) as f32);
            }
        }
        assert_eq!(preprocess(&img, None).unwrap(), t);
    }

    #[test]
    fn constant_gray_maps_to_scaled_value() {
        let img = RgbImage::from_pixel(640, 480, image::Rgb([200, 200, 200]));
        let t = preprocess(&img, Some(BBox { x: 100, y: 50, w: 300, h: 300 })).unwrap();
        assert_eq!(t.shape(), &[128, 128, 3]);
        assert!(t.data().iter().all(|&v| (v - 200.0 / 255.0).abs() < 1e-6));
    }

    #[test]
    fn box_clamping_and_rejection() {
        let img = RgbImage::from_fn(64, 48, |x, _| image::Rgb([(x * 4) as u8, 0, 255]));
        let t = preprocess(&img, Some(BBox { x: -20, y: 30, w: 50, h: 100 })).unwrap();
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(matches!(
            preprocess(&img, Some(BBox { x: 64, y: 0, w: 10, h: 10 })),
            Err(DataError::BoxOutside { .. })
        ));
        assert!(matches!(decode_image(b"not an image"), Err(DataError::Decode { .. })));
    }
}
