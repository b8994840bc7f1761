//! Append-only store for recommendation ratings.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;
use tokio::sync::Mutex;

use crate::data::Emotion;

/// The ten emotions participants are asked to act out, in reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyEmotion {
    Neutral,
    Delighted,
    Happy,
    Miserable,
    Sad,
    Surprised,
    Angry,
    Afraid,
    Disgusted,
    Contemptuous,
}

impl StudyEmotion {
    pub const ALL: [StudyEmotion; 10] = [
        StudyEmotion::Neutral,
        StudyEmotion::Delighted,
        StudyEmotion::Happy,
        StudyEmotion::Miserable,
        StudyEmotion::Sad,
        StudyEmotion::Surprised,
        StudyEmotion::Angry,
        StudyEmotion::Afraid,
        StudyEmotion::Disgusted,
        StudyEmotion::Contemptuous,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedAffect {
    pub emotion: Emotion,
    pub valence: f64,
    pub arousal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub session_id: String,
    pub instructed_emotion: StudyEmotion,
    #[serde(default)]
    pub predicted: Option<PredictedAffect>,
    #[serde(default)]
    pub track_ids: Vec<String>,
    /// Stars, 1 to 5.
    pub rating: u8,
    pub self_valence: f64,
    pub self_arousal: f64,
    /// Unix seconds; filled in by the store when absent.
    #[serde(default)]
    pub timestamp: Option<u64>,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.session_id.trim().is_empty() {
            return Err("session_id must not be empty".into());
        }
        if !(1..=5).contains(&self.rating) {
            return Err(format!("rating {} is outside 1..=5", self.rating));
        }
        for (name, v) in [("self_valence", self.self_valence), ("self_arousal", self.self_arousal)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} is outside [-1, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub emotion: StudyEmotion,
    pub count: usize,
    pub mean: Option<f64>,
}

/// Mean rating per instructed emotion plus the overall average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingsSummary {
    pub rows: Vec<SummaryRow>,
    pub count: usize,
    pub average: Option<f64>,
}

impl RatingsSummary {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a RatingRecord>) -> Self {
        let mut sums = [(0usize, 0.0f64); 10];
        for r in records {
            let i = StudyEmotion::ALL.iter().position(|e| *e == r.instructed_emotion).expect("listed");
            sums[i].0 += 1;
            sums[i].1 += r.rating as f64;
        }
        let count: usize = sums.iter().map(|s| s.0).sum();
        let total: f64 = sums.iter().map(|s| s.1).sum();
        let rows = StudyEmotion::ALL
            .iter()
            .zip(sums)
            .map(|(&emotion, (n, sum))| SummaryRow { emotion, count: n, mean: (n > 0).then(|| sum / n as f64) })
            .collect();
        Self { rows, count, average: (count > 0).then(|| total / count as f64) }
    }
}

/// Line-delimited JSON file; one record per line, appended under a lock.
pub struct RatingStore {
    path: PathBuf,
    lock: Mutex<()>,
}

impl RatingStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), lock: Mutex::new(()) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends a validated record and returns its 1-based position.
    pub async fn append(&self, mut record: RatingRecord) -> std::io::Result<u64> {
        if record.timestamp.is_none() {
            record.timestamp = Some(SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
        }
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        let _guard = self.lock.lock().await;
        let existing = self.read_unlocked().await?.len() as u64;
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            tokio::fs::create_dir_all(dir).await?;
        }
        let mut file = tokio::fs::OpenOptions::new().create(true).append(true).open(&self.path).await?;
        file.write_all(&line).await?;
        file.flush().await?;
        Ok(existing + 1)
    }

    pub async fn records(&self) -> std::io::Result<Vec<RatingRecord>> {
        let _guard = self.lock.lock().await;
        self.read_unlocked().await
    }

    async fn read_unlocked(&self) -> std::io::Result<Vec<RatingRecord>> {
        let text = match tokio::fs::read_to_string(&self.path).await {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(Into::into)).collect()
    }

    pub async fn summary(&self) -> std::io::Result<RatingsSummary> {
        Ok(RatingsSummary::from_records(&self.records().await?))
    }
}
