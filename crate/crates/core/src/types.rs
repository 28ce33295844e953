//! Domain types shared by every module. No algorithms live here.

use std::collections::BTreeMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// True when `key` is a usable utterance/recording token: nonempty and free
/// of ASCII whitespace. Keys are otherwise opaque.
pub fn is_token(key: &str) -> bool {
    !key.is_empty() && !key.bytes().any(|b| b.is_ascii_whitespace())
}

fn check_token(key: &str) -> Result<()> {
    if is_token(key) {
        Ok(())
    } else {
        Err(Error::Data(format!("invalid key token {key:?}")))
    }
}

/// Fixed-dimension utterance embeddings in insertion order.
///
/// Vectors are stored as `f32`, which is what the archive format carries;
/// scoring code widens to `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingSet {
    dim: usize,
    entries: IndexMap<String, Vec<f32>>,
}

impl EmbeddingSet {
    /// Empty set. The dimension is fixed by the first insertion.
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            entries: IndexMap::new(),
        }
    }

    /// Embedding dimension; 0 while the set is empty and no dim was given.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let key = key.into();
        check_token(&key)?;
        if vector.is_empty() {
            return Err(Error::Dimension {
                key,
                expected: self.dim.max(1),
                found: 0,
            });
        }
        if self.dim == 0 {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(Error::Dimension {
                key,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite component in '{key}'")));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        self.entries.insert(key, vector);
        Ok(())
    }

    /// Same as [`insert`](Self::insert) for `f64` input, rounding to `f32`.
    pub fn insert_f64(&mut self, key: impl Into<String>, vector: &[f64]) -> Result<()> {
        self.insert(key, vector.iter().map(|&v| v as f32).collect())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn get_f64(&self, key: &str) -> Option<Vec<f64>> {
        self.get(key).map(widen)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Returns a new set with `f` applied to every vector (in `f64`).
    pub fn map_vectors<F>(&self, mut f: F) -> Result<EmbeddingSet>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut out = EmbeddingSet::new();
        for (k, v) in self.iter() {
            out.insert_f64(k, &f(&widen(v)))?;
        }
        Ok(out)
    }
}

pub(crate) fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Nontarget,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub label: Label,
}

impl Trial {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, label: Label) -> Self {
        Self {
            enroll: enroll.into(),
            test: test.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Self {
        Self { trials }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Checks the conditions for metric computation: every trial labeled,
    /// at least one target and one nontarget.
    pub fn check_labeled(&self) -> Result<()> {
        let mut targets = 0usize;
        let mut nontargets = 0usize;
        for t in &self.trials {
            match t.label {
                Label::Target => targets += 1,
                Label::Nontarget => nontargets += 1,
                Label::Unknown => {
                    return Err(Error::Label {
                        enroll: t.enroll.clone(),
                        test: t.test.clone(),
                    })
                }
            }
        }
        if targets == 0 || nontargets == 0 {
            return Err(Error::Data(format!(
                "need at least one target and one nontarget trial (got {targets} / {nontargets})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub enroll: String,
    pub test: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreList {
    pub scores: Vec<ScoredTrial>,
}

impl ScoreList {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Pairs each score with the trial at the same position.
    pub fn from_trials(trials: &TrialList, scores: Vec<f64>) -> Self {
        debug_assert_eq!(trials.len(), scores.len());
        Self {
            scores: trials
                .trials
                .iter()
                .zip(scores)
                .map(|(t, score)| ScoredTrial {
                    enroll: t.enroll.clone(),
                    test: t.test.clone(),
                    score,
                })
                .collect(),
        }
    }
}

/// Utterance to speaker mapping (`utt2spk`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpeakerMap {
    map: IndexMap<String, String>,
}

impl SpeakerMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, utt: impl Into<String>, spk: impl Into<String>) -> Result<()> {
        let (utt, spk) = (utt.into(), spk.into());
        check_token(&utt)?;
        check_token(&spk)?;
        if self.map.contains_key(&utt) {
            return Err(Error::DuplicateKey(utt));
        }
        self.map.insert(utt, spk);
        Ok(())
    }

    pub fn speaker(&self, utt: &str) -> Option<&str> {
        self.map.get(utt).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(u, s)| (u.as_str(), s.as_str()))
    }
}

/// A timed region of one recording. `speaker` is empty for bare VAD output.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub recording_id: String,
    pub start: f64,
    pub end: f64,
    pub speaker: String,
}

impl Segment {
    pub fn new(
        recording_id: impl Into<String>,
        start: f64,
        end: f64,
        speaker: impl Into<String>,
    ) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || end <= start {
            return Err(Error::Data(format!(
                "segment [{start}, {end}] must satisfy 0 <= start < end"
            )));
        }
        Ok(Self {
            recording_id: recording_id.into(),
            start,
            end,
            speaker: speaker.into(),
        })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Speaker-labeled segments grouped by recording, recordings in key order.
///
/// Segments of different speakers may overlap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diarization {
    recordings: BTreeMap<String, Vec<Segment>>,
}

impl Diarization {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments(segments: impl IntoIterator<Item = Segment>) -> Self {
        let mut d = Self::new();
        for s in segments {
            d.push(s);
        }
        d
    }

    pub fn push(&mut self, segment: Segment) {
        self.recordings
            .entry(segment.recording_id.clone())
            .or_default()
            .push(segment);
    }

    pub fn recording(&self, id: &str) -> &[Segment] {
        self.recordings.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn recording_ids(&self) -> impl Iterator<Item = &str> {
        self.recordings.keys().map(String::as_str)
    }

    pub fn recordings(&self) -> impl Iterator<Item = (&str, &[Segment])> {
        self.recordings
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.recordings.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.recordings.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Append every segment of `other`.
    pub fn extend(&mut self, other: Diarization) {
        for (id, segs) in other.recordings {
            self.recordings.entry(id).or_default().extend(segs);
        }
    }
}
