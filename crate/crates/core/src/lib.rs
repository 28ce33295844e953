//! Speaker-recognition backend toolkit.
//!
//! Consumes frame-level features or fixed-dimensional speaker embeddings and
//! covers the downstream pipeline: pooling, margin-softmax objectives,
//! cosine/PLDA trial scoring with domain adaptation, EER/minDCF, spectral
//! clustering diarization and DER scoring. Kaldi-style binary archives and
//! the usual text formats (trials, scores, RTTM, lab, utt2spk) are handled
//! by [`kaldi_io`].
//!
//! With the default `parallel` feature, batch work (trial scoring, per
//! recording diarization and DER, PLDA E-steps) runs on rayon. Every such
//! path has a sequential twin selected through [`par::Execution`] and both
//! produce bitwise identical results.

pub mod backend;
pub mod diarize;
pub mod error;
pub mod kaldi_io;
pub mod margin;
pub mod metrics;
pub mod par;
pub mod pooling;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Diarization, EmbeddingSet, Label, ScoreList, ScoredTrial, Segment, SpeakerMap, Trial, TrialList,
};
