//! Trial scoring back-ends: cosine similarity (with optional mean
//! normalization) and two-covariance PLDA.

mod cosine;
mod plda;

pub use cosine::{
    apply_mean_norm, compute_mean, cosine_score, length_norm, read_mean, write_mean, MeanVector,
    MEAN_KEY,
};
pub use plda::{
    plda_adapt, plda_llr, plda_log_likelihood, plda_train, plda_train_with, PldaModel, PldaScorer,
    PldaTraining, MODEL_MAGIC,
};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::types::{widen, EmbeddingSet, ScoreList, TrialList};

/// Pairwise scoring function applied to each trial.
#[derive(Debug, Clone)]
pub enum Scorer {
    Cosine,
    Plda(PldaScorer),
}

impl Scorer {
    pub fn plda(model: &PldaModel) -> Result<Self> {
        Ok(Scorer::Plda(model.scorer()?))
    }

    pub fn score(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        match self {
            Scorer::Cosine => cosine_score(enroll, test),
            Scorer::Plda(s) => s.llr(enroll, test),
        }
    }
}

/// Scores every trial in order. See [`score_trials_with`].
pub fn score_trials(
    scorer: &Scorer,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &TrialList,
) -> Result<ScoreList> {
    score_trials_with(Execution::default(), scorer, enroll, test, trials)
}

/// Scores every trial; each score depends only on its own pair, so the
/// result is identical under any execution schedule.
pub fn score_trials_with(
    exec: Execution,
    scorer: &Scorer,
    enroll: &EmbeddingSet,
    test: &EmbeddingSet,
    trials: &TrialList,
) -> Result<ScoreList> {
    let mut pairs = Vec::with_capacity(trials.len());
    for t in &trials.trials {
        let e = enroll.get(&t.enroll).ok_or_else(|| Error::Lookup {
            key: t.enroll.clone(),
            side: "enroll set".into(),
        })?;
        let v = test.get(&t.test).ok_or_else(|| Error::Lookup {
            key: t.test.clone(),
            side: "test set".into(),
        })?;
        pairs.push((e, v));
    }
    let scores = par::try_map(exec, &pairs, |(e, t)| scorer.score(&widen(e), &widen(t)))?;
    Ok(ScoreList::from_trials(trials, scores))
}
