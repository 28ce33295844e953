use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::types::{Label, ScoreList, TrialList};

/// Detection cost parameters. Costs default to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl DcfParams {
    pub fn new(p_target: f64, c_miss: f64, c_fa: f64) -> Result<Self> {
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p_target must lie in (0, 1), got {p_target}"
            )));
        }
        if !(c_miss > 0.0 && c_fa > 0.0 && c_miss.is_finite() && c_fa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "costs must be positive, got c_miss={c_miss} c_fa={c_fa}"
            )));
        }
        Ok(Self {
            p_target,
            c_miss,
            c_fa,
        })
    }

    pub fn with_p_target(p_target: f64) -> Result<Self> {
        Self::new(p_target, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    /// Fraction in `[0, 1]`.
    pub eer: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinDcfResult {
    pub min_dcf: f64,
    pub threshold: f64,
}

/// One operating point: accept when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionPoint {
    pub threshold: f64,
    /// Fraction of target scores below the threshold.
    pub frr: f64,
    /// Fraction of nontarget scores at or above the threshold.
    pub far: f64,
}

/// Splits scores into (target, nontarget) by matching them to labeled
/// trials on the (enroll, test) pair.
pub fn labeled_scores(scores: &ScoreList, trials: &TrialList) -> Result<(Vec<f64>, Vec<f64>)> {
    trials.check_labeled()?;
    let mut by_pair: HashMap<(&str, &str), f64> = HashMap::with_capacity(scores.len());
    for s in &scores.scores {
        by_pair
            .entry((s.enroll.as_str(), s.test.as_str()))
            .or_insert(s.score);
    }
    let mut tar = Vec::new();
    let mut non = Vec::new();
    for t in &trials.trials {
        let s = *by_pair
            .get(&(t.enroll.as_str(), t.test.as_str()))
            .ok_or_else(|| Error::Lookup {
                key: format!("{} {}", t.enroll, t.test),
                side: "scores".into(),
            })?;
        match t.label {
            Label::Target => tar.push(s),
            Label::Nontarget => non.push(s),
            Label::Unknown => unreachable!("checked above"),
        }
    }
    Ok((tar, non))
}

fn check_sets(tar: &[f64], non: &[f64]) -> Result<()> {
    if tar.is_empty() || non.is_empty() {
        return Err(Error::Data(
            "need at least one target and one nontarget score".into(),
        ));
    }
    if tar.iter().chain(non).any(|s| !s.is_finite()) {
        return Err(Error::Domain("scores must be finite".into()));
    }
    Ok(())
}

/// Operating points at every distinct score (ascending) followed by the
/// reject-all point at `+inf`. The lowest distinct score is the accept-all
/// point (FRR 0, FAR 1).
pub fn detection_curve(tar: &[f64], non: &[f64]) -> Vec<DetectionPoint> {
    let mut all: Vec<(f64, bool)> = tar
        .iter()
        .map(|&s| (s, true))
        .chain(non.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    let mut points = Vec::new();
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        points.push(DetectionPoint {
            threshold: t,
            frr: tar_below as f64 / nt,
            far: (non.len() - non_below) as f64 / nn,
        });
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
    }
    points.push(DetectionPoint {
        threshold: f64::INFINITY,
        frr: 1.0,
        far: 0.0,
    });
    points
}

/// EER from the FRR/FAR crossing of the detection curve, linearly
/// interpolated between the two sweep points around the crossing. When the
/// curves touch over a run of points the threshold is the run's midpoint.
pub fn eer_from_scores(tar: &[f64], non: &[f64]) -> Result<EerResult> {
    check_sets(tar, non)?;
    Ok(eer_from_curve(&detection_curve(tar, non)))
}

pub(crate) fn eer_from_curve(points: &[DetectionPoint]) -> EerResult {
    let d = |p: &DetectionPoint| p.frr - p.far;
    // The first point has d = -1 and the last d = +1.
    let j = points.iter().position(|p| d(p) >= 0.0).unwrap();
    if d(&points[j]) == 0.0 {
        let k = (j..points.len())
            .take_while(|&k| d(&points[k]) == 0.0)
            .last()
            .unwrap();
        return EerResult {
            eer: points[j].frr,
            threshold: 0.5 * (points[j].threshold + points[k].threshold),
        };
    }
    let (a, b) = (&points[j - 1], &points[j]);
    let lambda = -d(a) / (d(b) - d(a));
    let eer = a.frr + lambda * (b.frr - a.frr);
    let threshold = if b.threshold.is_finite() {
        a.threshold + lambda * (b.threshold - a.threshold)
    } else {
        a.threshold
    };
    EerResult { eer, threshold }
}

/// Minimum normalized DCF over thresholds at every distinct score and
/// `+-inf`. The first minimizing threshold (lowest) is reported.
pub fn min_dcf_from_scores(tar: &[f64], non: &[f64], params: &DcfParams) -> Result<MinDcfResult> {
    check_sets(tar, non)?;
    let curve = detection_curve(tar, non);
    let miss_w = params.c_miss * params.p_target;
    let fa_w = params.c_fa * (1.0 - params.p_target);
    let norm = miss_w.min(fa_w);
    let cost = |frr: f64, far: f64| (miss_w * frr + fa_w * far) / norm;
    let mut best = MinDcfResult {
        min_dcf: cost(0.0, 1.0),
        threshold: f64::NEG_INFINITY,
    };
    for p in &curve {
        let c = cost(p.frr, p.far);
        if c < best.min_dcf {
            best = MinDcfResult {
                min_dcf: c,
                threshold: p.threshold,
            };
        }
    }
    Ok(best)
}

pub fn compute_eer(scores: &ScoreList, trials: &TrialList) -> Result<EerResult> {
    let (tar, non) = labeled_scores(scores, trials)?;
    eer_from_scores(&tar, &non)
}

pub fn compute_min_dcf(
    scores: &ScoreList,
    trials: &TrialList,
    params: &DcfParams,
) -> Result<MinDcfResult> {
    let (tar, non) = labeled_scores(scores, trials)?;
    min_dcf_from_scores(&tar, &non, params)
}
