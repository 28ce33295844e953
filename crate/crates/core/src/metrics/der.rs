//! Diarization error rate on exact segment boundaries (no frame grid).

use std::collections::{BTreeMap, BTreeSet};

use super::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::types::{Diarization, Segment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerConfig {
    /// Total no-score width around each reference boundary (half each side).
    pub collar: f64,
    /// Score regions where several reference speakers overlap.
    pub score_overlap: bool,
}

impl Default for DerConfig {
    fn default() -> Self {
        Self {
            collar: 0.25,
            score_overlap: true,
        }
    }
}

/// Error components as percentages of scored reference speech.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerBreakdown {
    pub miss_pct: f64,
    pub fa_pct: f64,
    pub confusion_pct: f64,
    pub der_pct: f64,
    pub scored_speech_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Tally {
    scored: f64,
    miss: f64,
    fa: f64,
    confusion: f64,
}

/// Per-speaker union of intervals, speakers in name order.
fn speaker_intervals(segs: &[Segment]) -> Vec<Vec<(f64, f64)>> {
    let mut by_spk: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for s in segs {
        by_spk.entry(&s.speaker).or_default().push((s.start, s.end));
    }
    by_spk
        .into_values()
        .map(|mut iv| {
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
            for (s, e) in iv {
                match merged.last_mut() {
                    Some(last) if s <= last.1 => last.1 = last.1.max(e),
                    _ => merged.push((s, e)),
                }
            }
            merged
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Event {
    Ref(usize, bool),
    Hyp(usize, bool),
    Zone(bool),
}

/// An elementary scored interval with the speakers active over it.
struct Piece {
    dur: f64,
    refs: Vec<usize>,
    hyps: Vec<usize>,
}

fn scored_pieces(
    refs: &[Vec<(f64, f64)>],
    hyps: &[Vec<(f64, f64)>],
    cfg: &DerConfig,
) -> Vec<Piece> {
    let mut events: Vec<(f64, Event)> = Vec::new();
    let half = 0.5 * cfg.collar;
    for (i, iv) in refs.iter().enumerate() {
        for &(s, e) in iv {
            events.push((s, Event::Ref(i, true)));
            events.push((e, Event::Ref(i, false)));
            if half > 0.0 {
                for b in [s, e] {
                    events.push((b - half, Event::Zone(true)));
                    events.push((b + half, Event::Zone(false)));
                }
            }
        }
    }
    for (i, iv) in hyps.iter().enumerate() {
        for &(s, e) in iv {
            events.push((s, Event::Hyp(i, true)));
            events.push((e, Event::Hyp(i, false)));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut ref_on = vec![false; refs.len()];
    let mut hyp_on = vec![false; hyps.len()];
    let mut zones = 0i64;
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            match events[i].1 {
                Event::Ref(k, on) => ref_on[k] = on,
                Event::Hyp(k, on) => hyp_on[k] = on,
                Event::Zone(on) => zones += if on { 1 } else { -1 },
            }
            i += 1;
        }
        let Some(&(next, _)) = events.get(i) else {
            break;
        };
        let dur = next - t;
        if dur <= 0.0 || zones > 0 {
            continue;
        }
        let active = |on: &[bool]| -> Vec<usize> {
            on.iter()
                .enumerate()
                .filter_map(|(k, &a)| a.then_some(k))
                .collect()
        };
        let r = active(&ref_on);
        if !cfg.score_overlap && r.len() > 1 {
            continue;
        }
        let h = active(&hyp_on);
        if r.is_empty() && h.is_empty() {
            continue;
        }
        pieces.push(Piece {
            dur,
            refs: r,
            hyps: h,
        });
    }
    pieces
}

fn score_recording(reference: &[Segment], hypothesis: &[Segment], cfg: &DerConfig) -> Tally {
    let refs = speaker_intervals(reference);
    let hyps = speaker_intervals(hypothesis);
    let pieces = scored_pieces(&refs, &hyps, cfg);

    let mut overlap = vec![vec![0.0; hyps.len()]; refs.len()];
    for p in &pieces {
        for &r in &p.refs {
            for &h in &p.hyps {
                overlap[r][h] += p.dur;
            }
        }
    }
    let mapping = max_weight_assignment(&overlap);

    let mut t = Tally::default();
    for p in &pieces {
        let (nr, nh) = (p.refs.len(), p.hyps.len());
        let correct = p
            .refs
            .iter()
            .filter(|&&r| mapping[r].is_some_and(|h| p.hyps.contains(&h)))
            .count();
        t.scored += nr as f64 * p.dur;
        t.miss += nr.saturating_sub(nh) as f64 * p.dur;
        t.fa += nh.saturating_sub(nr) as f64 * p.dur;
        t.confusion += (nr.min(nh) - correct) as f64 * p.dur;
    }
    t
}

/// DER of `hypothesis` against `reference` over the union of their
/// recordings. See [`compute_der_with`].
pub fn compute_der(
    reference: &Diarization,
    hypothesis: &Diarization,
    cfg: &DerConfig,
) -> Result<DerBreakdown> {
    compute_der_with(Execution::default(), reference, hypothesis, cfg)
}

/// Reference speech within `collar / 2` of any reference speaker-turn
/// boundary is not scored. Each recording gets its own optimal one-to-one
/// speaker mapping (maximum matched time). Recordings are scored
/// independently and summed in recording-id order.
pub fn compute_der_with(
    exec: Execution,
    reference: &Diarization,
    hypothesis: &Diarization,
    cfg: &DerConfig,
) -> Result<DerBreakdown> {
    if !(cfg.collar.is_finite() && cfg.collar >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "collar must be >= 0, got {}",
            cfg.collar
        )));
    }
    let ids: Vec<&str> = reference
        .recording_ids()
        .chain(hypothesis.recording_ids())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tallies = par::map(exec, &ids, |id| {
        score_recording(reference.recording(id), hypothesis.recording(id), cfg)
    });
    let total = tallies.iter().fold(Tally::default(), |a, t| Tally {
        scored: a.scored + t.scored,
        miss: a.miss + t.miss,
        fa: a.fa + t.fa,
        confusion: a.confusion + t.confusion,
    });
    if total.scored <= 0.0 {
        return Err(Error::UndefinedDenominator);
    }
    let pct = |x: f64| 100.0 * x / total.scored;
    let (miss_pct, fa_pct, confusion_pct) = (pct(total.miss), pct(total.fa), pct(total.confusion));
    Ok(DerBreakdown {
        miss_pct,
        fa_pct,
        confusion_pct,
        der_pct: miss_pct + fa_pct + confusion_pct,
        scored_speech_seconds: total.scored,
    })
}
