//! Spectral-clustering diarization over fixed-length subsegments of
//! voice-activity regions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::cosine_score;
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::types::{Diarization, EmbeddingSet, Segment};

/// Weight given to pruned affinities.
const PRUNED_SCALE: f64 = 0.01;
const KMEANS_MAX_ITERS: usize = 100;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsegmentPlan {
    pub window: f64,
    pub shift: f64,
    pub min_dur: f64,
}

impl Default for SubsegmentPlan {
    fn default() -> Self {
        Self {
            window: 1.5,
            shift: 0.75,
            min_dur: 0.25,
        }
    }
}

impl SubsegmentPlan {
    pub fn new(window: f64, shift: f64, min_dur: f64) -> Result<Self> {
        let plan = Self {
            window,
            shift,
            min_dur,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "window must be > 0, got {}",
                self.window
            )));
        }
        if !(self.shift > 0.0 && self.shift <= self.window) {
            return Err(Error::InvalidArgument(format!(
                "shift must lie in (0, window], got {}",
                self.shift
            )));
        }
        if !(self.min_dur.is_finite() && self.min_dur >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "min_dur must be >= 0, got {}",
                self.min_dur
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub p_percentile: f64,
    pub max_speakers: usize,
    pub fixed_speakers: Option<usize>,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            p_percentile: 0.95,
            max_speakers: 20,
            fixed_speakers: None,
            kmeans_restarts: 10,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_percentile > 0.0 && self.p_percentile <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p_percentile must lie in (0, 1], got {}",
                self.p_percentile
            )));
        }
        if self.max_speakers == 0 {
            return Err(Error::InvalidArgument("max_speakers must be >= 1".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidArgument(
                "kmeans_restarts must be >= 1".into(),
            ));
        }
        match self.fixed_speakers {
            Some(0) => Err(Error::InvalidArgument(
                "fixed speaker count must be >= 1".into(),
            )),
            Some(k) if k > self.max_speakers => Err(Error::InvalidArgument(format!(
                "fixed speaker count {k} exceeds max_speakers {}",
                self.max_speakers
            ))),
            _ => Ok(()),
        }
    }
}

/// Cluster assignment of the affinity rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Labels in `0..k`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub k: usize,
    /// Laplacian spectrum, ascending.
    pub eigenvalues: Vec<f64>,
}

fn to_ms(t: f64) -> u64 {
    (t * 1000.0).round() as u64
}

/// Deterministic key `<rec>-<start_ms>-<end_ms>`, times zero-padded to
/// eight digits.
pub fn subsegment_key(seg: &Segment) -> String {
    format!(
        "{}-{:08}-{:08}",
        seg.recording_id,
        to_ms(seg.start),
        to_ms(seg.end)
    )
}

/// Union of overlapping or touching regions per recording, sorted by start.
pub fn merge_vad(vad: &[Segment]) -> Vec<Segment> {
    let mut sorted: Vec<&Segment> = vad.iter().collect();
    sorted.sort_by(|a, b| {
        a.recording_id
            .cmp(&b.recording_id)
            .then(a.start.total_cmp(&b.start))
    });
    let mut out: Vec<Segment> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if last.recording_id == s.recording_id && s.start <= last.end => {
                last.end = last.end.max(s.end);
            }
            _ => out.push(Segment {
                recording_id: s.recording_id.clone(),
                start: s.start,
                end: s.end,
                speaker: String::new(),
            }),
        }
    }
    out
}

fn tile(seg: &Segment, plan: &SubsegmentPlan) -> Vec<Segment> {
    let piece = |s: f64, e: f64| Segment {
        recording_id: seg.recording_id.clone(),
        start: s,
        end: e,
        speaker: String::new(),
    };
    let mut out: Vec<Segment> = Vec::new();
    for i in 0.. {
        let s = seg.start + i as f64 * plan.shift;
        let e = (s + plan.window).min(seg.end);
        if i > 0 && e - s < plan.min_dur {
            out.last_mut().unwrap().end = seg.end;
        } else {
            out.push(piece(s, e));
        }
        if s + plan.window >= seg.end - EPS {
            break;
        }
    }
    out
}

/// Tiles each region with `window`-long pieces every `shift` seconds, the
/// last piece clipped to the region end. A clipped tail shorter than
/// `min_dur` is absorbed into the previous piece.
pub fn subsegment(vad: &[Segment], plan: &SubsegmentPlan) -> Vec<Segment> {
    vad.iter().flat_map(|s| tile(s, plan)).collect()
}

/// Pairwise cosine similarities with a unit diagonal.
pub fn build_affinity(embs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = embs.len();
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        if embs[i].iter().all(|&x| x == 0.0) {
            return Err(Error::Domain(format!("embedding {i} is the zero vector")));
        }
        for j in 0..i {
            let c = cosine_score(&embs[i], &embs[j])?;
            a[(i, j)] = c;
            a[(j, i)] = c;
        }
    }
    Ok(a)
}

/// Keeps the largest `p` fraction of each row and scales the rest by 0.01,
/// then symmetrizes.
pub fn refine_affinity(a: &DMatrix<f64>, p_percentile: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let n_prune = (((1.0 - p_percentile) * n as f64).floor() as usize).min(n.saturating_sub(1));
    let mut m = a.clone();
    for i in 0..n {
        let mut row: Vec<f64> = a.row(i).iter().copied().collect();
        row.sort_by(f64::total_cmp);
        let threshold = row[n_prune];
        for j in 0..n {
            if a[(i, j)] < threshold {
                m[(i, j)] *= PRUNED_SCALE;
            }
        }
    }
    (&m + m.transpose()) * 0.5
}

/// Eigenpairs sorted by ascending eigenvalue.
fn sorted_eigen(l: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = l.nrows();
    let eig = SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn eigengap_count(values: &[f64], max_speakers: usize) -> usize {
    let n = values.len();
    let upper = max_speakers.min(n.saturating_sub(1));
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..=upper {
        let gap = values[i] - values[i - 1];
        if gap > best.1 {
            best = (i, gap);
        }
    }
    best.0
}

/// Normalized-Laplacian spectral clustering. Negative affinities count as
/// no edge. The speaker count is the position of the largest eigengap
/// unless fixed by the config.
pub fn spectral_cluster(a: &DMatrix<f64>, cfg: &ClusterConfig) -> Result<Clustering> {
    cfg.validate()?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Clustering {
            labels: Vec::new(),
            k: 0,
            eigenvalues: Vec::new(),
        });
    }
    let w = a.map(|x| x.max(0.0));
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = w.row(i).sum();
        if d.is_nan() || d <= 0.0 {
            return Err(Error::DegenerateGraph {
                index: i,
                key: i.to_string(),
            });
        }
        inv_sqrt.push(1.0 / d.sqrt());
    }
    let l = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    });
    let (values, vectors) = sorted_eigen(l);
    let k = match cfg.fixed_speakers {
        Some(k) => k.min(n),
        None => eigengap_count(&values, cfg.max_speakers),
    };
    let points: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let v: Vec<f64> = (0..k).map(|c| vectors[(r, c)]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.into_iter().map(|x| x / norm).collect()
            } else {
                v
            }
        })
        .collect();
    let labels = kmeans(&points, k, cfg.kmeans_restarts, cfg.seed);
    Ok(Clustering {
        labels,
        k,
        eigenvalues: values,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Moves the point farthest from its center out of a multi-member cluster
/// into each empty cluster.
fn repair_empty(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centers[labels[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, _)) => labels[i] = empty,
            None => return,
        }
    }
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<usize>, f64) {
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(points, k, &mut rng);
    let mut labels: Vec<usize> = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        repair_empty(points, &centers, &mut next, k);
        let done = next == labels;
        labels = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if done {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    (labels, inertia)
}

fn relabel_by_first_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// k-means++ with `restarts` runs seeded `seed + r`; the lowest inertia
/// wins, ties to the earliest run. Labels are renumbered by first
/// appearance.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return vec![0; points.len()];
    }
    let k = k.min(points.len());
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts.max(1) {
        let (labels, inertia) = lloyd(points, k, seed.wrapping_add(r as u64));
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    relabel_by_first_appearance(&best.unwrap().0)
}

/// Diarizes one recording. Overlapping tiles are resolved by giving each
/// instant to the tile whose center is nearest, within its own VAD region.
pub fn diarize_recording(
    vad: &[Segment],
    embeddings: &EmbeddingSet,
    plan: &SubsegmentPlan,
    cfg: &ClusterConfig,
) -> Result<Diarization> {
    plan.validate()?;
    cfg.validate()?;
    if let Some(first) = vad.first() {
        if let Some(other) = vad.iter().find(|s| s.recording_id != first.recording_id) {
            return Err(Error::Data(format!(
                "VAD mixes recordings '{}' and '{}'",
                first.recording_id, other.recording_id
            )));
        }
    }
    let regions = merge_vad(vad);
    let tiles: Vec<Vec<Segment>> = regions.iter().map(|r| tile(r, plan)).collect();
    let keys: Vec<String> = tiles.iter().flatten().map(subsegment_key).collect();
    if keys.is_empty() {
        return Ok(Diarization::new());
    }
    let mut embs = Vec::with_capacity(keys.len());
    for key in &keys {
        embs.push(embeddings.get_f64(key).ok_or_else(|| Error::Lookup {
            key: key.clone(),
            side: "subsegment embeddings".into(),
        })?);
    }
    let affinity = refine_affinity(&build_affinity(&embs)?, cfg.p_percentile);
    let clustering = spectral_cluster(&affinity, cfg).map_err(|e| match e {
        Error::DegenerateGraph { index, .. } => Error::DegenerateGraph {
            index,
            key: keys[index].clone(),
        },
        e => e,
    })?;

    let mut labels = clustering.labels.iter();
    let mut pieces: Vec<(f64, f64, usize)> = Vec::new();
    for (region, ts) in regions.iter().zip(&tiles) {
        let centers: Vec<f64> = ts.iter().map(Segment::center).collect();
        for i in 0..ts.len() {
            let s = if i == 0 {
                region.start
            } else {
                0.5 * (centers[i - 1] + centers[i])
            };
            let e = if i + 1 == ts.len() {
                region.end
            } else {
                0.5 * (centers[i] + centers[i + 1])
            };
            let label = *labels.next().unwrap();
            match pieces.last_mut() {
                Some(last) if last.2 == label && s <= last.1 => last.1 = e,
                _ if e > s => pieces.push((s, e, label)),
                _ => {}
            }
        }
    }
    let rec = &regions[0].recording_id;
    let mut out = Diarization::new();
    for (s, e, label) in pieces {
        out.push(Segment::new(rec.clone(), s, e, format!("spk{label:02}"))?);
    }
    Ok(out)
}

/// Diarizes every recording in `vad` independently.
pub fn diarize_all(
    vad: &Diarization,
    embeddings: &EmbeddingSet,
    plan: &SubsegmentPlan,
    cfg: &ClusterConfig,
) -> Result<Diarization> {
    diarize_all_with(Execution::default(), vad, embeddings, plan, cfg)
}

pub fn diarize_all_with(
    exec: Execution,
    vad: &Diarization,
    embeddings: &EmbeddingSet,
    plan: &SubsegmentPlan,
    cfg: &ClusterConfig,
) -> Result<Diarization> {
    let recs: Vec<&[Segment]> = vad.recordings().map(|(_, segs)| segs).collect();
    let parts = par::try_map(exec, &recs, |segs| {
        diarize_recording(segs, embeddings, plan, cfg)
    })?;
    let mut out = Diarization::new();
    for p in parts {
        out.extend(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(s: f64, e: f64) -> Segment {
        Segment::new("rec", s, e, "").unwrap()
    }

    fn bounds(segs: &[Segment]) -> Vec<(f64, f64)> {
        segs.iter().map(|s| (s.start, s.end)).collect()
    }

    #[test]
    fn tiles_three_seconds() {
        let out = subsegment(&[seg(0.0, 3.0)], &SubsegmentPlan::default());
        assert_eq!(bounds(&out), vec![(0.0, 1.5), (0.75, 2.25), (1.5, 3.0)]);
        assert_eq!(subsegment_key(&out[1]), "rec-00000750-00002250");
    }

    #[test]
    fn short_segment_is_single_tile() {
        let out = subsegment(&[seg(2.0, 2.6)], &SubsegmentPlan::default());
        assert_eq!(bounds(&out), vec![(2.0, 2.6)]);
        assert!(subsegment(&[], &SubsegmentPlan::default()).is_empty());
    }

    #[test]
    fn short_tail_is_absorbed() {
        let plan = SubsegmentPlan::new(1.0, 1.0, 0.25).unwrap();
        let out = subsegment(&[seg(0.0, 2.1)], &plan);
        assert_eq!(bounds(&out), vec![(0.0, 1.0), (1.0, 2.1)]);
        let out = subsegment(&[seg(0.0, 2.5)], &plan);
        assert_eq!(bounds(&out), vec![(0.0, 1.0), (1.0, 2.0), (2.0, 2.5)]);
    }

    #[test]
    fn plan_validation() {
        assert!(SubsegmentPlan::new(1.0, 1.5, 0.0).is_err());
        assert!(SubsegmentPlan::new(0.0, 0.0, 0.0).is_err());
        assert!(SubsegmentPlan::new(1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn affinity_basics() {
        let a = build_affinity(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(a, DMatrix::from_element(2, 2, 1.0));
        let a = build_affinity(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(a, DMatrix::identity(2, 2));
        assert!(build_affinity(&[vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn refine_keep_all_and_single() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.5, 0.2, 1.0, 0.1, 0.5, 0.1, 1.0]);
        assert_eq!(refine_affinity(&a, 1.0), a);
        assert_eq!(
            refine_affinity(&DMatrix::identity(1, 1), 0.5),
            DMatrix::identity(1, 1)
        );
    }

    #[test]
    fn refine_attenuates_cross_block() {
        let mut a = DMatrix::from_element(4, 4, 0.1);
        for (i, j) in [
            (0, 0),
            (0, 1),
            (1, 0),
            (1, 1),
            (2, 2),
            (2, 3),
            (3, 2),
            (3, 3),
        ] {
            a[(i, j)] = if i == j { 1.0 } else { 0.9 };
        }
        let r = refine_affinity(&a, 0.5);
        assert!((r[(0, 2)] - 0.001).abs() < 1e-15);
        assert_eq!(r[(0, 1)], 0.9);
    }

    fn blobs(n: usize, noise: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2 * n)
            .map(|i| {
                let sign = if i < n { 1.0 } else { -1.0 };
                (0..4)
                    .map(|d| {
                        let base = if d == 0 { sign } else { 0.0 };
                        base + noise * (rng.random::<f64>() - 0.5)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn two_blobs_give_two_speakers() {
        let embs = blobs(20, 0.2, 3);
        let a = refine_affinity(&build_affinity(&embs).unwrap(), 0.95);
        let c = spectral_cluster(&a, &ClusterConfig::default()).unwrap();
        assert_eq!(c.k, 2);
        assert!(c.labels[..20].iter().all(|&l| l == 0));
        assert!(c.labels[20..].iter().all(|&l| l == 1));
    }

    #[test]
    fn identical_embeddings_give_one_speaker() {
        let embs = vec![vec![0.3, -1.0, 2.0]; 6];
        let a = refine_affinity(&build_affinity(&embs).unwrap(), 0.95);
        let c = spectral_cluster(&a, &ClusterConfig::default()).unwrap();
        assert_eq!(c.k, 1);
        assert!(c.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn fixed_count_is_forced_and_deterministic() {
        let embs = blobs(20, 0.2, 3);
        let a = refine_affinity(&build_affinity(&embs).unwrap(), 0.95);
        let cfg = ClusterConfig {
            fixed_speakers: Some(3),
            seed: 7,
            ..ClusterConfig::default()
        };
        let c = spectral_cluster(&a, &cfg).unwrap();
        assert_eq!(c.k, 3);
        let mut distinct = c.labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct, vec![0, 1, 2]);
        assert_eq!(c, spectral_cluster(&a, &cfg).unwrap());

        // More speakers than points.
        let same = vec![vec![1.0, 0.0]; 2];
        let a = build_affinity(&same).unwrap();
        let c = spectral_cluster(&a, &cfg).unwrap();
        assert_eq!(c.k, 2);
        assert_eq!(c.labels, vec![0, 1]);
    }

    #[test]
    fn zero_degree_is_reported() {
        let mut a = DMatrix::identity(3, 3);
        a[(1, 1)] = 0.0;
        assert!(matches!(
            spectral_cluster(&a, &ClusterConfig::default()),
            Err(Error::DegenerateGraph { index: 1, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = ClusterConfig {
            fixed_speakers: Some(30),
            ..ClusterConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ClusterConfig {
            p_percentile: 0.0,
            ..ClusterConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_region_identical_embeddings() {
        let vad = vec![seg(1.0, 6.0)];
        let plan = SubsegmentPlan::default();
        let mut set = EmbeddingSet::new();
        for s in subsegment(&vad, &plan) {
            set.insert_f64(subsegment_key(&s), &[1.0, 2.0]).unwrap();
        }
        let d = diarize_recording(&vad, &set, &plan, &ClusterConfig::default()).unwrap();
        let segs = d.recording("rec");
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start, segs[0].end), (1.0, 6.0));
        assert_eq!(segs[0].speaker, "spk00");
    }

    #[test]
    fn missing_embedding_is_lookup_error() {
        let vad = vec![seg(0.0, 3.0)];
        assert!(matches!(
            diarize_recording(
                &vad,
                &EmbeddingSet::new(),
                &SubsegmentPlan::default(),
                &ClusterConfig::default()
            ),
            Err(Error::Lookup { .. })
        ));
        let empty = diarize_recording(
            &[],
            &EmbeddingSet::new(),
            &SubsegmentPlan::default(),
            &ClusterConfig::default(),
        )
        .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn vad_is_merged() {
        let m = merge_vad(&[seg(3.0, 4.0), seg(0.0, 1.0), seg(0.5, 2.0), seg(2.0, 2.5)]);
        assert_eq!(bounds(&m), vec![(0.0, 2.5), (3.0, 4.0)]);
    }
}
