//! Seeded synthetic data for desk-scale demonstrations and tests: Gaussian
//! class clusters, samples from a two-covariance speaker model, and a stub
//! embedder that stands in for a neural extractor in diarization runs.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backend::PldaModel;
use crate::diarize::subsegment_key;
use crate::error::{Error, Result};
use crate::margin::LabeledData;
use crate::types::{EmbeddingSet, Segment, SpeakerMap};

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `classes` isotropic unit-variance clusters of `per_class` points in `dim`
/// dimensions. Class centers sit on scaled coordinate axes (`classes <= dim`)
/// so that any two centers are `separation` apart.
pub fn gaussian_clusters(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> LabeledData {
    assert!(
        classes <= dim,
        "need classes <= dim for axis-aligned centers"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = separation / std::f64::consts::SQRT_2;
    let mut embeddings = Vec::with_capacity(classes * per_class);
    let mut targets = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for c in 0..classes {
            let mut x = normal_vec(&mut rng, dim);
            x[c] += radius;
            embeddings.push(x);
            targets.push(c);
        }
    }
    LabeledData {
        embeddings,
        targets,
        classes,
    }
}

fn cholesky_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // PSD matrices (a zero between-covariance, say) get a tiny ridge.
    let ridge = 1e-12 * (m.trace().abs() / m.nrows() as f64).max(1.0);
    let mut a = m.clone();
    for _ in 0..4 {
        if let Some(c) = a.clone().cholesky() {
            return Ok(c.l());
        }
        a += DMatrix::identity(m.nrows(), m.nrows()) * ridge;
    }
    Err(Error::Conditioning("sampling covariance".into()))
}

/// Draws `speakers x utts_per_speaker` embeddings from the two-covariance
/// model `x = mu + y_s + e`, with keys `spkNNNN-uttNN`.
pub fn sample_two_covariance(
    model: &PldaModel,
    speakers: usize,
    utts_per_speaker: usize,
    seed: u64,
) -> Result<(EmbeddingSet, SpeakerMap)> {
    let dim = model.dim();
    let lb = cholesky_factor(&model.sigma_b)?;
    let lw = cholesky_factor(&model.sigma_w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = EmbeddingSet::with_dim(dim);
    let mut spk = SpeakerMap::new();
    for s in 0..speakers {
        let y = &lb * DVector::from_vec(normal_vec(&mut rng, dim));
        for u in 0..utts_per_speaker {
            let e = &lw * DVector::from_vec(normal_vec(&mut rng, dim));
            let x = &model.mu + &y + e;
            let key = format!("spk{s:04}-utt{u:02}");
            set.insert_f64(key.clone(), x.as_slice())?;
            spk.insert(key, format!("spk{s:04}"))?;
        }
    }
    Ok((set, spk))
}

/// Draws `n` embeddings from `N(mu, cov)`, keyed `uttNNNNNN`.
pub fn sample_gaussian(
    mu: &DVector<f64>,
    cov: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    let l = cholesky_factor(cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = EmbeddingSet::with_dim(mu.len());
    for i in 0..n {
        let x = mu + &l * DVector::from_vec(normal_vec(&mut rng, mu.len()));
        set.insert_f64(format!("utt{i:06}"), x.as_slice())?;
    }
    Ok(set)
}

/// Deterministic stand-in for a speaker embedding extractor.
///
/// Each speaker owns a seeded random unit direction (its blob center); an
/// embedding is that center plus isotropic noise seeded by the subsegment
/// index, so identical inputs always yield identical vectors.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    centers: Vec<Vec<f64>>,
    noise: f64,
    seed: u64,
}

impl StubEmbedder {
    pub fn new(speakers: usize, dim: usize, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..speakers)
            .map(|_| {
                let v = normal_vec(&mut rng, dim);
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        Self {
            centers,
            noise,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn embed(&self, index: usize, speaker: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        self.centers[speaker]
            .iter()
            .map(|c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                c + self.noise * z
            })
            .collect()
    }

    /// Embeds every subsegment as the reference speaker with the largest
    /// overlap (ties to the lower speaker index). `reference` holds
    /// `(start, end, speaker_index)` turns.
    pub fn embed_subsegments(
        &self,
        subsegments: &[Segment],
        reference: &[(f64, f64, usize)],
    ) -> Result<EmbeddingSet> {
        let mut set = EmbeddingSet::with_dim(self.dim());
        for (i, seg) in subsegments.iter().enumerate() {
            let mut overlap = vec![0.0; self.centers.len()];
            for &(s, e, spk) in reference {
                overlap[spk] += (seg.end.min(e) - seg.start.max(s)).max(0.0);
            }
            let best = (0..overlap.len())
                .max_by(|&a, &b| overlap[a].total_cmp(&overlap[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            set.insert_f64(subsegment_key(seg), &self.embed(i, best))?;
        }
        Ok(set)
    }
}
