//! Two-covariance PLDA.
//!
//! Generative model: `x = mu + y + e` with speaker factor `y ~ N(0, Sb)`
//! shared by all utterances of a speaker and residual `e ~ N(0, Sw)`.
//! Training is EM on the speaker factors; scoring is the same-speaker versus
//! different-speaker log-likelihood ratio of an (enroll, test) pair.

use std::path::Path;

use indexmap::IndexMap;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::types::{EmbeddingSet, SpeakerMap};

pub const MODEL_MAGIC: &[u8; 7] = b"WSPLDA1";

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    /// Between-speaker covariance (PSD).
    pub sigma_b: DMatrix<f64>,
    /// Within-speaker covariance (PD).
    pub sigma_w: DMatrix<f64>,
}

fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.amax().max(1.0)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let tol = 1e-9 * scale_of(m);
    if (m - m.transpose()).amax() > tol {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    Ok(())
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// Cholesky of `m`, adding a ridge `eps * I` (eps = 1e-6 * trace / dim,
/// doubled up to three times) when the plain factorization fails.
fn conditioned(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let m = symmetrize(m);
    if let Some(c) = m.clone().cholesky() {
        return Ok((m, c));
    }
    let dim = m.nrows();
    let tr = m.trace();
    let mut eps = if tr > 0.0 {
        1e-6 * tr / dim as f64
    } else {
        1e-10
    };
    for _ in 0..4 {
        let reg = &m + DMatrix::identity(dim, dim) * eps;
        if let Some(c) = reg.clone().cholesky() {
            return Ok((reg, c));
        }
        eps *= 2.0;
    }
    Err(Error::Conditioning(what.to_owned()))
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, sigma_b: DMatrix<f64>, sigma_w: DMatrix<f64>) -> Result<Self> {
        let m = Self {
            mu,
            sigma_b,
            sigma_w,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.dim();
        if f == 0 || self.sigma_b.shape() != (f, f) || self.sigma_w.shape() != (f, f) {
            return Err(Error::InvalidArgument(format!(
                "PLDA shapes inconsistent with dimension {f}"
            )));
        }
        let finite = self
            .mu
            .iter()
            .chain(self.sigma_b.iter())
            .chain(self.sigma_w.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("PLDA parameters must be finite".into()));
        }
        check_symmetric(&self.sigma_b, "between-speaker covariance")?;
        check_symmetric(&self.sigma_w, "within-speaker covariance")?;
        if symmetrize(&self.sigma_w).cholesky().is_none() {
            return Err(Error::Conditioning(
                "within-speaker covariance is not positive definite".into(),
            ));
        }
        let min_eig = SymmetricEigen::new(symmetrize(&self.sigma_b))
            .eigenvalues
            .min();
        if min_eig < -1e-9 * scale_of(&self.sigma_b) {
            return Err(Error::Domain(format!(
                "between-speaker covariance is not PSD (min eigenvalue {min_eig})"
            )));
        }
        Ok(())
    }

    /// Precomputes the quadratic-form scoring terms.
    pub fn scorer(&self) -> Result<PldaScorer> {
        let f = self.dim();
        let total = symmetrize(&(&self.sigma_b + &self.sigma_w));
        let t_chol = total
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Conditioning("total covariance".into()))?;
        let mut joint = DMatrix::zeros(2 * f, 2 * f);
        joint.view_mut((0, 0), (f, f)).copy_from(&total);
        joint.view_mut((f, f), (f, f)).copy_from(&total);
        joint.view_mut((0, f), (f, f)).copy_from(&self.sigma_b);
        joint.view_mut((f, 0), (f, f)).copy_from(&self.sigma_b);
        let j_chol = symmetrize(&joint)
            .cholesky()
            .ok_or_else(|| Error::Conditioning("same-speaker joint covariance".into()))?;
        let j_inv = j_chol.inverse();
        let a = j_inv.view((0, 0), (f, f)).into_owned();
        let c = j_inv.view((0, f), (f, f)).into_owned();
        Ok(PldaScorer {
            mu: self.mu.clone(),
            quad: symmetrize(&(t_chol.inverse() - a)),
            cross: symmetrize(&(-c)),
            constant: log_det(&t_chol) - 0.5 * log_det(&j_chol),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let f = self.dim();
        let mut out = Vec::with_capacity(11 + 8 * (f + 2 * f * f));
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(f as i32).to_le_bytes());
        let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
        self.mu.iter().for_each(|&x| put(x));
        for m in [&self.sigma_b, &self.sigma_w] {
            for r in 0..f {
                for c in 0..f {
                    put(m[(r, c)]);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "missing PLDA model magic".into(),
            });
        }
        let dim_at = MODEL_MAGIC.len();
        let raw: [u8; 4] = bytes
            .get(dim_at..dim_at + 4)
            .and_then(|b| b.try_into().ok())
            .ok_or(Error::Format {
                offset: dim_at as u64,
                msg: "truncated model dimension".into(),
            })?;
        let f = i32::from_le_bytes(raw);
        if f <= 0 {
            return Err(Error::Format {
                offset: dim_at as u64,
                msg: format!("model dimension must be positive, found {f}"),
            });
        }
        let f = f as usize;
        let body = dim_at + 4;
        let expected = body + 8 * (f + 2 * f * f);
        if bytes.len() != expected {
            return Err(Error::Format {
                offset: bytes.len().min(expected) as u64,
                msg: format!(
                    "model file should be {expected} bytes, found {}",
                    bytes.len()
                ),
            });
        }
        let vals: Vec<f64> = bytes[body..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mu = DVector::from_column_slice(&vals[..f]);
        let sb = DMatrix::from_row_slice(f, f, &vals[f..f + f * f]);
        let sw = DMatrix::from_row_slice(f, f, &vals[f + f * f..]);
        Self::new(mu, sb, sw)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Precomputed PLDA log-likelihood-ratio scorer.
///
/// With `a = e - mu` and `b = t - mu`:
/// `llr = 1/2 (a'Qa + b'Qb) + a'Pb + const`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaScorer {
    mu: DVector<f64>,
    quad: DMatrix<f64>,
    cross: DMatrix<f64>,
    constant: f64,
}

impl PldaScorer {
    pub fn llr(&self, enroll: &[f64], test: &[f64]) -> Result<f64> {
        let f = self.mu.len();
        if enroll.len() != f || test.len() != f {
            return Err(Error::Data(format!(
                "PLDA expects dimension {f}, got {} and {}",
                enroll.len(),
                test.len()
            )));
        }
        let a = DVector::from_column_slice(enroll) - &self.mu;
        let b = DVector::from_column_slice(test) - &self.mu;
        let qa = a.dot(&(&self.quad * &a));
        let qb = b.dot(&(&self.quad * &b));
        let pab = b.dot(&(&self.cross * &a));
        let pba = a.dot(&(&self.cross * &b));
        // Each pair of terms is summed commutatively, so swapping enroll and
        // test gives a bitwise identical score.
        let llr = 0.5 * (qa + qb) + 0.5 * (pab + pba) + self.constant;
        if !llr.is_finite() {
            return Err(Error::Numeric("non-finite PLDA score".into()));
        }
        Ok(llr)
    }
}

/// One-shot LLR; prefer [`PldaModel::scorer`] when scoring many pairs.
pub fn plda_llr(model: &PldaModel, enroll: &[f64], test: &[f64]) -> Result<f64> {
    model.scorer()?.llr(enroll, test)
}

struct SpeakerStats {
    n: usize,
    mean: DVector<f64>,
}

struct TrainingData {
    speakers: Vec<SpeakerStats>,
    /// Sum over speakers of the scatter around each speaker mean.
    within_scatter: DMatrix<f64>,
    count: usize,
    dim: usize,
}

fn gather(set: &EmbeddingSet, spk: &SpeakerMap) -> Result<TrainingData> {
    let dim = set.dim();
    let mut groups: IndexMap<&str, Vec<DVector<f64>>> = IndexMap::new();
    for (utt, v) in set.iter() {
        let s = spk.speaker(utt).ok_or_else(|| Error::Lookup {
            key: utt.to_owned(),
            side: "utt2spk".into(),
        })?;
        groups
            .entry(s)
            .or_default()
            .push(DVector::from_iterator(dim, v.iter().map(|&x| f64::from(x))));
    }
    if groups.len() < 2 {
        return Err(Error::Data(format!(
            "PLDA training needs at least 2 speakers, found {}",
            groups.len()
        )));
    }
    let mut within_scatter = DMatrix::zeros(dim, dim);
    let mut speakers = Vec::with_capacity(groups.len());
    for xs in groups.values() {
        let n = xs.len();
        let mean = xs.iter().fold(DVector::zeros(dim), |a, x| a + x) / n as f64;
        for x in xs {
            let d = x - &mean;
            within_scatter += &d * d.transpose();
        }
        speakers.push(SpeakerStats { n, mean });
    }
    Ok(TrainingData {
        speakers,
        within_scatter,
        count: set.len(),
        dim,
    })
}

fn log_likelihood_of(exec: Execution, model: &PldaModel, data: &TrainingData) -> Result<f64> {
    let f = data.dim as f64;
    let w_chol = symmetrize(&model.sigma_w)
        .cholesky()
        .ok_or_else(|| Error::Conditioning("within-speaker covariance".into()))?;
    let per_speaker = par::try_map(exec, &data.speakers, |s| {
        let m = symmetrize(&(&model.sigma_b + &model.sigma_w / s.n as f64));
        let c = m
            .cholesky()
            .ok_or_else(|| Error::Conditioning("speaker-mean covariance".into()))?;
        let d = &s.mean - &model.mu;
        let q = d.dot(&c.solve(&d));
        Ok::<_, Error>(-0.5 * (f * LN_2PI + log_det(&c) + q) - 0.5 * f * (s.n as f64).ln())
    })?;
    let between: f64 = per_speaker.iter().sum();
    let dof = (data.count - data.speakers.len()) as f64;
    let within_quad = (w_chol.inverse() * &data.within_scatter).trace();
    Ok(between - 0.5 * dof * (f * LN_2PI + log_det(&w_chol)) - 0.5 * within_quad)
}

/// Total log-likelihood of labeled data under `model`.
pub fn plda_log_likelihood(model: &PldaModel, set: &EmbeddingSet, spk: &SpeakerMap) -> Result<f64> {
    log_likelihood_of(Execution::default(), model, &gather(set, spk)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PldaTraining {
    pub model: PldaModel,
    /// Log-likelihood of the initial model followed by one value per EM
    /// iteration.
    pub log_likelihood: Vec<f64>,
}

fn initial_model(set: &EmbeddingSet, data: &TrainingData) -> Result<PldaModel> {
    let dim = data.dim;
    let n = set.len() as f64;
    let xs: Vec<DVector<f64>> = set
        .iter()
        .map(|(_, v)| DVector::from_iterator(dim, v.iter().map(|&x| f64::from(x))))
        .collect();
    let mu = xs.iter().fold(DVector::zeros(dim), |a, x| a + x) / n;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in &xs {
        let d = x - &mu;
        cov += &d * d.transpose();
    }
    cov /= n;
    let tr = cov.trace();
    let eps = if tr > 0.0 {
        1e-6 * tr / dim as f64
    } else {
        1e-6
    };
    let half = symmetrize(&(cov * 0.5 + DMatrix::identity(dim, dim) * eps));
    PldaModel::new(mu, half.clone(), half)
}

/// Runs `iters` EM iterations from the data-driven initialization (mean of
/// the data, both covariances half the total covariance plus a small ridge).
pub fn plda_train(set: &EmbeddingSet, spk: &SpeakerMap, iters: usize) -> Result<PldaTraining> {
    plda_train_with(Execution::default(), set, spk, iters)
}

pub fn plda_train_with(
    exec: Execution,
    set: &EmbeddingSet,
    spk: &SpeakerMap,
    iters: usize,
) -> Result<PldaTraining> {
    let data = gather(set, spk)?;
    let dim = data.dim;
    let mut model = initial_model(set, &data)?;
    let mut trace = vec![log_likelihood_of(exec, &model, &data)?];

    for _ in 0..iters {
        // E-step: posterior of each speaker factor given its utterances,
        // mean K (xbar - mu) and covariance Sb - K Sb with K = Sb (Sb + Sw/n)^-1.
        let posteriors = par::try_map(exec, &data.speakers, |s| {
            let m = symmetrize(&(&model.sigma_b + &model.sigma_w / s.n as f64));
            let c = m
                .cholesky()
                .ok_or_else(|| Error::Conditioning("speaker-mean covariance".into()))?;
            let k = c.solve(&model.sigma_b).transpose();
            let mean = &k * (&s.mean - &model.mu);
            let cov = symmetrize(&(&model.sigma_b - &k * &model.sigma_b));
            Ok::<_, Error>((mean, cov))
        })?;

        // M-step, accumulated in speaker order.
        let n_total = data.count as f64;
        let mut mu = DVector::zeros(dim);
        for (s, (m, _)) in data.speakers.iter().zip(&posteriors) {
            mu += (&s.mean - m) * s.n as f64;
        }
        mu /= n_total;

        let mut sb = DMatrix::zeros(dim, dim);
        let mut sw = data.within_scatter.clone();
        for (s, (m, cov)) in data.speakers.iter().zip(&posteriors) {
            sb += cov + m * m.transpose();
            let r = &s.mean - &mu - m;
            sw += (&r * r.transpose() + cov) * s.n as f64;
        }
        sb /= data.speakers.len() as f64;
        sw /= n_total;

        let (sw, _) = conditioned(&sw, "within-speaker covariance")?;
        model = PldaModel {
            mu,
            sigma_b: symmetrize(&sb),
            sigma_w: sw,
        };
        let ll = log_likelihood_of(exec, &model, &data)?;
        if !ll.is_finite() {
            return Err(Error::Numeric("non-finite PLDA log-likelihood".into()));
        }
        trace.push(ll);
    }
    Ok(PldaTraining {
        model,
        log_likelihood: trace,
    })
}

/// Projects a symmetric matrix onto the PSD cone by zeroing negative
/// eigenvalues.
fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

/// Unsupervised adaptation toward an unlabeled domain: the mean moves to the
/// adaptation mean and the PSD part of the excess covariance
/// `C_adapt - (Sb + Sw)` is split between the two covariances.
pub fn plda_adapt(
    model: &PldaModel,
    adapt: &EmbeddingSet,
    alpha: f64,
    split: f64,
) -> Result<PldaModel> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&split) {
        return Err(Error::InvalidArgument(format!(
            "alpha and split must lie in [0, 1], got {alpha} and {split}"
        )));
    }
    if adapt.is_empty() {
        return Err(Error::Data("adaptation set is empty".into()));
    }
    let dim = model.dim();
    if adapt.dim() != dim {
        return Err(Error::Dimension {
            key: "adaptation set".into(),
            expected: dim,
            found: adapt.dim(),
        });
    }
    let xs: Vec<DVector<f64>> = adapt
        .iter()
        .map(|(_, v)| DVector::from_iterator(dim, v.iter().map(|&x| f64::from(x))))
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().fold(DVector::zeros(dim), |a, x| a + x) / n;
    let mut cov = DMatrix::zeros(dim, dim);
    for x in &xs {
        let d = x - &mean;
        cov += &d * d.transpose();
    }
    cov /= n;
    let excess = clip_psd(&(cov - &model.sigma_b - &model.sigma_w));
    let sigma_b = symmetrize(&(&model.sigma_b + &excess * (alpha * split)));
    let sigma_w = symmetrize(&(&model.sigma_w + &excess * (alpha * (1.0 - split))));
    PldaModel::new(mean, sigma_b, sigma_w)
}
