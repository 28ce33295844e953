use std::path::Path;

use crate::error::{Error, Result};
use crate::kaldi_io;
use crate::types::{widen, EmbeddingSet};

/// Key under which a mean vector is stored in its archive.
pub const MEAN_KEY: &str = "mean";

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine_score(enroll: &[f64], test: &[f64]) -> Result<f64> {
    if enroll.len() != test.len() {
        return Err(Error::Data(format!(
            "cosine of vectors with dims {} and {}",
            enroll.len(),
            test.len()
        )));
    }
    let (ne, nt) = (norm(enroll), norm(test));
    if ne == 0.0 || nt == 0.0 {
        return Err(Error::Domain("cosine score of a zero vector".into()));
    }
    Ok((dot(enroll, test) / (ne * nt)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    pub mean: Vec<f64>,
    pub count: usize,
}

pub fn compute_mean(set: &EmbeddingSet) -> Result<MeanVector> {
    if set.is_empty() {
        return Err(Error::Data("mean of an empty embedding set".into()));
    }
    let mut acc = vec![0.0; set.dim()];
    for (_, v) in set.iter() {
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += f64::from(x);
        }
    }
    let n = set.len() as f64;
    Ok(MeanVector {
        mean: acc.into_iter().map(|a| a / n).collect(),
        count: set.len(),
    })
}

pub fn apply_mean_norm(set: &EmbeddingSet, mean: &MeanVector) -> Result<EmbeddingSet> {
    if !set.is_empty() && set.dim() != mean.mean.len() {
        return Err(Error::Dimension {
            key: MEAN_KEY.into(),
            expected: set.dim(),
            found: mean.mean.len(),
        });
    }
    set.map_vectors(|v| v.iter().zip(&mean.mean).map(|(x, m)| x - m).collect())
}

/// Scales every vector to norm `sqrt(dim)`.
pub fn length_norm(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let target = (set.dim() as f64).sqrt();
    let mut out = EmbeddingSet::new();
    for (k, v) in set.iter() {
        let v = widen(v);
        let n = norm(&v);
        if n == 0.0 {
            return Err(Error::Domain(format!(
                "cannot length-normalize zero vector '{k}'"
            )));
        }
        out.insert_f64(k, &v.iter().map(|x| x * target / n).collect::<Vec<_>>())?;
    }
    Ok(out)
}

pub fn write_mean(mean: &MeanVector, path: impl AsRef<Path>) -> Result<()> {
    let mut set = EmbeddingSet::new();
    set.insert_f64(MEAN_KEY, &mean.mean)?;
    kaldi_io::write_ark(&set, path, None)
}

/// Reads the first vector of a mean archive. The stored vector is `f32`, so
/// the count is not recoverable and is reported as 0.
pub fn read_mean(path: impl AsRef<Path>) -> Result<MeanVector> {
    let set = kaldi_io::load_embeddings(path)?;
    let (_, v) = set
        .iter()
        .next()
        .ok_or_else(|| Error::Data("mean archive is empty".into()))?;
    Ok(MeanVector {
        mean: widen(v),
        count: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert!((cosine_score(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let v = cosine_score(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            cosine_score(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mean_normalization_examples() {
        let mut s = EmbeddingSet::new();
        s.insert("a", vec![1.0, 0.0]).unwrap();
        s.insert("b", vec![3.0, 0.0]).unwrap();
        let m = compute_mean(&s).unwrap();
        assert_eq!(m.mean, vec![2.0, 0.0]);
        assert_eq!(m.count, 2);
        let n = apply_mean_norm(&s, &m).unwrap();
        assert_eq!(n.get("a").unwrap(), &[-1.0, 0.0]);
        assert_eq!(n.get("b").unwrap(), &[1.0, 0.0]);

        let zero = MeanVector {
            mean: vec![0.0, 0.0],
            count: 1,
        };
        assert_eq!(apply_mean_norm(&s, &zero).unwrap(), s);
        let wrong = MeanVector {
            mean: vec![0.0; 3],
            count: 1,
        };
        assert!(matches!(
            apply_mean_norm(&s, &wrong),
            Err(Error::Dimension { .. })
        ));
        assert!(compute_mean(&EmbeddingSet::new()).is_err());
    }

    #[test]
    fn length_norm_scales_to_sqrt_dim() {
        let mut s = EmbeddingSet::new();
        s.insert("a", vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        let n = length_norm(&s).unwrap();
        assert_eq!(n.get("a").unwrap(), &[1.2, 1.6, 0.0, 0.0]);
    }

    #[test]
    fn mean_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mean.ark");
        let m = MeanVector {
            mean: vec![0.5, -1.25],
            count: 9,
        };
        write_mean(&m, &p).unwrap();
        assert_eq!(read_mean(&p).unwrap().mean, m.mean);
    }
}
